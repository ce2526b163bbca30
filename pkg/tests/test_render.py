import pytest

from conftest import ring_sites
from pinball.configuration import Configuration
from pinball.enhancement import load_pattern
from pinball.errors import InvalidArgumentError
from pinball.events import surrounding_circuit_exact
from pinball.render import RenderSpec, render_svg
from pinball.tracer import trace


def test_lattice_only_is_stable():
    c = Configuration.filled(3, False)
    spec = RenderSpec(layers=("lattice",), scale=10)
    svg = render_svg(c, spec=spec)
    assert svg == render_svg(c, spec=spec)
    assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>\n<svg ')
    assert 'version="1.1"' in svg
    assert svg.count("<line ") == 7 * 7
    assert svg.rstrip().endswith("</svg>")


def test_mirror_glyphs():
    c = Configuration.from_sites(2, [(0, 0), (1, 0)])
    svg = render_svg(c, spec=RenderSpec(layers=("mirrors",), scale=10))
    # (0,0) は "/"、(1,0) は "\"（SVG では y が下向き）
    assert '<line x1="-5" y1="5" x2="5" y2="-5"' in svg
    assert '<line x1="5" y1="-5" x2="15" y2="5"' in svg


def test_loop_trajectory_is_a_square(loop_config):
    t = trace(loop_config)
    svg = render_svg(loop_config, trajectory=t, spec=RenderSpec(layers=("trajectory",), scale=20))
    assert '<polygon points="0,0 20,0 20,20 0,20"' in svg


def test_escaped_trajectory_leaves_extent():
    c = Configuration.filled(2, False)
    t = trace(c)
    svg = render_svg(c, trajectory=t, spec=RenderSpec(layers=("trajectory",), scale=1))
    assert '<polyline points="0,0 1,0 2,0 3,0"' in svg


def test_circuit_witness_layer():
    c = Configuration.from_sites(5, ring_sites(2))
    w = surrounding_circuit_exact(c, 2)
    svg = render_svg(c, witness=w, spec=RenderSpec(layers=("circuit_witness",), scale=10))
    assert '<g id="circuit_witness">' in svg
    assert svg.count("<polygon ") == 1


def test_pattern_and_region_layers():
    g = load_pattern("default", validate=False)
    c = Configuration.from_sites(6, g.closed_sites)
    spec = RenderSpec(layers=("pattern_matches", "regions"), scale=10)
    svg = render_svg(c, pattern=g, region_n=2, spec=spec)
    assert svg.count("<circle ") == 1
    assert svg.count("<polygon ") == 2


def test_palette_from_settings():
    spec = RenderSpec.from_settings(layers=["mirrors"])
    assert spec.scale == 20
    assert spec.palette["mirrors"] == "#1f3a93"


def test_inconsistent_extent():
    t = trace(Configuration.filled(5, False))
    with pytest.raises(InvalidArgumentError):
        render_svg(Configuration.filled(3, False), trajectory=t)


def test_unknown_layer():
    with pytest.raises(InvalidArgumentError):
        RenderSpec(layers=("lattice", "heatmap"))
    with pytest.raises(InvalidArgumentError):
        RenderSpec(scale=0)
