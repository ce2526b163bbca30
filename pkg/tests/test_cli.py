import polars as pl
import pytest

from pinball.cli import main
from pinball.configuration import GENERATOR_ID, Configuration
from pinball.enhancement import Pattern, save_pattern
from pinball.geometry import Site


@pytest.fixture
def loop_file(tmp_path):
    path = tmp_path / "omega.txt"
    assert main(["sample", "--p", "1", "--extent", "8", "--seed", "7", "--out", str(path)]) == 0
    return path


def test_sample_then_trace(tmp_path, loop_file):
    out = tmp_path / "loop.traj"
    svg = tmp_path / "loop.svg"
    assert main(["trace", "--config", str(loop_file), "--out", str(out), "--svg", str(svg)]) == 0
    lines = out.read_text().splitlines()
    assert "# status closed" in lines
    assert [l for l in lines if not l.startswith("#")] == ["0 0 E", "1 0 S", "1 -1 W", "0 -1 N"]
    assert svg.read_text().startswith("<?xml")


def test_sample_is_byte_stable(tmp_path):
    args = ["sample", "--p", "0.5", "--extent", "6", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a.txt")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.txt")]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_estimate_csv(tmp_path):
    csv = tmp_path / "est.csv"
    code = main([
        "estimate", "--event", "Aprime", "--p", "0", "--n", "8",
        "--trials", "10", "--seed", "1", "--csv", str(csv),
    ])
    assert code == 0
    frame = pl.read_csv(csv)
    assert frame.height == 1
    assert frame["estimate"][0] == 0.0


def test_estimate_workers_byte_identical(tmp_path):
    outputs = []
    for workers in ("1", "2"):
        csv = tmp_path / f"w{workers}.csv"
        code = main([
            "--set", "montecarlo.chunk_size=4",
            "estimate", "--event", "A", "--p", "0.5", "--n", "4",
            "--trials", "16", "--seed", "2", "--csv", str(csv), "--workers", workers,
        ])
        assert code == 0
        outputs.append(csv.read_bytes())
    assert outputs[0] == outputs[1]


def test_estimate_fit_csv(tmp_path):
    fit_csv = tmp_path / "fit.csv"
    code = main([
        "estimate", "--event", "E", "--p", "0.6", "--n", "2", "3", "4", "5",
        "--trials", "200", "--seed", "11", "--fit-csv", str(fit_csv),
    ])
    assert code == 0
    frame = pl.read_csv(fit_csv)
    assert frame.columns == ["c_hat", "intercept", "r2", "points_used"]
    assert frame["c_hat"][0] > 0


def test_enhance_with_diff(tmp_path):
    config = tmp_path / "omega.txt"
    Configuration.from_sites(6, [(1, 0), (1, -3), (0, -3)]).save(config)
    out, diff = tmp_path / "tilde.txt", tmp_path / "diff.txt"
    code = main(["enhance", "--config", str(config), "--out", str(out), "--diff", str(diff)])
    assert code == 0
    assert diff.read_text() == "0 0\n"
    assert Configuration.load(out).is_closed((0, 0))


def test_event_and_render(tmp_path):
    config = tmp_path / "all.txt"
    Configuration.filled(5, True).save(config)
    witness = tmp_path / "acirc.witness"
    assert main(["event", "--config", str(config), "--event", "Acirc", "--n", "2", "--out", str(witness)]) == 0
    assert "# holds true" in witness.read_text()

    svg = tmp_path / "acirc.svg"
    code = main([
        "render", "--config", str(config), "--witness", str(witness),
        "--pattern", "default", "--n", "2", "--out", str(svg),
    ])
    assert code == 0
    text = svg.read_text()
    assert '<g id="circuit_witness">' in text
    assert '<g id="regions"' in text


def test_verify_exit_codes(tmp_path):
    csv = tmp_path / "verify.csv"
    code = main([
        "verify", "--p", "0", "--n", "101", "--trials", "2", "--seed", "3", "--csv", str(csv),
    ])
    assert code == 0
    assert pl.read_csv(csv).height == 2


def test_verify_core_radius_is_fixed(tmp_path):
    # 中心の半径は設定で小さくできない
    csv = tmp_path / "verify.csv"
    code = main([
        "--set", "montecarlo.core_radius=5",
        "verify", "--p", "1", "--n", "6", "--trials", "2", "--seed", "3", "--csv", str(csv),
    ])
    assert code == 2
    assert not csv.exists()


def test_negative_seed_is_usage_error(tmp_path):
    csv = tmp_path / "est.csv"
    code = main([
        "estimate", "--event", "A", "--p", "0.5", "--n", "4",
        "--trials", "4", "--seed", "-1", "--csv", str(csv),
    ])
    assert code == 2
    assert not csv.exists()
    assert main(["sample", "--p", "0.5", "--extent", "3", "--seed", "-5", "--out", str(tmp_path / "x")]) == 2


def test_fit_csv_needs_single_p_before_running(tmp_path):
    csv, fit_csv = tmp_path / "est.csv", tmp_path / "fit.csv"
    code = main([
        "estimate", "--event", "E", "--p", "0.5", "0.6", "--n", "2", "3", "4",
        "--trials", "4", "--seed", "1", "--csv", str(csv), "--fit-csv", str(fit_csv),
    ])
    assert code == 2
    assert not csv.exists()
    assert not fit_csv.exists()


def test_pattern_check(tmp_path):
    assert main(["pattern", "check"]) == 0
    bad = Pattern("adversarial", frozenset({(0, 0)}), frozenset({(1, 1), (2, 0)}), Site(1, 1))
    path = save_pattern(bad, tmp_path / "adv.pattern")
    assert main(["pattern", "check", "--pattern", str(path)]) == 1


def test_pattern_search_requires_radius():
    assert main(["pattern", "search"]) == 2


def test_usage_errors(tmp_path, capsys):
    assert main(["sample", "--p", "1.5", "--extent", "3", "--seed", "1", "--out", str(tmp_path / "x")]) == 2
    assert main(["trace", "--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "t")]) == 2
    assert "missing.txt" in capsys.readouterr().err

    bad = tmp_path / "bad.txt"
    bad.write_text("not a configuration\n")
    assert main(["trace", "--config", str(bad), "--out", str(tmp_path / "t")]) == 2
    assert main(["event", "--config", str(bad), "--event", "B", "--n", "2"]) == 2
    assert main([]) == 2


def test_insufficient_extent_is_usage_error(tmp_path):
    config = tmp_path / "small.txt"
    Configuration.filled(3, True).save(config)
    assert main(["event", "--config", str(config), "--event", "Acirc", "--n", "4"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert GENERATOR_ID in out
    assert "pinball-configuration v1" in out
