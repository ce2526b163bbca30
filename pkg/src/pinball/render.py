"""配置・軌道・証拠の静的 SVG 出力

座標は (a, b) -> (scale*a, -scale*b)。数値は固定の書式で出すので、
同じ入力からは同じバイト列になる。
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .configuration import Configuration
from .enhancement import Pattern, match_pattern
from .errors import InvalidArgumentError
from .events import EventResult
from .geometry import edge_for_site
from .settings import get_settings
from .tracer import Trajectory

LAYERS = ("lattice", "mirrors", "trajectory", "circuit_witness", "pattern_matches", "regions")


def _num(x: float) -> str:
    text = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


@dataclass
class RenderSpec:
    layers: Tuple[str, ...] = LAYERS
    scale: float = 20.0
    palette: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        unknown = [name for name in self.layers if name not in LAYERS]
        if unknown:
            raise InvalidArgumentError(f"不明なレイヤーです: {', '.join(unknown)}")
        if self.scale <= 0:
            raise InvalidArgumentError(f"scale は正の値が必要です: {self.scale}")

    @classmethod
    def from_settings(cls, layers: Optional[Sequence[str]] = None, scale: Optional[float] = None) -> "RenderSpec":
        cfg = get_settings().render
        return cls(
            layers=tuple(layers) if layers else LAYERS,
            scale=float(scale if scale is not None else cfg.scale),
            palette={k: str(v) for k, v in cfg.palette.items()},
        )


class SvgCanvas:
    """SVG の要素を文字列として溜めておき、最後に連結する"""

    def __init__(self, spec: RenderSpec, extent: int):
        self.spec = spec
        self.extent = extent
        self.elements: List[str] = []

    def xy(self, a: float, b: float) -> str:
        s = self.spec.scale
        return f"{_num(s * a)},{_num(-s * b)}"

    def color(self, layer: str) -> str:
        return self.spec.palette.get(layer, "#000000")

    def open_group(self, layer: str, **attrs):
        extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        self.elements.append(f'<g id="{layer}"{extra}>')

    def close_group(self):
        self.elements.append("</g>")

    def line(self, p, q, color: str, width: float):
        s = self.spec.scale
        self.elements.append(
            f'<line x1="{_num(s * p[0])}" y1="{_num(-s * p[1])}" '
            f'x2="{_num(s * q[0])}" y2="{_num(-s * q[1])}" '
            f'stroke="{color}" stroke-width="{_num(width)}"/>'
        )

    def polyline(self, points, color: str, width: float, closed: bool = False):
        tag = "polygon" if closed else "polyline"
        pts = " ".join(self.xy(a, b) for a, b in points)
        self.elements.append(
            f'<{tag} points="{pts}" fill="none" stroke="{color}" stroke-width="{_num(width)}"/>'
        )

    def circle(self, center, r: float, color: str):
        s = self.spec.scale
        self.elements.append(
            f'<circle cx="{_num(s * center[0])}" cy="{_num(-s * center[1])}" r="{_num(r)}" fill="{color}"/>'
        )

    def render(self) -> str:
        s = self.spec.scale
        half = (self.extent + 1) * s
        size = _num(2 * half)
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{size}" height="{size}" viewBox="{_num(-half)} {_num(-half)} {size} {size}">',
        ]
        return "\n".join(head + self.elements + ["</svg>"]) + "\n"


def render_svg(
    config: Configuration,
    trajectory: Optional[Trajectory] = None,
    witness: Optional[EventResult] = None,
    pattern: Optional[Pattern] = None,
    region_n: Optional[int] = None,
    spec: Optional[RenderSpec] = None,
) -> str:
    spec = spec or RenderSpec.from_settings()
    M = config.extent
    if trajectory is not None and any(not config.contains(s) for s in trajectory.visited):
        raise InvalidArgumentError("軌道が配置の範囲外のサイトを含みます")
    if witness is not None and witness.witness:
        if any(abs(u) > M + 1 or abs(v) > M + 1 for u, v in witness.witness):
            raise InvalidArgumentError("証拠が配置の範囲外の頂点を含みます")

    canvas = SvgCanvas(spec, M)
    unit = spec.scale

    for layer in LAYERS:
        if layer not in spec.layers:
            continue
        color = canvas.color(layer)

        if layer == "lattice":
            canvas.open_group(layer)
            # 傾いた格子: 置きうる鏡すべて
            for a in range(-M, M + 1):
                for b in range(-M, M + 1):
                    p, q = edge_for_site((a, b))
                    canvas.line(p, q, color, unit * 0.03)
            canvas.close_group()

        elif layer == "mirrors":
            canvas.open_group(layer)
            for s in config.closed_sites():
                p, q = edge_for_site(s)
                canvas.line(p, q, color, unit * 0.08)
            canvas.close_group()

        elif layer == "trajectory" and trajectory is not None:
            canvas.open_group(layer)
            points = [tuple(s.site) for s in trajectory.states]
            if trajectory.closed:
                canvas.polyline(points, color, unit * 0.1, closed=True)
            else:
                # 脱出した場合は範囲の外へ一歩分のばす
                last = trajectory.states[-1]
                dx, dy = last.dir.unit
                points.append((last.site.a + dx, last.site.b + dy))
                canvas.polyline(points, color, unit * 0.1)
            canvas.close_group()

        elif layer == "circuit_witness" and witness is not None and witness.witness:
            canvas.open_group(layer)
            canvas.polyline(
                witness.witness, color, unit * 0.12, closed=witness.witness_kind == "circuit"
            )
            canvas.close_group()

        elif layer == "pattern_matches" and pattern is not None:
            canvas.open_group(layer)
            for red in match_pattern(config, pattern).red_sites(pattern):
                canvas.circle(red, unit * 0.25, color)
            canvas.close_group()

        elif layer == "regions" and region_n is not None:
            canvas.open_group(layer, stroke_dasharray=_num(unit * 0.2))
            for m in (region_n, 2 * region_n):
                # |x+y-1| <= m, |x-y| <= m の四隅
                corners = [
                    ((s + d + 1) / 2, (s - d + 1) / 2)
                    for s, d in ((m, m), (m, -m), (-m, -m), (-m, m))
                ]
                canvas.polyline(corners, color, unit * 0.05, closed=True)
            canvas.close_group()

    return canvas.render()
