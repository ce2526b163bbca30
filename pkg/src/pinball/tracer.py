"""光線の決定論的な運動

状態 RayState は「直前に出発したサイト」と「出ていく向き」の組。
原点の鏡は出発時には作用せず、戻ってきたときにだけ作用する。
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import FrozenSet, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .configuration import Configuration
from .errors import EscapeError, FormatError, InvalidArgumentError, TracerInvariantError
from .fileio import atomic_write_text, read_lines
from .geometry import DIRECTIONS, DX, DY, REFLECT, Direction, Site
from .settings import get_settings

logger = logging.getLogger(__name__)

FORMAT_HEADER = "# pinball-trajectory v1"


class RayState(NamedTuple):
    site: Site
    dir: Direction


ORIGIN_EAST = RayState(Site(0, 0), Direction.E)


class TraceStatus(str, Enum):
    CLOSED = "closed"
    ESCAPED = "escaped"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class Trajectory:
    start: RayState
    states: Tuple[RayState, ...]
    status: TraceStatus
    visited: FrozenSet[Site] = field(init=False)
    linf_diameter: int = field(init=False)
    containment_radius: int = field(init=False)

    def __post_init__(self):
        if not self.states:
            raise InvalidArgumentError("状態列が空の軌道は作れません")
        diameter, radius = _metrics([s.site for s in self.states])
        object.__setattr__(self, "visited", frozenset(s.site for s in self.states))
        object.__setattr__(self, "linf_diameter", diameter)
        object.__setattr__(self, "containment_radius", radius)

    @property
    def closed(self) -> bool:
        return self.status is TraceStatus.CLOSED

    @property
    def steps(self) -> int:
        return len(self.states) if self.closed else len(self.states) - 1

    def within(self, m: int) -> bool:
        """訪れたサイトがすべて Q_m に入るか"""
        return self.containment_radius <= m


def _metrics(sites) -> Tuple[int, int]:
    pts = np.asarray(sites, dtype=np.int64).reshape(-1, 2)
    a, b = pts[:, 0], pts[:, 1]
    diameter = int(max(a.max() - a.min(), b.max() - b.min()))
    radius = int(np.maximum(np.abs(a + b - 1), np.abs(a - b)).max())
    return diameter, radius


def trajectory_metrics(t: Trajectory) -> Tuple[int, int, bool]:
    """(ℓ∞ 直径, L ⊂ Q_m となる最小の m, 閉じているか)"""
    if not t.states:
        raise InvalidArgumentError("状態列が空です")
    return t.linf_diameter, t.containment_radius, t.closed


def step(s: RayState, c: Configuration) -> RayState:
    """一歩進める。範囲外に出るときは EscapeError"""
    (a, b), d = s
    na, nb = a + DX[d], b + DY[d]
    M = c.extent
    if abs(na) > M or abs(nb) > M:
        raise EscapeError(s)
    if c.closed[na + M, nb + M]:
        d = REFLECT[(na - nb) & 1][d]
    return RayState(Site(na, nb), DIRECTIONS[d])


def default_max_steps(c: Configuration) -> int:
    return int(get_settings().tracer.budget_factor) * (2 * c.extent + 1) ** 2


def trace(
    c: Configuration,
    start: RayState = ORIGIN_EAST,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """開始状態に戻る・脱出する・予算を使い切るまで追跡する"""
    start = RayState(Site(*start[0]), Direction(start[1]))
    if not c.contains(start.site):
        raise InvalidArgumentError(f"開始サイト {tuple(start.site)} は範囲外です")
    if max_steps is None:
        max_steps = default_max_steps(c)
    if max_steps < 1:
        raise InvalidArgumentError(f"max_steps は 1 以上が必要です: {max_steps}")

    M = c.extent
    side = 2 * M + 1
    closed = c.closed.tobytes()
    a, b = start.site
    d = int(start.dir)
    start_key = ((a + M) * side + (b + M)) * 4 + d

    states = [start]
    seen = {start_key}
    steps = 0
    while True:
        if steps >= max_steps:
            status = TraceStatus.BUDGET_EXCEEDED
            break
        na, nb = a + DX[d], b + DY[d]
        if na > M or na < -M or nb > M or nb < -M:
            status = TraceStatus.ESCAPED
            break
        idx = (na + M) * side + (nb + M)
        if closed[idx]:
            d = REFLECT[(na - nb) & 1][d]
        a, b = na, nb
        steps += 1
        key = idx * 4 + d
        if key == start_key:
            status = TraceStatus.CLOSED
            break
        if key in seen:
            raise TracerInvariantError(f"開始状態以外の状態が繰り返されました: ({a}, {b}, {DIRECTIONS[d].name})")
        seen.add(key)
        states.append(RayState(Site(a, b), DIRECTIONS[d]))

    logger.debug("trace: status=%s steps=%d", status.value, steps)
    return Trajectory(start=start, states=tuple(states), status=status)


def reverse(c: Configuration, t: Trajectory) -> Trajectory:
    """時間反転した軌道

    閉じた軌道は (site_0, 最後の向きの逆) から追跡し直す。
    脱出した軌道は出口から同じ歩数だけ戻る。
    """
    if t.closed:
        return trace(c, RayState(t.states[0].site, t.states[-1].dir.opposite()))
    if len(t.states) < 2:
        raise InvalidArgumentError("反転するには 1 歩以上の軌道が必要です")
    last = t.states[-1]
    start = RayState(last.site, t.states[-2].dir.opposite())
    return trace(c, start, max_steps=len(t.states) - 1)


# --- ダンプ形式 ---

def format_trajectory(t: Trajectory) -> str:
    lines = [
        FORMAT_HEADER,
        f"# status {t.status.value}",
        f"# steps {t.steps}",
        f"# linf_diameter {t.linf_diameter}",
        f"# containment_radius {t.containment_radius}",
    ]
    lines.extend(f"{s.site.a} {s.site.b} {s.dir.name}" for s in t.states)
    return "\n".join(lines) + "\n"


def dump_trajectory(t: Trajectory, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, format_trajectory(t))


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    lines = read_lines(path)
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise FormatError("ヘッダがありません", line=1, path=path)

    status: Optional[TraceStatus] = None
    states: List[RayState] = []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            parts = text[1:].split()
            if len(parts) == 2 and parts[0] == "status":
                try:
                    status = TraceStatus(parts[1])
                except ValueError as e:
                    raise FormatError(f"不明な status です: {parts[1]}", line=lineno, path=path) from e
            continue
        parts = text.split()
        try:
            a, b, name = int(parts[0]), int(parts[1]), parts[2]
            states.append(RayState(Site(a, b), Direction[name]))
        except (IndexError, ValueError, KeyError) as e:
            raise FormatError(f"'a b dir' が必要です: {text!r}", line=lineno, path=path) from e

    if status is None:
        raise FormatError("'# status' がありません", path=path)
    if not states:
        raise FormatError("状態がありません", path=path)
    return Trajectory(start=states[0], states=tuple(states), status=status)
