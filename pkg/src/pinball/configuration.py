"""鏡配置 ω の生成・保持・合成・保存

各サイトの一様乱数は (seed, stream_index, a, b) だけで決まる（カウンタ方式）。
そのため p を変えても範囲 M を変えても同じ乱数を共有でき、
p1 <= p2 なら closed(p1) ⊆ closed(p2) が成り立つ。
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import FormatError, InvalidArgumentError, ResourceLimitError
from .fileio import atomic_write_text, read_lines
from .geometry import Site, edge_inside_q, site_grid
from .settings import get_settings

logger = logging.getLogger(__name__)

GENERATOR_ID = "splitmix64-site-v1"
FORMAT_HEADER = "# pinball-configuration v1"

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


class Provenance(str, Enum):
    SAMPLED = "sampled"
    ENHANCED = "enhanced"
    HYBRID = "hybrid"
    EXPLICIT = "explicit"


# --- splitmix64 ---

def _mix64_int(x: int) -> int:
    z = (x + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def _zigzag(values: np.ndarray) -> np.ndarray:
    values = values.astype(np.int64)
    return np.where(values >= 0, 2 * values, -2 * values - 1).astype(np.uint64)


def stream_key(seed: int, stream_index: int) -> int:
    return _mix64_int(_mix64_int(seed & MASK64) ^ (stream_index & MASK64))


def _uniform_block(key: int, a_values: np.ndarray, b_values: np.ndarray) -> np.ndarray:
    """u[a, b] in [0, 1) を返す（53 ビット精度）"""
    za = _zigzag(a_values)
    zb = _zigzag(b_values)
    ha = _mix64(np.uint64(key) ^ za)
    h = _mix64(ha[:, None] ^ zb[None, :])
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def check_extent(M: int) -> None:
    if M < 1:
        raise InvalidArgumentError(f"範囲 M は 1 以上が必要です: M={M}")
    max_sites = int(get_settings().sampling.max_sites)
    if (2 * M + 1) ** 2 > max_sites:
        raise ResourceLimitError(
            f"範囲 M={M} は上限を超えます: (2M+1)^2={(2 * M + 1) ** 2} > {max_sites}"
        )


def _check_probability(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"確率 p は [0, 1] の範囲が必要です: p={p}")


@dataclass(frozen=True)
class UniformField:
    extent: int
    u: np.ndarray
    seed: int
    stream_index: int
    generator: str = GENERATOR_ID


def uniforms(M: int, seed: int, stream_index: int = 0) -> UniformField:
    check_extent(M)
    r = np.arange(-M, M + 1)
    u = _uniform_block(stream_key(seed, stream_index), r, r)
    u.setflags(write=False)
    return UniformField(extent=M, u=u, seed=seed, stream_index=stream_index)


def threshold(f: UniformField, p: float) -> "Configuration":
    _check_probability(p)
    return Configuration(
        extent=f.extent,
        closed=f.u < p,
        p=p,
        seed=f.seed,
        stream_index=f.stream_index,
        provenance=Provenance.SAMPLED,
        generator=f.generator,
    )


@dataclass(frozen=True, eq=False)
class Configuration:
    """鏡配置。closed[a+M, b+M] が True のサイトに鏡がある"""

    extent: int
    closed: np.ndarray
    p: Optional[float] = None
    seed: Optional[int] = None
    stream_index: Optional[int] = None
    provenance: Provenance = Provenance.EXPLICIT
    generator: str = GENERATOR_ID
    _side: int = field(init=False, repr=False)

    def __post_init__(self):
        side = 2 * self.extent + 1
        closed = np.ascontiguousarray(self.closed, dtype=bool)
        if closed.shape != (side, side):
            raise InvalidArgumentError(
                f"closed の形が範囲と一致しません: {closed.shape} != {(side, side)}"
            )
        if closed.flags.writeable:
            closed = closed.copy()
            closed.setflags(write=False)
        object.__setattr__(self, "closed", closed)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "_side", side)

    # --- 生成 ---

    @classmethod
    def sample(
        cls, p: float, M: int, seed: int, stream_index: int = 0, block_rows: int = 512
    ) -> "Configuration":
        """threshold(uniforms(...), p) と同じ結果を行ブロックごとに作る"""
        _check_probability(p)
        check_extent(M)
        key = stream_key(seed, stream_index)
        r = np.arange(-M, M + 1)
        closed = np.empty((2 * M + 1, 2 * M + 1), dtype=bool)
        for start in range(0, 2 * M + 1, block_rows):
            rows = r[start:start + block_rows]
            closed[start:start + len(rows)] = _uniform_block(key, rows, r) < p
        return cls(
            extent=M,
            closed=closed,
            p=p,
            seed=seed,
            stream_index=stream_index,
            provenance=Provenance.SAMPLED,
        )

    @classmethod
    def filled(cls, M: int, value: bool) -> "Configuration":
        check_extent(M)
        return cls(extent=M, closed=np.full((2 * M + 1, 2 * M + 1), bool(value)))

    @classmethod
    def from_sites(
        cls, M: int, closed_sites: Iterable[Tuple[int, int]],
        provenance: Provenance = Provenance.EXPLICIT,
    ) -> "Configuration":
        check_extent(M)
        closed = np.zeros((2 * M + 1, 2 * M + 1), dtype=bool)
        for a, b in closed_sites:
            if abs(a) > M or abs(b) > M:
                raise InvalidArgumentError(f"サイト ({a}, {b}) は範囲 M={M} の外です")
            closed[a + M, b + M] = True
        return cls(extent=M, closed=closed, provenance=provenance)

    def replace_closed(self, closed: np.ndarray, provenance: Provenance) -> "Configuration":
        return Configuration(
            extent=self.extent,
            closed=closed,
            p=self.p,
            seed=self.seed,
            stream_index=self.stream_index,
            provenance=provenance,
            generator=self.generator,
        )

    # --- 参照 ---

    def contains(self, s: Tuple[int, int]) -> bool:
        return abs(s[0]) <= self.extent and abs(s[1]) <= self.extent

    def is_closed(self, s: Tuple[int, int]) -> bool:
        if not self.contains(s):
            raise InvalidArgumentError(f"サイト {tuple(s)} は範囲 M={self.extent} の外です")
        return bool(self.closed[s[0] + self.extent, s[1] + self.extent])

    def closed_sites(self) -> List[Site]:
        idx = np.argwhere(self.closed) - self.extent
        return [Site(int(a), int(b)) for a, b in idx]

    @property
    def closed_fraction(self) -> float:
        return float(self.closed.mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.extent == other.extent
            and self.p == other.p
            and self.seed == other.seed
            and self.stream_index == other.stream_index
            and self.provenance == other.provenance
            and self.generator == other.generator
            and np.array_equal(self.closed, other.closed)
        )

    __hash__ = None

    # --- 保存・読み込み ---

    def to_text(self) -> str:
        lines = [
            FORMAT_HEADER,
            f"extent {self.extent}",
            f"p {_fmt_optional(self.p)}",
            f"seed {_fmt_optional(self.seed)}",
            f"stream_index {_fmt_optional(self.stream_index)}",
            f"generator {self.generator}",
            f"provenance {self.provenance.value}",
            "rows",
        ]
        # 行 = 固定した b、a は -M から。連長は open から始めて交互
        for col in range(self._side):
            lines.append(" ".join(str(n) for n in _run_lengths(self.closed[:, col])))
        lines.append("end")
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        return atomic_write_text(path, self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Configuration":
        return cls.from_text(read_lines(path), path=path)

    @classmethod
    def from_text(cls, lines: List[str], path=None) -> "Configuration":
        if not lines or lines[0].strip() != FORMAT_HEADER:
            raise FormatError("ヘッダがありません", line=1, path=path)

        keys = ["extent", "p", "seed", "stream_index", "generator", "provenance"]
        meta = {}
        pos = 1
        for key in keys:
            if pos >= len(lines):
                raise FormatError(f"ファイルが途中で終わっています（{key} がありません）", line=pos + 1, path=path)
            parts = lines[pos].split()
            if len(parts) != 2 or parts[0] != key:
                raise FormatError(f"'{key} <値>' が必要です: {lines[pos]!r}", line=pos + 1, path=path)
            meta[key] = parts[1]
            pos += 1

        try:
            M = int(meta["extent"])
            p = None if meta["p"] == "-" else float(meta["p"])
            seed = None if meta["seed"] == "-" else int(meta["seed"])
            stream = None if meta["stream_index"] == "-" else int(meta["stream_index"])
            provenance = Provenance(meta["provenance"])
        except ValueError as e:
            raise FormatError(f"ヘッダの値が不正です: {e}", line=pos, path=path) from e
        if M < 1:
            raise FormatError(f"extent は 1 以上が必要です: {M}", line=2, path=path)

        if pos >= len(lines) or lines[pos].strip() != "rows":
            raise FormatError("'rows' が必要です", line=pos + 1, path=path)
        pos += 1

        side = 2 * M + 1
        closed = np.zeros((side, side), dtype=bool)
        for col in range(side):
            b = col - M
            if pos >= len(lines):
                raise FormatError(f"ファイルが途中で終わっています（行 b={b} がありません）", line=pos + 1, path=path)
            text = lines[pos].strip()
            if text == "end":
                raise FormatError(f"行数が足りません（行 b={b} がありません）", line=pos + 1, path=path)
            try:
                runs = [int(x) for x in text.split()]
            except ValueError as e:
                raise FormatError(f"連長が整数ではありません: {text!r}", line=pos + 1, path=path) from e
            if any(n < 0 for n in runs):
                raise FormatError("連長が負です", line=pos + 1, path=path)

            a_index = 0
            value = False
            for n in runs:
                if a_index + n > side:
                    raise FormatError(
                        f"範囲外のサイト ({M + 1}, {b}) があります", line=pos + 1, path=path
                    )
                if value:
                    closed[a_index:a_index + n, col] = True
                a_index += n
                value = not value
            if a_index != side:
                raise FormatError(
                    f"行 b={b} の長さが {a_index} です（{side} が必要）", line=pos + 1, path=path
                )
            pos += 1

        if pos >= len(lines):
            raise FormatError("'end' がありません", line=pos + 1, path=path)
        if lines[pos].strip() != "end":
            raise FormatError(f"範囲外のサイト ({-M}, {M + 1}) があります", line=pos + 1, path=path)

        return cls(
            extent=M,
            closed=closed,
            p=p,
            seed=seed,
            stream_index=stream,
            provenance=provenance,
            generator=meta["generator"],
        )


def _fmt_optional(value) -> str:
    if value is None:
        return "-"
    return repr(float(value)) if isinstance(value, float) else str(value)


def _run_lengths(row: np.ndarray) -> List[int]:
    runs = []
    current = False
    count = 0
    for value in row.tolist():
        if value == current:
            count += 1
        else:
            runs.append(count)
            current = value
            count = 1
    runs.append(count)
    return runs


def hybrid(inner: Configuration, outer: Configuration, k: int) -> Configuration:
    """辺が Q_k の内側なら inner、それ以外は outer の値をとる配置"""
    if inner.extent != outer.extent:
        raise InvalidArgumentError(
            f"範囲が一致しません: inner={inner.extent}, outer={outer.extent}"
        )
    if k < 1:
        raise InvalidArgumentError(f"k は 1 以上が必要です: k={k}")
    A, B = site_grid(inner.extent)
    inside = edge_inside_q(A, B, k)
    closed = np.where(inside, inner.closed, outer.closed)
    return outer.replace_closed(closed, Provenance.HYBRID)


def changed_sites(before: Configuration, after: Configuration) -> List[Site]:
    if before.extent != after.extent:
        raise InvalidArgumentError("範囲が一致しません")
    idx = np.argwhere(before.closed != after.closed) - before.extent
    return [Site(int(a), int(b)) for a, b in idx]
