"""傾いた格子の座標、鏡の向き、反射則、領域の判定

サイト (a, b) は整数点で、中点がそのサイトになる傾いた辺をちょうど一本持つ。
傾いた頂点 (u, v) は u-1/2, v-1/2 が整数で差が偶数の点。

頂点は格子座標 (i, j) = ((u+v-1)/2, (u-v)/2) でも表す。
この座標では傾いた格子は普通の正方格子になり、
NE のサイトは (i, j)-(i+1, j)、NW のサイトは (i, j)-(i, j+1) の辺になる。
"""
from enum import Enum, IntEnum
from fractions import Fraction
from typing import NamedTuple, Tuple

import numpy as np


class Site(NamedTuple):
    a: int
    b: int


class TiltedVertex(NamedTuple):
    u: float
    v: float


class Orientation(IntEnum):
    NE = 0  # "/"
    NW = 1  # "\"

    @property
    def glyph(self) -> str:
        return "/" if self is Orientation.NE else "\\"


class Direction(IntEnum):
    E = 0
    N = 1
    W = 2
    S = 3

    def opposite(self) -> "Direction":
        return DIRECTIONS[(self + 2) % 4]

    @property
    def unit(self) -> Tuple[int, int]:
        return DX[self], DY[self]


DIRECTIONS = tuple(Direction)
DX = (1, 0, -1, 0)
DY = (0, 1, 0, -1)

# REFLECT[orientation][direction] -> direction
REFLECT = (
    (1, 0, 3, 2),  # NE: E<->N, W<->S
    (3, 2, 1, 0),  # NW: E<->S, W<->N
)


class RegionKind(str, Enum):
    Q = "Q"
    T = "T"
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"


class TiltedRegion(NamedTuple):
    kind: RegionKind
    n: int


def is_tilted_vertex(point: Tuple[float, float]) -> bool:
    """(x+1/2, y+1/2) で x, y が整数かつ x-y が偶数なら True"""
    u, v = point
    x = Fraction(u) - Fraction(1, 2)
    y = Fraction(v) - Fraction(1, 2)
    if x.denominator != 1 or y.denominator != 1:
        return False
    return (int(x) - int(y)) % 2 == 0


def mirror_orientation(s: Tuple[int, int]) -> Orientation:
    a, b = s
    return Orientation.NE if (a - b) % 2 == 0 else Orientation.NW


def edge_for_site(s: Tuple[int, int]) -> Tuple[TiltedVertex, TiltedVertex]:
    """中点が s の傾いた辺（x の小さい端点が先）"""
    a, b = s
    if mirror_orientation(s) is Orientation.NE:
        return TiltedVertex(a - 0.5, b - 0.5), TiltedVertex(a + 0.5, b + 0.5)
    return TiltedVertex(a - 0.5, b + 0.5), TiltedVertex(a + 0.5, b - 0.5)


def reflect(d: Direction, m: Orientation) -> Direction:
    return DIRECTIONS[REFLECT[m][d]]


def region_contains(r: TiltedRegion, point: Tuple[float, float]) -> bool:
    """領域の不等式を実数座標で評価する"""
    kind, n = RegionKind(r[0]), r[1]
    if n < 1:
        raise ValueError(f"領域のスケールは 1 以上が必要です: n={n}")
    x, y = point
    s = x + y - 1
    d = x - y

    if kind is RegionKind.Q:
        return abs(s) <= n and abs(d) <= n
    if kind is RegionKind.T:
        return 1 <= s <= n and abs(d) <= 2 * n
    if kind is RegionKind.T1:
        return n + 1 <= s <= 2 * n and abs(d) <= 2 * n
    if kind is RegionKind.T2:
        return -2 * n <= s <= -n - 1 and abs(d) <= 2 * n
    if kind is RegionKind.T3:
        return n + 1 <= d <= 2 * n and abs(s) <= 2 * n
    return -2 * n <= d <= -n - 1 and abs(s) <= 2 * n


def q_radius(a: int, b: int) -> int:
    """整数点を含む最小の Q_m の m"""
    return max(abs(a + b - 1), abs(a - b))


# --- 格子座標 (i, j) ---

def vertex_to_lattice(p: Tuple[float, float]) -> Tuple[int, int]:
    u, v = p
    return int(round(u + v - 1)) // 2, int(round(u - v)) // 2


def lattice_to_vertex(i: int, j: int) -> TiltedVertex:
    return TiltedVertex(i + j + 0.5, i - j + 0.5)


def site_to_bond(s: Tuple[int, int]) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """サイトを格子座標の辺（2 頂点）に変換する"""
    a, b = s
    if (a - b) % 2 == 0:
        i, j = (a + b - 2) // 2, (a - b) // 2
        return (i, j), (i + 1, j)
    i, j = (a + b - 1) // 2, (a - b - 1) // 2
    return (i, j), (i, j + 1)


def bond_to_site(p: Tuple[int, int], q: Tuple[int, int]) -> Site:
    """隣接する 2 頂点を結ぶ辺のサイト"""
    (i1, j1), (i2, j2) = sorted((tuple(p), tuple(q)))
    if i2 == i1 + 1 and j2 == j1:
        return Site(i1 + j1 + 1, i1 - j1 + 1)
    if i2 == i1 and j2 == j1 + 1:
        return Site(i1 + j1 + 1, i1 - j1)
    raise ValueError(f"隣接していない頂点です: {p}, {q}")


def site_grid(M: int) -> Tuple[np.ndarray, np.ndarray]:
    """[a+M, b+M] で引ける座標配列"""
    r = np.arange(-M, M + 1)
    return np.meshgrid(r, r, indexing="ij")


def edge_inside_q(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """サイトの辺の両端点が Q_k に入るか（配列版）"""
    a = np.asarray(a)
    b = np.asarray(b)
    ne = (a - b) % 2 == 0
    s = a + b
    d = a - b
    inside_ne = (np.abs(s - 2) <= k) & (np.abs(s) <= k) & (np.abs(d) <= k)
    inside_nw = (np.abs(s - 1) <= k) & (np.abs(d - 1) <= k) & (np.abs(d + 1) <= k)
    return np.where(ne, inside_ne, inside_nw)
