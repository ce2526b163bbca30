"""パーコレーション事象の判定

頂点は格子座標 (i, j) で扱う（geometry のモジュール docstring を参照）。
h[i, j] は辺 (i, j)-(i+1, j)、v[i, j] は辺 (i, j)-(i, j+1) が閉じているか。

環状領域 Q_2n \\ Q_n の閉路の巻き数は、半直線 {(x, 1): x > 1/2} を横切る回数で数える。
この半直線上には頂点も辺の端点もない。横切る辺は
h(i, i) (i >= 0) と v(j+1, j) (j >= 0) だけ。
"""
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .configuration import Configuration
from .errors import FormatError, InvalidArgumentError
from .fileio import atomic_write_text, read_lines
from .geometry import RegionKind, TiltedVertex, lattice_to_vertex, vertex_to_lattice

logger = logging.getLogger(__name__)

FORMAT_HEADER = "# pinball-witness v1"

Vertex = Tuple[int, int]


@dataclass(frozen=True)
class EventResult:
    event: str
    n: int
    holds: bool
    witness: Optional[Tuple[TiltedVertex, ...]] = None
    witness_kind: Optional[str] = None  # "path" / "circuit" / "dual_path"
    parts: Tuple["EventResult", ...] = ()


class BondField:
    """配置を |i|, |j| <= K の格子の辺として見る（範囲外の辺は open）"""

    def __init__(self, c: Configuration, K: int):
        self.K = K
        r = np.arange(-K, K + 1)
        I, J = np.meshgrid(r, r, indexing="ij")
        self.H = self._lookup(c, I + J + 1, I - J + 1)
        self.V = self._lookup(c, I + J + 1, I - J)
        # BFS は Python のループなのでリストで引く
        self._h = self.H.tolist()
        self._v = self.V.tolist()

    @staticmethod
    def _lookup(c: Configuration, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        M = c.extent
        out = np.zeros(A.shape, dtype=bool)
        valid = (np.abs(A) <= M) & (np.abs(B) <= M)
        out[valid] = c.closed[A[valid] + M, B[valid] + M]
        return out

    def h(self, i: int, j: int) -> bool:
        K = self.K
        if -K <= i < K and -K <= j <= K:
            return self._h[i + K][j + K]
        return False

    def v(self, i: int, j: int) -> bool:
        K = self.K
        if -K <= i <= K and -K <= j < K:
            return self._v[i + K][j + K]
        return False

    def is_closed(self, p: Vertex, q: Vertex) -> bool:
        (i1, j1), (i2, j2) = sorted((p, q))
        if i2 == i1 + 1 and j1 == j2:
            return self.h(i1, j1)
        if i1 == i2 and j2 == j1 + 1:
            return self.v(i1, j1)
        return False

    def neighbors(self, p: Vertex) -> List[Vertex]:
        """閉じた辺でつながる頂点（辞書順）"""
        i, j = p
        out = []
        if self.h(i - 1, j):
            out.append((i - 1, j))
        if self.v(i, j - 1):
            out.append((i, j - 1))
        if self.v(i, j):
            out.append((i, j + 1))
        if self.h(i, j):
            out.append((i + 1, j))
        return out


def _require_extent(c: Configuration, needed: int, event: str) -> None:
    if c.extent < needed:
        raise InvalidArgumentError(
            f"{event}: 範囲 M={c.extent} が足りません（M >= {needed} が必要）"
        )


def _to_vertices(path: Sequence[Vertex]) -> Tuple[TiltedVertex, ...]:
    return tuple(lattice_to_vertex(i, j) for i, j in path)


def _backtrack(parent: Dict[Vertex, Optional[Vertex]], end: Vertex) -> List[Vertex]:
    path = [end]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def in_q(p: Vertex, n: int) -> bool:
    return abs(2 * p[0]) <= n and abs(2 * p[1]) <= n


def in_annulus(p: Vertex, n: int) -> bool:
    m = max(abs(2 * p[0]), abs(2 * p[1]))
    return n < m <= 2 * n


# --- A_n ---

def radial_closed_path(c: Configuration, n: int) -> EventResult:
    """(1/2, 1/2) から Q_n の外の頂点まで閉じた道があるか"""
    if n < 1:
        raise InvalidArgumentError(f"n は 1 以上が必要です: n={n}")
    _require_extent(c, n + 1, "A")
    field = BondField(c, n // 2 + 2)

    origin = (0, 0)
    parent: Dict[Vertex, Optional[Vertex]] = {origin: None}
    queue = deque([origin])
    while queue:
        p = queue.popleft()
        for q in field.neighbors(p):
            if q in parent:
                continue
            parent[q] = p
            if not in_q(q, n):
                path = _backtrack(parent, q)
                return EventResult("A", n, True, _to_vertices(path), "path")
            queue.append(q)
    return EventResult("A", n, False)


# --- A'_n と 4 つの長方形 ---

def rectangle_box(n: int, which: Union[str, RegionKind]) -> Tuple[Tuple[int, int], Tuple[int, int], int]:
    """((i_lo, i_hi), (j_lo, j_hi), 横断する軸 0=i / 1=j)"""
    which = RegionKind(which)
    if which is RegionKind.T:
        return (1, n // 2), (-n, n), 1
    if which is RegionKind.T1:
        return ((n + 2) // 2, n), (-n, n), 1
    if which is RegionKind.T2:
        return (-n, (-n - 1) // 2), (-n, n), 1
    if which is RegionKind.T3:
        return (-n, n), ((n + 2) // 2, n), 0
    if which is RegionKind.T4:
        return (-n, n), (-n, (-n - 1) // 2), 0
    raise InvalidArgumentError(f"長方形ではありません: {which}")


def rect_crossing(c: Configuration, n: int, which: Union[str, RegionKind] = RegionKind.T) -> EventResult:
    """長方形の中の閉じた道が両端の短い辺を結ぶか"""
    if n < 1:
        raise InvalidArgumentError(f"n は 1 以上が必要です: n={n}")
    which = RegionKind(which)
    _require_extent(c, 2 * n, f"rect_crossing({which.value})")
    (i_lo, i_hi), (j_lo, j_hi), axis = rectangle_box(n, which)
    name = "Aprime" if which is RegionKind.T else which.value
    if i_lo > i_hi or j_lo > j_hi:
        return EventResult(name, n, False)

    field = BondField(c, n + 1)

    def inside(p):
        return i_lo <= p[0] <= i_hi and j_lo <= p[1] <= j_hi

    if axis == 1:
        sources = [(i, j_lo) for i in range(i_lo, i_hi + 1)]
        is_target = lambda p: p[1] == j_hi
    else:
        sources = [(i_lo, j) for j in range(j_lo, j_hi + 1)]
        is_target = lambda p: p[0] == i_hi

    parent: Dict[Vertex, Optional[Vertex]] = {}
    queue = deque()
    for s in sources:
        parent[s] = None
        queue.append(s)
    while queue:
        p = queue.popleft()
        if is_target(p):
            return EventResult(name, n, True, _to_vertices(_backtrack(parent, p)), "path")
        for q in field.neighbors(p):
            if q in parent or not inside(q):
                continue
            parent[q] = p
            queue.append(q)
    return EventResult(name, n, False)


# --- A''_n ---

def crossing(p: Vertex, q: Vertex) -> int:
    """辺 p->q が基準の半直線を横切る符号付きの回数"""
    (i1, j1), (i2, j2) = p, q
    if j1 == j2 and i1 == j1 and i1 >= 0 and i2 == i1 + 1:
        return 1
    if j1 == j2 and i2 == j2 and i2 >= 0 and i1 == i2 + 1:
        return -1
    if i1 == i2 and j1 >= 0 and i1 == j1 + 1 and j2 == j1 + 1:
        return -1
    if i1 == i2 and j2 >= 0 and i1 == j2 + 1 and j1 == j2 + 1:
        return 1
    return 0


def winding_number(cycle: Sequence) -> int:
    """閉じた頂点列（最後から最初へ戻る辺を含む）の巻き数"""
    pts = [_as_lattice(p) for p in cycle]
    if len(pts) < 2:
        return 0
    return sum(crossing(p, q) for p, q in zip(pts, pts[1:] + pts[:1]))


def _as_lattice(p) -> Vertex:
    if isinstance(p, TiltedVertex) or any(isinstance(x, float) for x in p):
        return vertex_to_lattice(p)
    return int(p[0]), int(p[1])


def _check_circuit_args(c: Configuration, n: int, event: str) -> None:
    if n < 2:
        raise InvalidArgumentError(f"{event}: n は 2 以上が必要です: n={n}")
    _require_extent(c, 2 * n + 1, event)


def surrounding_circuit_exact(c: Configuration, n: int, witness: bool = False) -> EventResult:
    """Q_2n \\ Q_n の閉じた辺だけで、巻き数 ±1 の閉路ができるか

    (頂点, 横断回数) の幅優先探索。同じ頂点に異なる回数で着いたら、
    二つの木の道と最後の辺で閉路を組み立てる。
    witness=True なら、成り立たないときに双対の道を返す。
    """
    _check_circuit_args(c, n, "Acirc")
    field = BondField(c, n + 1)

    count: Dict[Vertex, int] = {}
    parent: Dict[Vertex, Optional[Vertex]] = {}
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            root = (i, j)
            if root in count or not in_annulus(root, n):
                continue
            count[root] = 0
            parent[root] = None
            queue = deque([root])
            while queue:
                p = queue.popleft()
                for q in field.neighbors(p):
                    if not in_annulus(q, n):
                        continue
                    k = count[p] + crossing(p, q)
                    if q not in count:
                        count[q] = k
                        parent[q] = p
                        queue.append(q)
                    elif count[q] != k:
                        cycle = _fundamental_cycle(parent, p, q)
                        return EventResult("Acirc", n, True, _to_vertices(cycle), "circuit")

    if witness:
        path = _dual_path(c, n)
        if path is not None:
            return EventResult("Acirc", n, False, path, "dual_path")
    return EventResult("Acirc", n, False)


def _fundamental_cycle(parent, p: Vertex, q: Vertex) -> List[Vertex]:
    up_p = _backtrack(parent, p)[::-1]
    up_q = _backtrack(parent, q)[::-1]
    on_p = {v: k for k, v in enumerate(up_p)}
    for k_q, v in enumerate(up_q):
        if v in on_p:
            k_p = on_p[v]
            break
    # LCA -> ... -> p, q -> ... -> (LCA の子)
    return up_p[:k_p + 1][::-1] + up_q[:k_q]


def surrounding_circuit_4rect(c: Configuration, n: int) -> EventResult:
    """4 つの長方形 T1..T4 がすべて長い向きに横断されるか（十分条件）"""
    _check_circuit_args(c, n, "Acirc4")
    parts = tuple(
        rect_crossing(c, n, which)
        for which in (RegionKind.T1, RegionKind.T2, RegionKind.T3, RegionKind.T4)
    )
    return EventResult("Acirc4", n, all(r.holds for r in parts), parts=parts)


# --- 双対 ---

def _face_graph(c: Configuration, n: int):
    """面 (fi, fj), fi, fj in [-n-1, n] の隣接行列（塞がれていない辺をまたぐ）"""
    K = n + 1
    field = BondField(c, K)
    F = 2 * n + 2
    r = np.arange(-K, K + 1)
    I, J = np.meshgrid(r, r, indexing="ij")
    ring = np.maximum(np.abs(2 * I), np.abs(2 * J))
    annulus = (ring > n) & (ring <= 2 * n)

    # 頂点配列の添字 = 座標 + K
    def vidx(x):
        return x + K

    f = np.arange(-n - 1, n + 1)
    FI, FJ = np.meshgrid(f, f, indexing="ij")
    index = (FI + n + 1) * F + (FJ + n + 1)

    rows, cols = [], []

    # (fi, fj) - (fi, fj+1): 辺 h(fi, fj+1)
    fi, fj = FI[:, :-1], FJ[:, :-1]
    bi, bj = vidx(fi), vidx(fj + 1)
    blocked = field.H[bi, bj] & annulus[bi, bj] & annulus[bi + 1, bj]
    rows.append(index[:, :-1][~blocked])
    cols.append(index[:, 1:][~blocked])

    # (fi, fj) - (fi+1, fj): 辺 v(fi+1, fj)
    fi, fj = FI[:-1, :], FJ[:-1, :]
    bi, bj = vidx(fi + 1), vidx(fj)
    blocked = field.V[bi, bj] & annulus[bi, bj] & annulus[bi, bj + 1]
    rows.append(index[:-1, :][~blocked])
    cols.append(index[1:, :][~blocked])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(F * F, F * F)
    )
    source = (0 + n + 1) * F + (0 + n + 1)
    outer = (FI == -n - 1) | (FI == n) | (FJ == -n - 1) | (FJ == n)
    targets = np.sort(index[outer])
    return graph, source, targets, F


def dual_crosscheck(c: Configuration, n: int) -> bool:
    """内側の面から外周の面へ、塞がれていない辺をまたいで行けなければ True"""
    _check_circuit_args(c, n, "dual_crosscheck")
    graph, source, targets, _ = _face_graph(c, n)
    _, labels = csgraph.connected_components(graph, directed=False)
    return not bool(np.any(labels[targets] == labels[source]))


def _dual_path(c: Configuration, n: int) -> Optional[Tuple[TiltedVertex, ...]]:
    graph, source, targets, F = _face_graph(c, n)
    order, pred = csgraph.breadth_first_order(
        graph, source, directed=False, return_predecessors=True
    )
    reached = set(order.tolist())
    for t in targets.tolist():
        if t not in reached:
            continue
        chain = [t]
        while chain[-1] != source:
            chain.append(int(pred[chain[-1]]))
        chain.reverse()
        return tuple(_face_center(k, n, F) for k in chain)
    return None


def _face_center(k: int, n: int, F: int) -> TiltedVertex:
    fi, fj = k // F - n - 1, k % F - n - 1
    return TiltedVertex(fi + fj + 1.5, fi - fj + 0.5)


def _center_to_face(p) -> Vertex:
    u, v = p
    s = int(round(u + v - 2))  # = 2 fi
    d = int(round(u - v - 1))  # = 2 fj
    return s // 2, d // 2


# --- 証拠の検証 ---

def validate_witness(c: Configuration, result: EventResult) -> bool:
    """証拠を辺ごとに配置と照合する"""
    if result.witness is None:
        return result.witness_kind is None
    kind = result.witness_kind
    if kind in ("path", "circuit"):
        pts = [_as_lattice(p) for p in result.witness]
        pairs = list(zip(pts, pts[1:]))
        if kind == "circuit":
            if len(pts) < 4:
                return False
            pairs.append((pts[-1], pts[0]))
        K = max(max(abs(i), abs(j)) for i, j in pts) + 1
        field = BondField(c, K)
        if not all(field.is_closed(p, q) for p, q in pairs):
            return False
        if kind == "circuit":
            if len(set(pts)) != len(pts):
                return False
            return abs(winding_number(pts)) == 1
        return True
    if kind == "dual_path":
        n = result.n
        field = BondField(c, n + 1)
        faces = [_center_to_face(p) for p in result.witness]
        for (fi1, fj1), (fi2, fj2) in zip(faces, faces[1:]):
            if fi1 == fi2 and abs(fj1 - fj2) == 1:
                bj = max(fj1, fj2)
                p, q = (fi1, bj), (fi1 + 1, bj)
            elif fj1 == fj2 and abs(fi1 - fi2) == 1:
                bi = max(fi1, fi2)
                p, q = (bi, fj1), (bi, fj1 + 1)
            else:
                return False
            if field.is_closed(p, q) and in_annulus(p, n) and in_annulus(q, n):
                return False
        last = faces[-1]
        return faces[0] == (0, 0) and (abs(last[0] + 0.5) >= n + 0.5 or abs(last[1] + 0.5) >= n + 0.5)
    return False


# --- 証拠ファイル ---

def _fmt(x: float) -> str:
    return f"{x:g}"


def format_witness(result: EventResult) -> str:
    lines = [
        FORMAT_HEADER,
        f"# event {result.event}",
        f"# n {result.n}",
        f"# holds {'true' if result.holds else 'false'}",
        f"# kind {result.witness_kind or 'none'}",
    ]
    for u, v in result.witness or ():
        lines.append(f"{_fmt(u)} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def dump_witness(result: EventResult, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, format_witness(result))


def load_witness(path: Union[str, Path]) -> EventResult:
    lines = read_lines(path)
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise FormatError("ヘッダがありません", line=1, path=path)
    meta = {}
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            parts = text[1:].split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        try:
            u, v = (float(x) for x in text.split())
        except ValueError as e:
            raise FormatError(f"'u v' が必要です: {text!r}", line=lineno, path=path) from e
        points.append(TiltedVertex(u, v))
    for key in ("event", "n", "holds", "kind"):
        if key not in meta:
            raise FormatError(f"'# {key}' がありません", path=path)
    kind = None if meta["kind"] == "none" else meta["kind"]
    return EventResult(
        event=meta["event"],
        n=int(meta["n"]),
        holds=meta["holds"] == "true",
        witness=tuple(points) if points else None,
        witness_kind=kind if points else None,
    )
