"""強化パターン G0 と強化写像 ω -> ω~

パターンは平行移動（座標和が偶数のずれ）でのみ照合する。
照合はすべて入力の配置で行い、見つかったコピーの赤サイトを一度に閉じる。
"""
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .configuration import Configuration, Provenance
from .errors import EscapeError, FormatError, InvalidArgumentError, PatternError
from .fileio import atomic_write_text, read_lines
from .geometry import (
    DX,
    DY,
    Direction,
    Site,
    bond_to_site,
    edge_inside_q,
    mirror_orientation,
    reflect,
    site_to_bond,
)
from .settings import get_settings
from .tracer import RayState, step, trace

logger = logging.getLogger(__name__)

FORMAT_HEADER = "# pinball-pattern v1"
DEFAULT_PATTERN = "default"

# 偶数の平行移動で赤サイトが取りうる偶奇クラス
PARITY_CLASSES = (Site(0, 0), Site(1, 1))


@dataclass(frozen=True)
class Pattern:
    name: str
    closed_sites: FrozenSet[Site]
    open_sites: FrozenSet[Site]
    red_site: Site

    def __post_init__(self):
        closed = frozenset(Site(*s) for s in self.closed_sites)
        opened = frozenset(Site(*s) for s in self.open_sites) | {Site(*self.red_site)}
        object.__setattr__(self, "closed_sites", closed)
        object.__setattr__(self, "open_sites", opened)
        object.__setattr__(self, "red_site", Site(*self.red_site))
        overlap = closed & opened
        if overlap:
            raise PatternError(f"closed と open の両方に含まれるサイトがあります: {sorted(overlap)}")

    @property
    def sites(self) -> FrozenSet[Site]:
        return self.closed_sites | self.open_sites

    @property
    def radius(self) -> int:
        return max(max(abs(a), abs(b)) for a, b in self.sites)

    def translated(self, t: Tuple[int, int]) -> "Pattern":
        ta, tb = t
        return Pattern(
            name=self.name,
            closed_sites=frozenset(Site(a + ta, b + tb) for a, b in self.closed_sites),
            open_sites=frozenset(Site(a + ta, b + tb) for a, b in self.open_sites),
            red_site=Site(self.red_site.a + ta, self.red_site.b + tb),
        )

    def to_text(self) -> str:
        lines = [FORMAT_HEADER, f"name {self.name}", f"red {self.red_site.a} {self.red_site.b}"]
        lines.extend(f"closed {a} {b}" for a, b in sorted(self.closed_sites))
        lines.extend(f"open {a} {b}" for a, b in sorted(self.open_sites - {self.red_site}))
        return "\n".join(lines) + "\n"


def default_pattern_path() -> Path:
    return Path(str(resources.files("pinball").joinpath("data/default.pattern")))


def parse_pattern(lines: List[str], path=None) -> Pattern:
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise FormatError("ヘッダがありません", line=1, path=path)

    name = Path(path).stem if path else "pattern"
    closed, opened = set(), set()
    red = None
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if parts[0] == "name" and len(parts) == 2:
            name = parts[1]
            continue
        if parts[0] not in ("closed", "open", "red") or len(parts) != 3:
            raise FormatError(f"'closed|open|red a b' が必要です: {text!r}", line=lineno, path=path)
        try:
            s = Site(int(parts[1]), int(parts[2]))
        except ValueError as e:
            raise FormatError(f"座標が整数ではありません: {text!r}", line=lineno, path=path) from e
        if parts[0] == "closed":
            closed.add(s)
        elif parts[0] == "open":
            opened.add(s)
        else:
            if red is not None:
                raise FormatError("red が 2 回指定されています", line=lineno, path=path)
            red = s

    if red is None:
        raise FormatError("red がありません", path=path)
    return Pattern(name=name, closed_sites=frozenset(closed), open_sites=frozenset(opened), red_site=red)


def load_pattern(path: Union[str, Path] = DEFAULT_PATTERN, validate: bool = True) -> Pattern:
    """パターンファイルを読み込み、必要なら 3 つの検査を通す"""
    if str(path) == DEFAULT_PATTERN:
        path = default_pattern_path()
    g = parse_pattern(read_lines(path), path=path)
    if validate:
        report = validate_pattern(g)
        if not report.ok:
            raise PatternError(f"パターン {g.name} は検査に通りません: {report.summary()}")
    return g


def save_pattern(g: Pattern, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, g.to_text())


# --- 照合と強化 ---

@dataclass(frozen=True)
class MatchSet:
    offsets: Tuple[Tuple[int, int], ...]

    def __len__(self):
        return len(self.offsets)

    def __contains__(self, t) -> bool:
        return tuple(t) in self.offsets

    def red_sites(self, g: Pattern) -> List[Site]:
        return [Site(g.red_site.a + ta, g.red_site.b + tb) for ta, tb in self.offsets]


def match_pattern(c: Configuration, g: Pattern, excluded_core: Optional[int] = None) -> MatchSet:
    """範囲内に完全に収まるコピーのずれをすべて返す（辞書順）"""
    M = c.extent
    a_min = min(a for a, _ in g.sites)
    a_max = max(a for a, _ in g.sites)
    b_min = min(b for _, b in g.sites)
    b_max = max(b for _, b in g.sites)
    ta_lo, ta_hi = -M - a_min, M - a_max
    tb_lo, tb_hi = -M - b_min, M - b_max
    if ta_lo > ta_hi or tb_lo > tb_hi:
        return MatchSet(offsets=())

    C = c.closed
    ok = np.ones((ta_hi - ta_lo + 1, tb_hi - tb_lo + 1), dtype=bool)

    def window(a, b):
        return C[a + ta_lo + M:a + ta_hi + M + 1, b + tb_lo + M:b + tb_hi + M + 1]

    for a, b in g.closed_sites:
        ok &= window(a, b)
    for a, b in g.open_sites:
        ok &= ~window(a, b)

    TA, TB = np.meshgrid(
        np.arange(ta_lo, ta_hi + 1), np.arange(tb_lo, tb_hi + 1), indexing="ij"
    )
    ok &= (TA + TB) % 2 == 0
    if excluded_core is not None:
        ok &= ~edge_inside_q(g.red_site.a + TA, g.red_site.b + TB, excluded_core)

    idx = np.argwhere(ok)
    offsets = tuple((int(i) + ta_lo, int(j) + tb_lo) for i, j in idx)
    return MatchSet(offsets=offsets)


def enhance(c: Configuration, g: Pattern, excluded_core: Optional[int] = None) -> Configuration:
    """見つかったコピーの赤サイトをすべて閉じる（一回の走査）"""
    matches = match_pattern(c, g, excluded_core)
    closed = c.closed.copy()
    if matches.offsets:
        t = np.asarray(matches.offsets, dtype=np.int64)
        closed[g.red_site.a + t[:, 0] + c.extent, g.red_site.b + t[:, 1] + c.extent] = True
    logger.debug("enhance: %d 個のコピーを強化", len(matches))
    return c.replace_closed(closed, Provenance.ENHANCED)


# --- 平行移動の補題 ---

@dataclass(frozen=True)
class TranslationReport:
    ok: bool
    counterexample: Optional[Tuple[int, int]] = None
    offsets_checked: int = 0


def check_translation_lemma(g: Pattern) -> TranslationReport:
    """重なりうるずれ t について、両立するコピー同士で赤が相手の open に重ならないか"""
    span = 2 * g.radius
    checked = 0
    for ta in range(-span, span + 1):
        for tb in range(-span, span + 1):
            if (ta, tb) == (0, 0) or (ta + tb) % 2 != 0:
                continue
            shifted_open = {Site(a + ta, b + tb) for a, b in g.open_sites}
            shifted_closed = {Site(a + ta, b + tb) for a, b in g.closed_sites}
            if g.closed_sites & shifted_open or g.open_sites & shifted_closed:
                continue
            checked += 1
            red = g.red_site
            if Site(red.a + ta, red.b + tb) in g.open_sites or Site(red.a - ta, red.b - tb) in g.open_sites:
                return TranslationReport(ok=False, counterexample=(ta, tb), offsets_checked=checked)
    return TranslationReport(ok=True, offsets_checked=checked)


# --- 迂回路 ---

@dataclass(frozen=True)
class DetourTrace:
    parity: Site
    entry: Direction
    spliced: bool
    returned_dir: Optional[Direction]
    exit_state: RayState
    radius: int
    captured: bool
    states: Tuple[RayState, ...] = field(repr=False)


@dataclass(frozen=True)
class DetourReport:
    ok: bool
    detour_radius: Optional[int]
    max_detour: int
    traces: Tuple[DetourTrace, ...]


def entry_directions(r: Tuple[int, int]) -> Tuple[Direction, Direction]:
    """サイト r に光が到着しうる向き（横の通り, 縦の通り）"""
    a, b = r
    horizontal = Direction.E if b % 2 == 0 else Direction.W
    vertical = Direction.N if a % 2 == 0 else Direction.S
    return horizontal, vertical


def _follow_detour(c: Configuration, r: Site, d: Direction, limit: int) -> Tuple[List[RayState], bool]:
    states = [RayState(r, d)]
    state = states[0]
    while len(states) <= limit:
        try:
            state = step(state, c)
        except EscapeError:
            return states, False
        states.append(state)
        if state.site == r:
            return states, True
    return states, False


def check_detour(g: Pattern, max_detour: Optional[int] = None) -> DetourReport:
    """赤を開けたままの迂回路が、反射後の向きで赤に戻るかを調べる"""
    if max_detour is None:
        max_detour = int(get_settings().enhancement.max_detour)
    window = max(4 * g.radius, 4) + 1
    limit = 4 * (2 * window + 1) ** 2

    traces = []
    ok = True
    splice_radii = []
    for t in PARITY_CLASSES:
        copy = g.translated(t)
        r = copy.red_site
        m = mirror_orientation(r)
        plain = Configuration.from_sites(window, copy.closed_sites)
        red_closed = Configuration.from_sites(window, copy.closed_sites | {r})

        class_spliced = False
        for d in entry_directions(r):
            states, returned = _follow_detour(plain, r, d, limit)
            out_dir = states[-1].dir if returned else None
            inside = all(s.site in copy.sites for s in states)
            spliced = returned and out_dir == reflect(d, m) and inside
            radius = max(max(abs(s.site.a - r.a), abs(s.site.b - r.b)) for s in states)
            captured = False
            if not spliced:
                captured = trace(red_closed, RayState(r, reflect(d, m))).closed
            traces.append(
                DetourTrace(
                    parity=t,
                    entry=d,
                    spliced=spliced,
                    returned_dir=out_dir,
                    exit_state=states[-1],
                    radius=radius,
                    captured=captured,
                    states=tuple(states),
                )
            )
            if spliced:
                class_spliced = True
                splice_radii.append(radius)
        if not class_spliced:
            ok = False

    D = max(splice_radii) if splice_radii else None
    if D is not None and D > max_detour:
        ok = False
    return DetourReport(ok=ok, detour_radius=D, max_detour=max_detour, traces=tuple(traces))


# --- 本質性 ---

@dataclass(frozen=True)
class EssentialReport:
    witness: Optional[Configuration]
    attempts: int
    window: int

    @property
    def found(self) -> bool:
        return self.witness is not None


WEST, EAST = "west", "east"


def window_crossing(c: Configuration) -> bool:
    """閉じた辺の道が窓の西端 (u = -W-1/2) から東端 (u = W+1/2) までつながるか"""
    W = c.extent
    G = nx.Graph()
    for s in c.closed_sites():
        p, q = site_to_bond(s)
        G.add_edge(p, q)
    for v in list(G.nodes):
        i, j = v
        if i + j == -W - 1:
            G.add_edge(WEST, v)
        elif i + j == W:
            G.add_edge(EAST, v)
    return WEST in G and EAST in G and nx.has_path(G, WEST, EAST)


def _window_graph(g: Pattern, W: int) -> nx.Graph:
    G = nx.Graph()
    for a in range(-W, W + 1):
        for b in range(-W, W + 1):
            s = Site(a, b)
            if s in g.open_sites:
                continue
            p, q = site_to_bond(s)
            G.add_edge(p, q)
    for v in list(G.nodes):
        i, j = v
        if i + j == -W - 1:
            G.add_edge(WEST, v)
        elif i + j == W:
            G.add_edge(EAST, v)
    return G


def _path(G: nx.Graph, source, target, weighted: bool) -> Optional[list]:
    try:
        if weighted:
            return nx.dijkstra_path(G, source, target, weight="w")
        return nx.shortest_path(G, source, target)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


def _path_sites(path: list) -> List[Site]:
    nodes = [v for v in path if v not in (WEST, EAST)]
    return [bond_to_site(p, q) for p, q in zip(nodes, nodes[1:])]


def check_essential(
    g: Pattern,
    window: Optional[int] = None,
    budget: Optional[int] = None,
    seed: int = 0,
) -> EssentialReport:
    """赤を閉じたときだけ窓を横断する閉じた道ができる配置を探す

    赤の両端点を、それぞれ西端と東端へ頂点を共有しない閉じた道でつなぐ。
    最初の 2 回は最短路、以降は乱数の重みで別の道を試す。
    見つからなくても反証ではない。
    """
    if window is None:
        window = 2 * g.radius + 4
    if window < 2 * g.radius + 4:
        raise InvalidArgumentError(f"窓は 2R+4={2 * g.radius + 4} 以上が必要です: W={window}")
    if budget is None:
        budget = int(get_settings().enhancement.essential_budget)

    G = _window_graph(g, window)
    pattern_graph = nx.Graph()
    for s in g.closed_sites:
        pattern_graph.add_edge(*site_to_bond(s))

    def component(v) -> set:
        if v in pattern_graph:
            return set(nx.node_connected_component(pattern_graph, v))
        return {v}

    west_side = {v for v in G.nodes if v not in (WEST, EAST) and v[0] + v[1] == -window - 1}
    east_side = {v for v in G.nodes if v not in (WEST, EAST) and v[0] + v[1] == window}
    ends = site_to_bond(g.red_site)
    combos = (ends, ends[::-1])

    for attempt in range(budget):
        src, dst = combos[attempt % 2]
        weighted = attempt >= 2
        if weighted:
            rng = np.random.default_rng((seed, attempt))
            for (x, y), w in zip(G.edges(), rng.random(G.number_of_edges())):
                G[x][y]["w"] = 1.0 + 4.0 * float(w)

        if src not in G or dst not in G:
            continue
        first = G.copy()
        first.remove_nodes_from(component(dst) | east_side | {EAST})
        p1 = _path(first, WEST, src, weighted)
        if p1 is None:
            continue

        used = set()
        for v in p1:
            if v != WEST:
                used |= component(v)
        second = G.copy()
        second.remove_nodes_from(used | west_side | {WEST})
        p2 = _path(second, dst, EAST, weighted)
        if p2 is None:
            continue

        sites = set(g.closed_sites) | set(_path_sites(p1)) | set(_path_sites(p2))
        candidate = Configuration.from_sites(window, sites)
        if (0, 0) not in match_pattern(candidate, g):
            continue
        if window_crossing(candidate) or not window_crossing(enhance(candidate, g)):
            continue
        logger.debug("check_essential: %d 回目で証拠を発見", attempt + 1)
        return EssentialReport(witness=candidate, attempts=attempt + 1, window=window)

    return EssentialReport(witness=None, attempts=budget, window=window)


# --- まとめ ---

@dataclass(frozen=True)
class PatternReport:
    pattern: Pattern
    translation: TranslationReport
    essential: EssentialReport
    detour: DetourReport

    @property
    def ok(self) -> bool:
        return self.translation.ok and self.essential.found and self.detour.ok

    def summary(self) -> str:
        parts = [
            f"translation={'ok' if self.translation.ok else f'fail t={self.translation.counterexample}'}",
            f"essential={'found' if self.essential.found else 'not-found'}"
            f" (attempts={self.essential.attempts}, W={self.essential.window})",
            f"detour={'ok' if self.detour.ok else 'fail'} D={self.detour.detour_radius}",
        ]
        return ", ".join(parts)


def validate_pattern(
    g: Pattern,
    essential_budget: Optional[int] = None,
    max_detour: Optional[int] = None,
) -> PatternReport:
    return PatternReport(
        pattern=g,
        translation=check_translation_lemma(g),
        essential=check_essential(g, budget=essential_budget),
        detour=check_detour(g, max_detour=max_detour),
    )


# --- 探索 ---

@dataclass(frozen=True)
class SearchResult:
    patterns: Tuple[Pattern, ...]
    exhausted: bool
    nodes: int


class _BudgetExhausted(Exception):
    pass


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self):
        if self.used >= self.limit:
            raise _BudgetExhausted
        self.used += 1


def _light_patterns(red: Site, R: int, k: int, budget: _Budget) -> Iterable[Tuple[FrozenSet[Site], FrozenSet[Site]]]:
    """赤から出た光が反射後の向きで赤に戻るような、閉じたサイトがちょうど k 個の割り当て"""
    entry = entry_directions(red)[0]
    target = reflect(entry, mirror_orientation(red))
    assigned: Dict[Site, bool] = {red: False}
    found = []

    def dfs(site: Site, d: Direction, n_closed: int):
        budget.spend()
        ns = Site(site.a + DX[d], site.b + DY[d])
        if abs(ns.a) > R or abs(ns.b) > R:
            return
        if ns == red:
            if d == target and n_closed == k:
                closed = frozenset(s for s, v in assigned.items() if v)
                opened = frozenset(s for s, v in assigned.items() if not v)
                found.append((closed, opened))
            return
        if ns in assigned:
            nd = reflect(d, mirror_orientation(ns)) if assigned[ns] else d
            dfs(ns, nd, n_closed)
            return
        assigned[ns] = False
        dfs(ns, d, n_closed)
        if n_closed < k:
            assigned[ns] = True
            dfs(ns, reflect(d, mirror_orientation(ns)), n_closed + 1)
        del assigned[ns]

    dfs(red, entry, 0)
    return found


def search_patterns(
    R_max: int,
    budget: int,
    reds: Sequence[Tuple[int, int]] = ((0, 0),),
    max_closed: Optional[int] = None,
    essential_budget: int = 16,
) -> SearchResult:
    """光の道をたどる深さ優先探索で、3 つの検査に通るパターンを探す"""
    cfg = get_settings().enhancement
    if R_max > int(cfg.search_max_radius):
        raise InvalidArgumentError(
            f"R_max={R_max} は上限 {int(cfg.search_max_radius)} を超えます"
        )
    if R_max < 1:
        raise InvalidArgumentError(f"R_max は 1 以上が必要です: {R_max}")
    if max_closed is None:
        max_closed = int(cfg.search_max_closed)

    counter = _Budget(budget)
    seen = set()
    passed: List[Pattern] = []
    exhausted = False
    try:
        for k in range(1, max_closed + 1):
            for red in reds:
                red = Site(*red)
                for closed, opened in _light_patterns(red, R_max, k, counter):
                    if (closed, opened) in seen:
                        continue
                    seen.add((closed, opened))
                    g = Pattern(
                        name=f"search-r{R_max}-k{k}-{len(seen)}",
                        closed_sites=closed,
                        open_sites=opened,
                        red_site=red,
                    )
                    if not check_translation_lemma(g).ok:
                        continue
                    if not check_detour(g).ok:
                        continue
                    if not check_essential(g, budget=essential_budget).found:
                        continue
                    passed.append(g)
    except _BudgetExhausted:
        exhausted = True
        logger.warning("search_patterns: 予算 %d を使い切りました（途中結果を返します）", budget)

    passed.sort(key=_pattern_size_key)
    return SearchResult(patterns=tuple(passed), exhausted=exhausted, nodes=counter.used)


def _pattern_size_key(g: Pattern):
    return (len(g.closed_sites), len(g.sites), g.radius, sorted(g.closed_sites), sorted(g.open_sites))
