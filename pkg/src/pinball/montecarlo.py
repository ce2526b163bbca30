"""モンテカルロ推定と定理の検証ハーネス

サンプル i は stream_index = i の一様乱数から作る。
チャンクはプロセスプールで並列に処理し、サンプル番号の順に結果をまとめるので、
ワーカー数を変えても出力は変わらない。
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import polars as pl
from scipy import stats
from sklearn.linear_model import LinearRegression

from .configuration import GENERATOR_ID, Configuration, check_extent, hybrid
from .enhancement import Pattern, check_detour, enhance
from .errors import FitError, InvalidArgumentError, PatternError, PinballError
from .events import (
    radial_closed_path,
    rect_crossing,
    surrounding_circuit_4rect,
    surrounding_circuit_exact,
)
from .fileio import atomic_write_text
from .geometry import RegionKind
from .settings import get_settings
from .tracer import trace

logger = logging.getLogger(__name__)

EVENTS = ("E", "A", "Aprime", "Acirc", "Acirc4")

# 検証で迂回路の影響を受けない中心 Q_100。n > CORE_RADIUS のときだけ再生する
CORE_RADIUS = 100

# CSV の seed 列は UInt64
MAX_SEED = (1 << 64) - 1


# --- 事象 ---

def event_extent(event: str, n: int, pattern: Optional[Pattern] = None) -> int:
    """事象の判定に必要な範囲 M（強化するときはパターンの分だけ広げる）"""
    if event not in EVENTS:
        raise InvalidArgumentError(f"不明な事象です: {event}（{', '.join(EVENTS)} のいずれか）")
    if n < 1:
        raise InvalidArgumentError(f"n は 1 以上が必要です: n={n}")
    if event in ("Acirc", "Acirc4") and n < 2:
        raise InvalidArgumentError(f"{event} には n >= 2 が必要です: n={n}")
    M = n + 1 if event in ("E", "A") else 2 * n + 1
    if pattern is not None:
        M += 2 * pattern.radius + 1
    return M


def evaluate_event(event: str, c: Configuration, n: int, max_steps: Optional[int] = None) -> bool:
    if event == "E":
        t = trace(c, max_steps=max_steps)
        return t.closed and t.within(n)
    if event == "A":
        return radial_closed_path(c, n).holds
    if event == "Aprime":
        return rect_crossing(c, n, RegionKind.T).holds
    if event == "Acirc":
        return surrounding_circuit_exact(c, n).holds
    if event == "Acirc4":
        return surrounding_circuit_4rect(c, n).holds
    raise InvalidArgumentError(f"不明な事象です: {event}")


def event_label(event: str, enhanced: bool) -> str:
    return f"{event}:enhanced" if enhanced else event


def _max_steps(M: int) -> int:
    return int(get_settings().tracer.budget_factor) * (2 * M + 1) ** 2


# --- 並列実行 ---

def _chunks(N: int, size: int) -> List[Tuple[int, ...]]:
    return [tuple(range(s, min(s + size, N))) for s in range(0, N, size)]


def _run(func: Callable, tasks: list, workers: int) -> list:
    """tasks を順に処理して結果を連結する（順序はタスク順）"""
    if workers <= 1 or len(tasks) <= 1:
        results = [func(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(func, tasks))
    return [r for chunk in results for r in chunk]


def _sample_pair(p, M, seed, i, pattern):
    omega = Configuration.sample(p, M, seed, i)
    return omega, (enhance(omega, pattern) if pattern is not None else None)


def _estimate_chunk(args) -> List[bool]:
    event, p, n, M, seed, indices, pattern, max_steps = args
    out = []
    for i in indices:
        omega, tilde = _sample_pair(p, M, seed, i, pattern)
        out.append(evaluate_event(event, tilde if tilde is not None else omega, n, max_steps))
    return out


def _compare_chunk(args) -> List[Tuple[bool, bool]]:
    event, p, n, M, seed, indices, pattern, max_steps = args
    out = []
    for i in indices:
        omega, tilde = _sample_pair(p, M, seed, i, pattern)
        out.append((evaluate_event(event, omega, n, max_steps), evaluate_event(event, tilde, n, max_steps)))
    return out


# --- 統計 ---

def z_value(confidence: float) -> float:
    return float(stats.norm.ppf(0.5 + confidence / 2))


def wilson_interval(k: int, N: int, confidence: float = 0.95) -> Tuple[float, float]:
    if N < 1 or not 0 <= k <= N:
        raise InvalidArgumentError(f"0 <= k <= N, N >= 1 が必要です: k={k}, N={N}")
    z = z_value(confidence)
    phat = k / N
    denom = 1 + z * z / N
    center = (phat + z * z / (2 * N)) / denom
    half = z * math.sqrt(phat * (1 - phat) / N + z * z / (4 * N * N)) / denom
    lo = min(max(0.0, center - half), phat)
    hi = max(min(1.0, center + half), phat)
    return lo, hi


@dataclass(frozen=True)
class EstimationReport:
    event: str
    p: float
    n: int
    trials: int
    hits: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seed: int
    generator: str = GENERATOR_ID
    confidence: float = 0.95
    walltime_ms: Optional[float] = None


def _report(event, p, n, N, hits, seed, confidence, walltime_ms) -> EstimationReport:
    lo, hi = wilson_interval(hits, N, confidence)
    return EstimationReport(
        event=event,
        p=float(p),
        n=n,
        trials=N,
        hits=hits,
        estimate=hits / N,
        ci_lo=lo,
        ci_hi=hi,
        seed=seed,
        confidence=confidence,
        walltime_ms=walltime_ms,
    )


def _check_run_args(p: float, N: int, workers: int, seed: int) -> None:
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"確率 p は [0, 1] の範囲が必要です: p={p}")
    if not 0 <= seed <= MAX_SEED:
        raise InvalidArgumentError(f"seed は 0 以上 2^64 未満が必要です: seed={seed}")
    if N < 1:
        raise InvalidArgumentError(f"試行回数 N は 1 以上が必要です: N={N}")
    if workers < 1:
        raise InvalidArgumentError(f"workers は 1 以上が必要です: {workers}")


def estimate_event(
    event: str,
    p: float,
    n: int,
    N: int,
    seed: int,
    enhanced: bool = False,
    pattern: Optional[Pattern] = None,
    workers: int = 1,
) -> EstimationReport:
    """ストリーム 0..N-1 で事象を判定し、ウィルソン区間を付けて返す"""
    _check_run_args(p, N, workers, seed)
    if enhanced and pattern is None:
        raise InvalidArgumentError("enhanced=True にはパターンが必要です")
    cfg = get_settings().montecarlo
    pattern = pattern if enhanced else None
    M = event_extent(event, n, pattern)
    check_extent(M)
    max_steps = _max_steps(M)

    started = time.perf_counter()
    tasks = [
        (event, p, n, M, seed, chunk, pattern, max_steps)
        for chunk in _chunks(N, int(cfg.chunk_size))
    ]
    hits = sum(_run(_estimate_chunk, tasks, workers))
    walltime = (time.perf_counter() - started) * 1000 if cfg.record_walltime else None

    report = _report(event_label(event, enhanced), p, n, N, hits, seed, float(cfg.confidence), walltime)
    logger.info(
        "estimate %s p=%s n=%d: %d/%d = %.4f [%.4f, %.4f]",
        report.event, p, n, hits, N, report.estimate, report.ci_lo, report.ci_hi,
    )
    return report


def estimate_series(
    event: str,
    ps: Sequence[float],
    ns: Sequence[int],
    N: int,
    seed: int,
    enhanced: bool = False,
    pattern: Optional[Pattern] = None,
    workers: int = 1,
) -> List[EstimationReport]:
    """p と n の組ごとに推定する（同じ seed なので p の間で結合している）"""
    return [
        estimate_event(event, p, n, N, seed, enhanced=enhanced, pattern=pattern, workers=workers)
        for p in ps
        for n in ns
    ]


# --- 強化の比較 ---

@dataclass(frozen=True)
class CompareReport:
    event: str
    p: float
    n: int
    trials: int
    both: int
    plain_only: int
    enhanced_only: int
    neither: int
    gap: float
    gap_lo: float
    gap_hi: float
    seed: int
    plain: EstimationReport
    enhanced: EstimationReport
    generator: str = GENERATOR_ID

    @property
    def implication_violations(self) -> int:
        """ω で成り立ち ω~ で成り立たないサンプルの数"""
        return self.plain_only


def compare_enhanced(
    p: float,
    n: int,
    N: int,
    seed: int,
    pattern: Pattern,
    workers: int = 1,
    event: str = "Aprime",
) -> CompareReport:
    _check_run_args(p, N, workers, seed)
    cfg = get_settings().montecarlo
    confidence = float(cfg.confidence)
    M = event_extent(event, n, pattern)
    check_extent(M)
    tasks = [
        (event, p, n, M, seed, chunk, pattern, _max_steps(M))
        for chunk in _chunks(N, int(cfg.chunk_size))
    ]
    pairs = _run(_compare_chunk, tasks, workers)

    both = sum(1 for a, b in pairs if a and b)
    plain_only = sum(1 for a, b in pairs if a and not b)
    enhanced_only = sum(1 for a, b in pairs if b and not a)
    neither = N - both - plain_only - enhanced_only

    gap = (enhanced_only - plain_only) / N
    var = (enhanced_only + plain_only) / N - gap * gap
    half = z_value(confidence) * math.sqrt(max(var, 0.0) / N)

    if plain_only:
        logger.error("compare: ω ∈ A なのに ω~ ∉ A のサンプルが %d 個あります", plain_only)

    return CompareReport(
        event=event,
        p=float(p),
        n=n,
        trials=N,
        both=both,
        plain_only=plain_only,
        enhanced_only=enhanced_only,
        neither=neither,
        gap=gap,
        gap_lo=gap - half,
        gap_hi=gap + half,
        seed=seed,
        plain=_report(event, p, n, N, both + plain_only, seed, confidence, None),
        enhanced=_report(event_label(event, True), p, n, N, both + enhanced_only, seed, confidence, None),
    )


# --- 定理の検証 ---

@dataclass(frozen=True)
class VerificationRecord:
    sample: int
    circuit: bool
    closed: bool
    contained: bool
    hybrid_contained: Optional[bool]
    passed: bool
    crosscheck_violation: bool = False
    error: bool = False
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return (
            self.passed
            and not self.crosscheck_violation
            and not self.error
            and (not self.circuit or bool(self.hybrid_contained))
        )


@dataclass(frozen=True)
class VerificationSummary:
    trials: int
    circuits: int
    passes: int
    conditional_pass_rate: float
    hybrid_violations: int
    crosscheck_violations: int
    errors: int
    detour_radius: int
    extent: int

    @property
    def all_ok(self) -> bool:
        return (
            self.passes == self.trials
            and self.hybrid_violations == 0
            and self.crosscheck_violations == 0
            and self.errors == 0
        )


def _verify_one(p, n, M, seed, i, pattern, D, core, max_steps) -> VerificationRecord:
    omega = Configuration.sample(p, M, seed, i)
    tilde = enhance(omega, pattern)
    circuit = surrounding_circuit_exact(tilde, n).holds
    four = surrounding_circuit_4rect(tilde, n).holds

    t = trace(omega, max_steps=max_steps)
    closed = t.closed
    contained = closed and t.within(2 * n + 2 * D)
    notes = []
    hybrid_contained = None
    if circuit:
        t0 = trace(hybrid(omega, tilde, core), max_steps=max_steps)
        hybrid_contained = t0.closed and t0.within(2 * n)
        if not (closed and contained):
            notes.append(
                f"L(ω): status={t.status.value} radius={t.containment_radius} (上限 {2 * n + 2 * D})"
            )
        if not hybrid_contained:
            notes.append(f"L(ω0): status={t0.status.value} radius={t0.containment_radius} (上限 {2 * n})")
    crosscheck_violation = four and not circuit
    if crosscheck_violation:
        notes.append("4 つの長方形は横断されるが厳密判定は閉路なし")
    if notes:
        notes.append(f"seed={seed} stream={i} p={p} n={n} M={M}")

    return VerificationRecord(
        sample=i,
        circuit=circuit,
        closed=closed,
        contained=contained,
        hybrid_contained=hybrid_contained,
        passed=(not circuit) or (closed and contained),
        crosscheck_violation=crosscheck_violation,
        diagnostics="; ".join(notes),
    )


def _verify_chunk(args) -> List[VerificationRecord]:
    p, n, M, seed, indices, pattern, D, core, max_steps = args
    out = []
    for i in indices:
        try:
            record = _verify_one(p, n, M, seed, i, pattern, D, core, max_steps)
        except PinballError as e:
            record = VerificationRecord(
                sample=i,
                circuit=False,
                closed=False,
                contained=False,
                hybrid_contained=None,
                passed=False,
                error=True,
                diagnostics=f"{type(e).__name__}: {e}; seed={seed} stream={i} p={p} n={n}",
            )
        if not record.ok:
            logger.warning("verify: サンプル %d が失敗しました: %s", i, record.diagnostics)
        out.append(record)
    return out


def verify_theorem(
    p: float,
    n: int,
    N: int,
    seed: int,
    pattern: Pattern,
    workers: int = 1,
    *,
    core_radius: int = CORE_RADIUS,
) -> Tuple[List[VerificationRecord], VerificationSummary]:
    """証明をサンプルごとに再生する

    ω~ に Q_2n \\ Q_n の閉路があれば、L(ω) は閉じて Q_{2n+2D} に入り、
    ω0 = hybrid(ω, ω~, core) の L(ω0) は Q_2n に入るはず。
    core_radius は設定にも CLI にも出さない（小さな n で動かすテスト専用）。
    """
    _check_run_args(p, N, workers, seed)
    cfg = get_settings().montecarlo
    core = core_radius
    if n <= core:
        raise InvalidArgumentError(f"n は中心の半径 {core} より大きい必要があります: n={n}")

    detour = check_detour(pattern)
    if not detour.ok:
        raise PatternError(f"パターン {pattern.name} は迂回路の検査に通りません")
    D = detour.detour_radius
    M = 2 * n + 2 * D + pattern.radius + 2
    check_extent(M)

    tasks = [
        (p, n, M, seed, chunk, pattern, D, core, _max_steps(M))
        for chunk in _chunks(N, int(cfg.chunk_size))
    ]
    records = sorted(_run(_verify_chunk, tasks, workers), key=lambda r: r.sample)

    circuits = [r for r in records if r.circuit]
    good = sum(1 for r in circuits if r.closed and r.contained and r.hybrid_contained)
    summary = VerificationSummary(
        trials=N,
        circuits=len(circuits),
        passes=sum(1 for r in records if r.passed),
        conditional_pass_rate=good / len(circuits) if circuits else 1.0,
        hybrid_violations=sum(1 for r in circuits if not r.hybrid_contained),
        crosscheck_violations=sum(1 for r in records if r.crosscheck_violation),
        errors=sum(1 for r in records if r.error),
        detour_radius=D,
        extent=M,
    )
    logger.info(
        "verify p=%s n=%d: circuits=%d/%d conditional pass rate=%.4f",
        p, n, summary.circuits, N, summary.conditional_pass_rate,
    )
    return records, summary


# --- 減衰のフィット ---

@dataclass(frozen=True)
class DecayFit:
    points: Tuple[Tuple[int, float], ...]
    c_hat: float
    intercept: float
    r2: float
    degenerate: bool = False
    dropped: Tuple[int, ...] = ()

    @property
    def points_used(self) -> int:
        return len(self.points)


def fit_decay(series: Sequence[Tuple[int, Union[EstimationReport, float]]]) -> DecayFit:
    """(n, log(1 - 推定値)) に直線をあてはめ、ĉ = -傾き とする"""
    usable = []
    dropped = []
    for n, value in series:
        estimate = value.estimate if isinstance(value, EstimationReport) else float(value)
        if estimate >= 1.0:
            dropped.append(int(n))
        else:
            usable.append((int(n), 1.0 - estimate))

    if len(usable) < 3:
        if dropped:
            logger.warning("fit_decay: 推定値 1 の点を除くと %d 点しか残りません", len(usable))
            return DecayFit(
                points=tuple(usable),
                c_hat=float("nan"),
                intercept=float("nan"),
                r2=float("nan"),
                degenerate=True,
                dropped=tuple(dropped),
            )
        raise FitError(f"フィットには 3 点以上が必要です（{len(usable)} 点）")

    x = np.array([n for n, _ in usable], dtype=float).reshape(-1, 1)
    y = np.log(np.array([q for _, q in usable], dtype=float))
    model = LinearRegression().fit(x, y)
    slope = float(model.coef_[0])
    return DecayFit(
        points=tuple(usable),
        c_hat=max(0.0, -slope),
        intercept=float(model.intercept_),
        r2=float(model.score(x, y)),
        degenerate=bool(dropped),
        dropped=tuple(dropped),
    )


# --- CSV ---

ESTIMATE_SCHEMA = {
    "event": pl.Utf8,
    "p": pl.Float64,
    "n": pl.Int64,
    "N": pl.Int64,
    "hits": pl.Int64,
    "estimate": pl.Float64,
    "ci_lo": pl.Float64,
    "ci_hi": pl.Float64,
    "seed": pl.UInt64,
    "generator": pl.Utf8,
    "walltime_ms": pl.Float64,
}

VERIFICATION_SCHEMA = {
    "sample": pl.Int64,
    "circuit": pl.Boolean,
    "closed": pl.Boolean,
    "contained": pl.Boolean,
    "hybrid_contained": pl.Boolean,
    "pass": pl.Boolean,
}

FIT_SCHEMA = {
    "c_hat": pl.Float64,
    "intercept": pl.Float64,
    "r2": pl.Float64,
    "points_used": pl.Int64,
}

COMPARE_SCHEMA = {
    "p": pl.Float64,
    "n": pl.Int64,
    "N": pl.Int64,
    "plain_hits": pl.Int64,
    "enhanced_hits": pl.Int64,
    "implication_violations": pl.Int64,
    "gap": pl.Float64,
    "gap_lo": pl.Float64,
    "gap_hi": pl.Float64,
    "seed": pl.UInt64,
    "generator": pl.Utf8,
}


def estimates_frame(reports: Sequence[EstimationReport]) -> pl.DataFrame:
    rows = [
        {
            "event": r.event,
            "p": r.p,
            "n": r.n,
            "N": r.trials,
            "hits": r.hits,
            "estimate": r.estimate,
            "ci_lo": r.ci_lo,
            "ci_hi": r.ci_hi,
            "seed": r.seed,
            "generator": r.generator,
            "walltime_ms": r.walltime_ms,
        }
        for r in reports
    ]
    return pl.from_dicts(rows, schema=ESTIMATE_SCHEMA)


def verification_frame(records: Sequence[VerificationRecord]) -> pl.DataFrame:
    rows = [
        {
            "sample": r.sample,
            "circuit": r.circuit,
            "closed": r.closed,
            "contained": r.contained,
            "hybrid_contained": r.hybrid_contained,
            "pass": r.passed,
        }
        for r in records
    ]
    return pl.from_dicts(rows, schema=VERIFICATION_SCHEMA)


def fit_frame(fit: DecayFit) -> pl.DataFrame:
    row = {
        "c_hat": fit.c_hat,
        "intercept": fit.intercept,
        "r2": fit.r2,
        "points_used": fit.points_used,
    }
    return pl.from_dicts([row], schema=FIT_SCHEMA)


def compare_frame(reports: Sequence[CompareReport]) -> pl.DataFrame:
    rows = [
        {
            "p": r.p,
            "n": r.n,
            "N": r.trials,
            "plain_hits": r.plain.hits,
            "enhanced_hits": r.enhanced.hits,
            "implication_violations": r.implication_violations,
            "gap": r.gap,
            "gap_lo": r.gap_lo,
            "gap_hi": r.gap_hi,
            "seed": r.seed,
            "generator": r.generator,
        }
        for r in reports
    ]
    return pl.from_dicts(rows, schema=COMPARE_SCHEMA)


def write_csv(frame: pl.DataFrame, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, frame.write_csv())
