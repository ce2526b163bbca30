"""コマンドラインの入口

終了コード: 0 成功 / 1 検証・検査の失敗 / 2 使い方や入力の誤り
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .configuration import FORMAT_HEADER as CONFIGURATION_FORMAT
from .configuration import GENERATOR_ID, Configuration, changed_sites
from .enhancement import FORMAT_HEADER as PATTERN_FORMAT
from .enhancement import enhance, load_pattern, save_pattern, search_patterns, validate_pattern
from .errors import FormatError, InvalidArgumentError, PatternError, ResourceLimitError
from .events import FORMAT_HEADER as WITNESS_FORMAT
from .events import (
    dump_witness,
    load_witness,
    radial_closed_path,
    rect_crossing,
    surrounding_circuit_4rect,
    surrounding_circuit_exact,
)
from .fileio import atomic_write_text
from .montecarlo import (
    EVENTS,
    compare_enhanced,
    compare_frame,
    estimate_series,
    estimates_frame,
    fit_decay,
    fit_frame,
    verification_frame,
    verify_theorem,
    write_csv,
)
from .render import LAYERS, RenderSpec, render_svg
from .settings import configure, get_settings
from .tracer import FORMAT_HEADER as TRAJECTORY_FORMAT
from .tracer import dump_trajectory, load_trajectory, trace

logger = logging.getLogger(__name__)

USAGE_ERRORS = (InvalidArgumentError, FormatError, PatternError, ResourceLimitError, FileNotFoundError)


def probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"数値ではありません: {text!r}")
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"[0, 1] の範囲が必要です: {text}")
    return p


def positive_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"整数ではありません: {text!r}")
    if k < 1:
        raise argparse.ArgumentTypeError(f"1 以上が必要です: {text}")
    return k


def nonneg_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"整数ではありません: {text!r}")
    if k < 0:
        raise argparse.ArgumentTypeError(f"0 以上が必要です: {text}")
    return k


def _version_text() -> str:
    formats = [CONFIGURATION_FORMAT, TRAJECTORY_FORMAT, PATTERN_FORMAT, WITNESS_FORMAT]
    lines = [f"pinball {__version__}", f"generator {GENERATOR_ID}"]
    lines.extend(f"format {f.lstrip('# ')}" for f in formats)
    return "\n".join(lines)


# --- サブコマンド ---

def cmd_sample(args) -> int:
    c = Configuration.sample(args.p, args.extent, args.seed, args.stream)
    c.save(args.out)
    print(f"{args.out}: M={c.extent} closed={c.closed_fraction:.4f}")
    return 0


def cmd_trace(args) -> int:
    c = Configuration.load(args.config)
    t = trace(c, max_steps=args.max_steps)
    dump_trajectory(t, args.out)
    if args.svg:
        spec = RenderSpec.from_settings(layers=("lattice", "mirrors", "trajectory"))
        atomic_write_text(args.svg, render_svg(c, trajectory=t, spec=spec))
    print(
        f"status={t.status.value} steps={t.steps} "
        f"linf_diameter={t.linf_diameter} containment_radius={t.containment_radius}"
    )
    return 0


def cmd_enhance(args) -> int:
    c = Configuration.load(args.config)
    g = load_pattern(args.pattern)
    tilde = enhance(c, g, excluded_core=args.exclude_core)
    tilde.save(args.out)
    changed = changed_sites(c, tilde)
    if args.diff:
        atomic_write_text(args.diff, "".join(f"{a} {b}\n" for a, b in changed))
    print(f"{args.out}: pattern={g.name} changed={len(changed)}")
    return 0


def cmd_event(args) -> int:
    c = Configuration.load(args.config)
    if args.event == "A":
        result = radial_closed_path(c, args.n)
    elif args.event == "Aprime":
        result = rect_crossing(c, args.n)
    elif args.event == "Acirc":
        result = surrounding_circuit_exact(c, args.n, witness=True)
    else:
        result = surrounding_circuit_4rect(c, args.n)
    if args.out:
        dump_witness(result, args.out)
    print(f"{result.event} n={result.n}: {'holds' if result.holds else 'fails'}"
          f" (witness={result.witness_kind or 'none'})")
    return 0


def cmd_estimate(args) -> int:
    if args.fit_csv and len(args.p) != 1:
        raise InvalidArgumentError("--fit-csv には --p を 1 つだけ指定してください")
    pattern = load_pattern(args.pattern) if args.enhanced else None
    reports = estimate_series(
        args.event, args.p, args.n, args.trials, args.seed,
        enhanced=args.enhanced, pattern=pattern, workers=args.workers,
    )
    frame = estimates_frame(reports)
    if args.csv:
        write_csv(frame, args.csv)
    for r in reports:
        print(f"{r.event} p={r.p} n={r.n}: {r.hits}/{r.trials} = {r.estimate:.4f} [{r.ci_lo:.4f}, {r.ci_hi:.4f}]")

    if args.fit_csv:
        fit =fit_decay([(r.n, r) for r in reports])
        write_csv(fit_frame(fit), args.fit_csv)
        print(f"fit: c_hat={fit.c_hat:.6g} r2={fit.r2:.4f} points={fit.points_used}")
    return 0


def cmd_compare(args) -> int:
    g = load_pattern(args.pattern)
    reports = [
        compare_enhanced(p, n, args.trials, args.seed, g, workers=args.workers, event=args.event)
        for p in args.p
        for n in args.n
    ]
    if args.csv:
        write_csv(compare_frame(reports), args.csv)
    for r in reports:
        print(
            f"{r.event} p={r.p} n={r.n}: plain={r.plain.hits} enhanced={r.enhanced.hits} "
            f"violations={r.implication_violations} gap={r.gap:.4f} [{r.gap_lo:.4f}, {r.gap_hi:.4f}]"
        )
    return 1 if any(r.implication_violations for r in reports) else 0


def cmd_verify(args) -> int:
    g = load_pattern(args.pattern)
    records, summary = verify_theorem(args.p, args.n, args.trials, args.seed, g, workers=args.workers)
    if args.csv:
        write_csv(verification_frame(records), args.csv)
    print(
        f"verify p={args.p} n={args.n}: circuits={summary.circuits}/{summary.trials} "
        f"conditional_pass_rate={summary.conditional_pass_rate:.4f} "
        f"hybrid_violations={summary.hybrid_violations} "
        f"crosscheck_violations={summary.crosscheck_violations} errors={summary.errors} "
        f"D={summary.detour_radius} M={summary.extent}"
    )
    for r in records:
        if not r.ok:
            print(f"  sample {r.sample}: {r.diagnostics}")
    return 0 if summary.all_ok else 1


def cmd_pattern(args) -> int:
    if args.action == "check":
        g = load_pattern(args.pattern, validate=False)
        report = validate_pattern(g)
        print(f"{g.name}: {'ok' if report.ok else 'fail'} ({report.summary()})")
        return 0 if report.ok else 1

    if args.radius is None:
        raise InvalidArgumentError("pattern search には --radius が必要です")
    result = search_patterns(args.radius, args.budget)
    print(f"found={len(result.patterns)} nodes={result.nodes} exhausted={result.exhausted}")
    for g in result.patterns:
        print(f"  {g.name}: closed={sorted(map(tuple, g.closed_sites))}")
        if args.out:
            save_pattern(g, Path(args.out) / f"{g.name}.pattern")
    return 0


def cmd_render(args) -> int:
    c = Configuration.load(args.config)
    t = load_trajectory(args.trajectory) if args.trajectory else None
    w = load_witness(args.witness) if args.witness else None
    g = load_pattern(args.pattern, validate=False) if args.pattern else None
    layers = list(args.layers) if args.layers else ["lattice", "mirrors"]
    if t is not None and "trajectory" not in layers:
        layers.append("trajectory")
    if w is not None and "circuit_witness" not in layers:
        layers.append("circuit_witness")
    if g is not None and "pattern_matches" not in layers:
        layers.append("pattern_matches")
    if args.n is not None and "regions" not in layers:
        layers.append("regions")
    spec = RenderSpec.from_settings(layers=layers, scale=args.scale)
    atomic_write_text(args.out, render_svg(c, trajectory=t, witness=w, pattern=g, region_n=args.n, spec=spec))
    print(f"{args.out}: layers={','.join(spec.layers)}")
    return 0


# --- 引数 ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinball", description="Manhattan pinball の鏡モデル")
    parser.add_argument("--version", action="store_true", help="形式のバージョンと乱数生成器を表示")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="設定の上書き")
    parser.add_argument("--log-level", default=None, help="ログレベル（設定の logging.level より優先）")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sample", help="配置を生成する")
    p.add_argument("--p", type=probability, required=True)
    p.add_argument("--extent", type=positive_int, required=True)
    p.add_argument("--seed", type=nonneg_int, required=True)
    p.add_argument("--stream", type=nonneg_int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("trace", help="原点から光線を追跡する")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--max-steps", type=positive_int)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("enhance", help="パターンで強化した配置を作る")
    p.add_argument("--config", required=True)
    p.add_argument("--pattern", default="default")
    p.add_argument("--exclude-core", type=positive_int)
    p.add_argument("--out", required=True)
    p.add_argument("--diff")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("event", help="事象を判定して証拠を書き出す")
    p.add_argument("--config", required=True)
    p.add_argument("--event", choices=("A", "Aprime", "Acirc", "Acirc4"), required=True)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_event)

    p = sub.add_parser("estimate", help="事象の確率を推定する")
    p.add_argument("--event", choices=EVENTS, required=True)
    p.add_argument("--p", type=probability, nargs="+", required=True)
    p.add_argument("--n", type=positive_int, nargs="+", required=True)
    p.add_argument("--trials", type=positive_int, required=True)
    p.add_argument("--seed", type=nonneg_int, required=True)
    p.add_argument("--enhanced", action="store_true")
    p.add_argument("--pattern", default="default")
    p.add_argument("--csv")
    p.add_argument("--fit-csv")
    p.add_argument("--workers", type=positive_int, default=1)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="強化前後で事象を比べる")
    p.add_argument("--event", choices=EVENTS, default="Aprime")
    p.add_argument("--p", type=probability, nargs="+", required=True)
    p.add_argument("--n", type=positive_int, nargs="+", required=True)
    p.add_argument("--trials", type=positive_int, required=True)
    p.add_argument("--seed", type=nonneg_int, required=True)
    p.add_argument("--pattern", default="default")
    p.add_argument("--csv")
    p.add_argument("--workers", type=positive_int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="証明をサンプルごとに再生する")
    p.add_argument("--p", type=probability, required=True)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--trials", type=positive_int, required=True)
    p.add_argument("--seed", type=nonneg_int, required=True)
    p.add_argument("--pattern", default="default")
    p.add_argument("--csv")
    p.add_argument("--workers", type=positive_int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pattern", help="パターンの検査と探索")
    p.add_argument("action", choices=("check", "search"))
    p.add_argument("--pattern", default="default")
    p.add_argument("--radius", type=positive_int)
    p.add_argument("--budget", type=positive_int, default=100000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("render", help="SVG を書き出す")
    p.add_argument("--config", required=True)
    p.add_argument("--trajectory")
    p.add_argument("--witness")
    p.add_argument("--pattern")
    p.add_argument("--n", type=positive_int)
    p.add_argument("--layers", nargs="+", choices=LAYERS)
    p.add_argument("--scale", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def _setup_logging(level: Optional[str]) -> None:
    cfg = get_settings().logging
    logging.basicConfig(
        level=(level or cfg.level).upper(),
        format=cfg.format,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.version:
        print(_version_text())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        configure(overrides=args.set)
        _setup_logging(args.log_level)
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"pinball {args.command}: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # omegaconf の dotlist やログレベルの誤り
        print(f"pinball: {e}", file=sys.stderr)
        return 2
