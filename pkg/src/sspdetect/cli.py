"""Command-line entry point.

Subcommands::

    detect    run sliding super point detection over one or more trace shards
    oracle    exact per-window opposite counts ("slot,cip,count")
    eval      per-slot FPR/FNR/TFR of a detect report against an oracle table
    synth     generate a synthetic trace plus its ground truth
    snapshot  export / import / merge grid snapshots

Exit status: 0 success, 2 configuration error, 3 input error, 4 candidate
buffer cap exceeded.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import sys
from dataclasses import dataclass, replace

from . import __version__
from .distributed import (MERGE_POLICIES, SnapshotMeta, import_snapshot, merge_rseas,
                          simulate_nodes, write_snapshot)
from .errors import CandidateOverflow, ConfigError, SnapshotError, TraceError
from .estimator import WindowConfig
from .hashing import RhfgConfig, config_problems
from .reconstruct import DEFAULT_BUFFER_CAP, reconstruct
from .rsea import DetectionReport
from .workload import (CnetSpec, GroundTruth, Trace, evaluate, exact_counts, format_ip,
                       mean_accuracy, orient_trace, parse_ip, parse_synth_spec, read_trace,
                       read_truth, slot_indices, synth_trace, write_trace)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_CAP = 4

STRATEGIES = ("leveled", "recursive")


@dataclass(frozen=True)
class RunConfig:
    eta: int = 1 << 11
    q: int = 14
    r: int = 5
    delta: int = 6
    k: int = 300
    mu: float = 1.0
    theta: int = 1024
    seed: int = 0x5EED_5EED_5EED_5EED
    alpha: int = 1 << 15
    workers: int = 1
    merge_policy: str = "min"
    strategy: str = "leveled"
    start: float = 0.0
    cap: int = DEFAULT_BUFFER_CAP

    @property
    def rhfg(self) -> RhfgConfig:
        return RhfgConfig(self.q, self.r, self.delta, self.seed)

    @property
    def window(self) -> WindowConfig:
        return WindowConfig(self.mu, self.k, self.start)

    def validate(self) -> None:
        problems = config_problems(self.rhfg, self.eta, self.k, self.theta)
        if not self.mu > 0:
            problems.append(f"mu must be positive (mu={self.mu})")
        if self.alpha < 1:
            problems.append(f"alpha must be positive (alpha={self.alpha})")
        if self.workers < 1:
            problems.append(f"workers must be positive (workers={self.workers})")
        if self.merge_policy not in MERGE_POLICIES:
            problems.append(f"unknown merge policy {self.merge_policy!r}")
        if self.strategy not in STRATEGIES:
            problems.append(f"unknown strategy {self.strategy!r}")
        if problems:
            raise ConfigError(problems)


FULL = RunConfig()
DESK = replace(FULL, eta=256, q=10, delta=8, r=5, theta=128, k=30)

_FLAGS = ("eta", "q", "r", "delta", "k", "mu", "theta", "seed", "alpha", "workers",
          "merge_policy", "strategy", "start", "cap")


def _hex_or_int(text: str) -> int:
    return int(text, 0) if text.lower().startswith("0x") else int(text, 16)


def run_config(args: argparse.Namespace) -> RunConfig:
    base = DESK if args.desk else FULL
    given = {f: getattr(args, f) for f in _FLAGS if getattr(args, f, None) is not None}
    cfg = replace(base, **given)
    cfg.validate()
    return cfg


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("detector parameters (defaults: full scale)")
    g.add_argument("--eta", type=int, help="distance recorders per estimator (2048)")
    g.add_argument("--q", type=int, help="column index bits (14)")
    g.add_argument("--r", type=int, help="rows / hash functions (5)")
    g.add_argument("--delta", type=int, help="block stride in bits (6)")
    g.add_argument("--k", type=int, help="window length in slots (300)")
    g.add_argument("--mu", type=float, help="slot duration in seconds (1)")
    g.add_argument("--theta", type=int, help="super point threshold (1024)")
    g.add_argument("--seed", type=_hex_or_int, help="64-bit hash seed, hexadecimal")
    g.add_argument("--alpha", type=int, help="IP pairs per scan batch (32768)")
    g.add_argument("--workers", type=int, help="worker threads per phase (1)")
    g.add_argument("--merge-policy", dest="merge_policy", choices=MERGE_POLICIES,
                   help="how node grids combine (min)")
    g.add_argument("--strategy", choices=STRATEGIES, help="reconstruction strategy (leveled)")
    g.add_argument("--start", type=float, help="timestamp of slot 0 (0)")
    g.add_argument("--cap", type=int, help="candidate buffer hard cap (2**24)")
    g.add_argument("--desk", action="store_true",
                   help="small preset: eta=256 q=10 delta=8 r=5 theta=128 k=30")


def _open_out(path: str, binary: bool = False):
    if path == "-":
        return contextlib.nullcontext(sys.stdout.buffer if binary else sys.stdout)
    return open(path, "wb" if binary else "w")


def _load_trace(path: str, fmt: str) -> Trace:
    if path == "-":
        return read_trace(sys.stdin.buffer, fmt)
    try:
        return read_trace(path, fmt)
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc.strerror}") from None


def format_reports(reports: list[DetectionReport], n_slots: int) -> str:
    out = io.StringIO()
    out.write(f"# slots 0 {n_slots - 1}\n")
    out.write("slot,cip,estimate\n")
    for rep in reports:
        for cip, est in rep.entries:
            out.write(f"{rep.slot},{format_ip(cip)},{est:.2f}\n")
    return out.getvalue()


def parse_reports(text: str) -> tuple[dict[int, set[int]], int | None]:
    """Reported hosts per slot and the declared slot count (``None`` if absent)."""
    reported: dict[int, set[int]] = {}
    n_slots = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line.startswith("# slots"):
            n_slots = int(line.split()[3]) + 1
            continue
        if not line or line.startswith("#") or line.startswith("slot,"):
            continue
        try:
            slot, cip, _ = line.split(",")
            reported.setdefault(int(slot), set()).add(parse_ip(cip))
        except ValueError as exc:
            raise TraceError(f"report line {lineno}: {exc}") from None
    return reported, n_slots


def cmd_detect(args, cfg: RunConfig) -> int:
    shards = [_load_trace(p, args.format) for p in args.traces]
    if args.cnet:
        cnet = CnetSpec(args.cnet)
        shards = [orient_trace(t, cnet) for t in shards]
    reports = []
    for res in simulate_nodes(shards, cfg.rhfg, cfg.eta, cfg.window, cfg.theta,
                              policy=cfg.merge_policy, strategy=cfg.strategy,
                              workers=cfg.workers, alpha=cfg.alpha, n_slots=args.slots,
                              cap=cfg.cap):
        reports.append(res.report)
    n_slots = len(reports)
    with _open_out(args.output) as fh:
        fh.write(format_reports(reports, n_slots))
    if args.figure:
        from .plotting import plot_detections
        plot_detections([r.slot for r in reports], [len(r) for r in reports], args.figure)
    return EXIT_OK


def cmd_oracle(args, cfg: RunConfig) -> int:
    trace = _load_trace(args.trace, args.format)
    truth = exact_counts(trace, cfg.window, args.slots)
    if args.supers_only:
        truth = truth.filtered(cfg.theta)
    with _open_out(args.output) as fh:
        fh.write(truth.to_text())
    return EXIT_OK


def evaluate_tables(reported: dict[int, set[int]], truth: GroundTruth, theta: int,
                    n_slots: int | None = None):
    """Per-slot accuracy rows over slots ``0 .. n-1``."""
    n = truth.n_slots if n_slots is None else n_slots
    return [(s, evaluate(reported.get(s, ()), truth.at(s), theta)) for s in range(n)]


def format_eval(rows) -> str:
    out = io.StringIO()
    out.write("# rates are normalised by the number of true super points; fpr may exceed 1\n")
    out.write("slot,fpr,fnr,tfr\n")
    for s, a in rows:
        flag = ",degenerate" if a.degenerate else ""
        out.write(f"{s},{a.fpr:.6f},{a.fnr:.6f},{a.tfr:.6f}{flag}\n")
    fpr, fnr, tfr = mean_accuracy([a for _, a in rows])
    out.write(f"mean,{fpr:.6f},{fnr:.6f},{tfr:.6f}\n")
    return out.getvalue()


def cmd_eval(args, cfg: RunConfig) -> int:
    try:
        with open(args.reports) as fh:
            reported, rep_slots = parse_reports(fh.read())
        truth = read_truth(args.truth)
    except OSError as exc:
        raise TraceError(f"cannot read {exc.filename}: {exc.strerror}") from None
    if rep_slots is not None and rep_slots != truth.n_slots:
        raise TraceError(f"slot misalignment: reports cover {rep_slots} slots, "
                         f"truth covers {truth.n_slots}")
    stray = [s for s in reported if not 0 <= s < truth.n_slots]
    if stray:
        raise TraceError(f"slot misalignment: report slot {min(stray)} outside truth range")
    rows = evaluate_tables(reported, truth, cfg.theta)
    with _open_out(args.output) as fh:
        fh.write(format_eval(rows))
    if args.figure:
        from .plotting import plot_accuracy
        plot_accuracy([s for s, _ in rows], [a for _, a in rows], args.figure)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    try:
        with open(args.spec) as fh:
            spec = parse_synth_spec(fh.read())
    except OSError as exc:
        raise TraceError(f"cannot read {args.spec}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"workload spec: {exc}") from None
    try:
        trace, truth = synth_trace(spec, cfg.window, args.synth_seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with _open_out(args.output, binary=True) as fh:
        write_trace(trace, fh, args.format)
    if args.truth:
        if args.supers_only:
            truth = truth.filtered(cfg.theta)
        with _open_out(args.truth) as fh:
            fh.write(truth.to_text())
    return EXIT_OK


def cmd_snapshot(args, cfg: RunConfig) -> int:
    if args.action == "export":
        trace = _load_trace(args.inputs[0], args.format)
        n_slots = args.slots
        if n_slots is None:
            slots = slot_indices(trace, cfg.window)
            n_slots = int(slots.max()) + 1 if slots.size else 0
        if n_slots < 1:
            raise TraceError("trace covers no slots; nothing to export")
        for last in simulate_nodes([trace], cfg.rhfg, cfg.eta, cfg.window, cfg.theta,
                                   strategy=cfg.strategy, workers=cfg.workers, alpha=cfg.alpha,
                                   n_slots=n_slots, cap=cfg.cap):
            if last.slot == n_slots - 1:
                break  # keep the grid as it stands at the end of the final slot
        meta = SnapshotMeta.for_rsea(last.grid, cfg.k, cfg.theta, last.slot, args.node)
        with _open_out(args.output, binary=True) as fh:
            write_snapshot(last.grid, fh, meta)
        return EXIT_OK

    loaded = []
    for path in args.inputs:
        try:
            loaded.append(import_snapshot(path, alpha=cfg.alpha))
        except OSError as exc:
            raise TraceError(f"cannot read {path}: {exc.strerror}") from None
    if args.action == "import":
        rsea, meta = loaded[0]
        k = meta.k or cfg.k
        theta = meta.theta or cfg.theta
        report = reconstruct(rsea, k, theta, cfg.strategy, cfg.workers, meta.slot, cfg.cap)
        with _open_out(args.output) as fh:
            fh.write(f"# node {meta.node} slot {meta.slot} seed {meta.seed:#018x} q {meta.q} "
                     f"r {meta.r} delta {meta.delta} eta {meta.eta} k {k} theta {theta}\n")
            fh.write("slot,cip,estimate\n")
            for cip, est in report.entries:
                fh.write(f"{report.slot},{format_ip(cip)},{est:.2f}\n")
        return EXIT_OK

    merged = merge_rseas([r for r, _ in loaded], cfg.merge_policy, cfg.workers)
    first = loaded[0][1]
    meta = SnapshotMeta.for_rsea(merged, first.k, first.theta,
                                 max(m.slot for _, m in loaded), args.node)
    with _open_out(args.output, binary=True) as fh:
        write_snapshot(merged, fh, meta)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspdetect",
                                     description="Sliding super point detection over IP-pair traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect sliding super points")
    p.add_argument("traces", nargs="+", help="trace shard(s), one per node; '-' for stdin")
    p.add_argument("--format", choices=("auto", "binary", "text"), default="auto")
    p.add_argument("--cnet", nargs="+", metavar="PREFIX",
                   help="orient raw (src, dst) records using these core-network prefixes")
    p.add_argument("--slots", type=int, help="number of slots to run (default: through last record)")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--figure", help="also write a per-slot detection count plot here")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("oracle", help="exact sliding-window opposite counts")
    p.add_argument("trace")
    p.add_argument("--format", choices=("auto", "binary", "text"), default="auto")
    p.add_argument("--slots", type=int)
    p.add_argument("--supers-only", action="store_true", help="keep only counts >= theta")
    p.add_argument("-o", "--output", default="-")
    _common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="score a detect report against oracle truth")
    p.add_argument("reports")
    p.add_argument("truth")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--figure", help="also write an FPR/FNR/TFR plot here")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic trace and its truth")
    p.add_argument("spec", help="INI workload description")
    p.add_argument("--synth-seed", type=int, default=0, help="generator seed")
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    p.add_argument("--truth", help="write ground truth table here")
    p.add_argument("--supers-only", action="store_true")
    p.add_argument("-o", "--output", default="-")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("snapshot", help="export, import or merge grid snapshots")
    p.add_argument("action", choices=("export", "import", "merge"))
    p.add_argument("inputs", nargs="+", help="trace (export) or snapshot files")
    p.add_argument("--format", choices=("auto", "binary", "text"), default="auto")
    p.add_argument("--slots", type=int, help="export: stop after this many slots")
    p.add_argument("--node", type=int, default=0, help="node id recorded in the header")
    p.add_argument("-o", "--output", default="-")
    _common(p)
    p.set_defaults(func=cmd_snapshot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = run_config(args)
        if args.command == "snapshot" and args.action in ("export", "import") and len(args.inputs) != 1:
            raise ConfigError(f"snapshot {args.action} takes exactly one input")
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"sspdetect: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceError, SnapshotError) as exc:
        print(f"sspdetect: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CandidateOverflow as exc:
        print(f"sspdetect: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
