"""Command-line front end.

Subcommands: ``analyze`` (exact idealized throughputs), ``simulate`` (one
simulator run), ``table`` (rebuild a published table next to its reference
values) and ``optimize`` (W/N search).  Every CSV written starts with a
``#`` manifest header; the body below it is deterministic for a given
command line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata, resources
from pathlib import Path

from . import markov
from .atoms import AtomSpec, PatternError, builtin_cross_atom, builtin_star_atom, load_pattern, with_lsp
from .optimizer import InfeasibleBudget, OverheadBudget, optimize
from .simulator import CSV_COLUMNS, SimConfig, csv_row, degradation, overhead_metric, run

OUT_DIR_ENV = "PNCARQ_OUT_DIR"
ANALYZE_COLUMNS = ("p1", "p2", "th1", "th2", "th3", "hop_by_hop", "gain_T_vs_NT", "gain_NC_vs_C")
TABLE_COLUMNS = ("table", "row", "p", "ours", "ci95", "reference", "deviation")
SWEEP_COLUMNS = ("W", "N", "throughput_per_round", "ci95", "wasteful_fraction", "e1_at_p1")
SUPPORTED_TABLES = ("1", "2", "3", "4", "6", "7", "8", "9", "10")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def reference_tables() -> dict:
    text = resources.files("pncarq").joinpath("data/reference_tables.json").read_text()
    return json.loads(text)


# ----------------------------------------------------------------------
# output plumbing


def _out_path(args, default_name: str) -> Path | None:
    if args.out:
        return Path(args.out)
    d = os.environ.get(OUT_DIR_ENV)
    return Path(d) / default_name if d else None


def _csv_body(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _manifest(args, path: Path | None, started: float) -> str:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    lines = [
        f"command: {args.command}",
        f"config: {json.dumps(config, sort_keys=True)}",
        f"seed: {getattr(args, 'seed', None)}",
        f"version: {_version()}",
        f"output: {path if path else '-'}",
        f"duration_s: {time.time() - started:.3f}",
    ]
    return "".join(f"# {l}\n" for l in lines)


def _emit(args, columns, rows, default_name: str, started: float, append: bool = False) -> None:
    body = _csv_body(columns, rows)
    sys.stdout.write(body)
    path = _out_path(args, default_name)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    if append and path.exists():
        with path.open() as fh:
            header = next((l for l in fh if not l.startswith("#")), "")
        if header.strip() != ",".join(columns):
            raise UsageError(f"{path} has a different column layout")
        with path.open("a") as fh:
            fh.write(body.split("\n", 1)[1])
        return
    path.write_text(_manifest(args, path, started) + body)


def read_csv_body(path: str | Path) -> str:
    """CSV text with the manifest header removed."""
    return "".join(l for l in Path(path).read_text().splitlines(True) if not l.startswith("#"))


# ----------------------------------------------------------------------
# atoms and configs


def _atom(args, p: float | None = None) -> AtomSpec:
    name = args.atom
    p = args.p if p is None else p
    five = [getattr(args, f"p{i}", None) for i in range(1, 6)]
    if name == "cross":
        if any(v is not None for v in five):
            if p is not None:
                five = [p if v is None else v for v in five]
            if any(v is None for v in five):
                raise UsageError("give all of --p1..--p5, or --p as the default for the rest")
            return builtin_cross_atom(*five)
        return builtin_cross_atom(1.0 if p is None else p)
    if any(v is not None for v in five):
        raise UsageError("--p1..--p5 only apply to the cross atom")
    if name == "star":
        return builtin_star_atom(1.0 if p is None else p)
    if name.startswith("file:"):
        try:
            atom = load_pattern(Path(name[5:]).read_text())
        except OSError as exc:
            raise UsageError(str(exc)) from exc
        return atom if p is None else with_lsp(atom, p)
    raise UsageError(f"unknown atom {name!r}")


def _atom_factory(name: str):
    if name == "cross":
        return builtin_cross_atom
    if name == "star":
        return builtin_star_atom
    if name.startswith("file:"):
        base = load_pattern(Path(name[5:]).read_text())
        return lambda p: with_lsp(base, p)
    raise UsageError(f"unknown atom {name!r}")


def _sim_config(args, atom: AtomSpec) -> SimConfig:
    cfg = SimConfig(
        atom,
        mode="realistic" if args.realistic else "idealized",
        coupling="coupled" if args.coupled else "non-coupled",
        tracking=args.tracking,
        W=args.w, N=args.n, K=args.k, D=args.d,
        seed=args.seed, rounds=args.rounds, warmup=args.warmup,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


# ----------------------------------------------------------------------
# analyze


def _grid(args) -> list[tuple[float, float]]:
    if args.p_range:
        try:
            lo, hi, step = (float(x) for x in args.p_range.split(":"))
        except ValueError as exc:
            raise UsageError("--p-range wants start:stop:step") from exc
        if step <= 0 or lo > hi:
            raise UsageError("bad --p-range")
        # anchored at the top so 0.57:0.95:0.05 gives 0.95, 0.90, ..., 0.60, 0.57
        ps = []
        k = 0
        while hi - k * step > lo + 1e-9:
            ps.append(round(hi - k * step, 10))
            k += 1
        ps.append(lo)
        return [(p, p) for p in ps]
    if args.p1 is not None or args.p2 is not None:
        if args.p1 is None or args.p2 is None:
            raise UsageError("analyze needs both --p1 and --p2")
        return [(args.p1, args.p2)]
    return [(args.p if args.p is not None else 0.8,) * 2]


def analyze_rows(points) -> list[dict]:
    rows = []
    for p1, p2 in points:
        if not (0 < p1 <= 1 and 0 < p2 <= 1):
            raise UsageError(f"probabilities must lie in (0, 1], got {p1}, {p2}")
        t1, t2, t3 = markov.th1(p1, p2), markov.th2(p1, p2), markov.th3(p1, p2)
        rows.append({
            "p1": p1, "p2": p2,
            "th1": f"{t1:.6f}", "th2": f"{t2:.6f}", "th3": f"{t3:.6f}",
            "hop_by_hop": f"{markov.hop_by_hop(p1):.6f}",
            "gain_T_vs_NT": f"{t1 / t3 - 1:.6f}",
            "gain_NC_vs_C": f"{t1 / t2 - 1:.6f}",
        })
    return rows


def cmd_analyze(args) -> int:
    started = time.time()
    rows = analyze_rows(_grid(args))
    _emit(args, ANALYZE_COLUMNS, rows, "analyze.csv", started)
    if len(rows) == 1:
        r = rows[0]
        f = float(r["th1"]) - float(r["th3"])
        g = float(r["th1"]) - float(r["th2"])
        print(f"# margins: th1-th3 = {f:.4f}, th1-th2 = {g:.4f}", file=sys.stderr)
    return 0


# ----------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _sim_config(args, _atom(args))
    stats = run(cfg)
    _emit(args, CSV_COLUMNS, [csv_row(cfg, stats)], "simulate.csv", started, append=True)
    print(f"# throughput {stats.throughput_per_round:.4f} +- {stats.ci95:.4f} packets/round "
          f"({stats.throughput_per_slot:.4f} per slot)", file=sys.stderr)
    return 0


# ----------------------------------------------------------------------
# table


def _run_cell(cfg: SimConfig):
    s = run(cfg)
    return s.throughput_per_round, s.throughput_per_slot, s.ci95, s.multi_iter_fraction


def _cells_for(table: str, rounds: int, warmup: int, seed: int) -> dict:
    """Simulation cells each table needs, keyed by a readable label."""
    base = dict(rounds=rounds, warmup=warmup, seed=seed)
    ref = reference_tables()[table]
    cells = {}

    def add(key, atom, **kw):
        cells[key] = SimConfig(atom, **base, **kw)

    if table == "1":
        for p in ref["p"]:
            add(("multi", p), builtin_cross_atom(p), tracking="multi")
    elif table in ("2", "3", "4"):
        for p in ref["p"]:
            add(("opt", p), builtin_cross_atom(p), mode="realistic", W=170, N=4)
            if table == "3":
                add(("naive", p), builtin_cross_atom(p), mode="realistic", W=1, N=1)
            if table == "4":
                add(("nt", p), builtin_cross_atom(p), tracking="off")
    elif table in ("6", "7", "8", "9"):
        for p in ref["p"]:
            for name, make in (("cross", builtin_cross_atom), ("star", builtin_star_atom)):
                for coupling in ("coupled", "non-coupled"):
                    for tracking in ("off", "single"):
                        add((name, coupling, tracking, p), make(p),
                            coupling=coupling, tracking=tracking)
    elif table == "10":
        for p in ref["p"]:
            add(("bench", p), builtin_star_atom(p))
            add(("opt", p), builtin_star_atom(p), mode="realistic", W=130, N=3)
            add(("naive", p), builtin_star_atom(p), mode="realistic", W=1, N=1)
    return cells



def _run_cells(cells: dict, jobs: int) -> dict:
    keys = list(cells)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, [cells[k] for k in keys]))
    else:
        results = [_run_cell(cells[k]) for k in keys]
    return dict(zip(keys, results))


def build_table(table: str, rounds: int = 200_000, warmup: int = 10_000, seed: int = 1,
                jobs: int = 1) -> list[dict]:
    """Rows of ``TABLE_COLUMNS`` comparing this artifact with the reference."""
    if table not in SUPPORTED_TABLES:
        raise UsageError(f"unsupported table {table!r}; choose from {', '.join(SUPPORTED_TABLES)}")
    ref = reference_tables()[table]
    res = _run_cells(_cells_for(table, rounds, warmup, seed), jobs)
    rows = []

    def row(name, p, ours, ci, reference):
        dev = "" if reference is None else f"{ours - reference:+.4f}"
        rows.append({"table": table, "row": name, "p": p, "ours": f"{ours:.4f}",
                     "ci95": "" if ci is None else f"{ci:.4f}",
                     "reference": "" if reference is None else reference, "deviation": dev})

    R = ref["rows"]
    for k, p in enumerate(ref["p"]):
        if table == "1":
            _, _, _, share = res[("multi", p)]
            row("portion", p, share, None, R["portion"][k])
        elif table == "2":
            bench = markov.th1(p, p)
            opt, _, ci, _ = res[("opt", p)]
            row("benchmark", p, bench, None, R["benchmark"][k])
            row("optimized", p, opt, ci, R["optimized"][k])
            row("degradation", p, degradation(opt, bench), None, R["degradation"][k])
            row("overhead", p, overhead_metric(opt, bench), None, R["overhead"][k])
        elif table == "3":
            naive, _, cin, _ = res[("naive", p)]
            opt, _, ci, _ = res[("opt", p)]
            row("W1_N1", p, naive, cin, R["W1_N1"][k])
            row("W170_N4", p, opt, ci, R["W170_N4"][k])
            row("gain", p, opt / naive - 1, None, R["gain"][k])
        elif table == "4":
            nt, _, cin, _ = res[("nt", p)]
            opt, _, ci, _ = res[("opt", p)]
            row("no_tracking", p, nt, cin, R["no_tracking"][k])
            row("optimized", p, opt, ci, R["optimized"][k])
            row("gain", p, opt / nt - 1, None, R["gain"][k])
        elif table in ("6", "7", "8", "9"):
            for name in ("cross", "star"):
                if table in ("6", "7"):
                    coupling = "coupled" if table == "6" else "non-coupled"
                    pairs = [("no_tracking", coupling, "off"), ("tracking", coupling, "single")]
                else:
                    tracking = "off" if table == "8" else "single"
                    pairs = [("coupled", "coupled", tracking), ("non_coupled", "non-coupled", tracking)]
                vals = []
                for label, coupling, tracking in pairs:
                    _, per_slot, ci, _ = res[(name, coupling, tracking, p)]
                    slots = 2 if name == "cross" else 3
                    vals.append(per_slot)
                    row(f"{name}:{label}", p, per_slot, ci / slots, R[f"{name}:{label}"][k])
                row(f"{name}:gain", p, vals[1] / vals[0] - 1, None, None)
        elif table == "10":
            for label, key in (("benchmark", "bench"), ("optimized", "opt"), ("naive_W1_N1", "naive")):
                _, per_slot, ci, _ = res[(key, p)]
                row(label, p, per_slot, ci / 3, R[label][k])
    return rows


def format_table(rows: list[dict], title: str, unit: str) -> str:
    ps = sorted({r["p"] for r in rows}, reverse=True)
    names = list(dict.fromkeys(r["row"] for r in rows))
    cell = {(r["row"], r["p"]): r for r in rows}
    width = max(len(n) for n in names) + 2
    out = [f"{title} [{unit}]", " " * width + "".join(f"{'p=' + str(p):>18}" for p in ps)]
    for n in names:
        line = f"{n:<{width}}"
        for p in ps:
            r = cell.get((n, p))
            if r is None:
                line += " " * 18
                continue
            refv = r["reference"]
            txt = r["ours"] if refv == "" else f"{float(r['ours']):.3f} ({refv})"
            line += f"{txt:>18}"
        out.append(line)
    out.append("cells read: ours (reference); other atoms of the per-atom tables are omitted")
    return "\n".join(out)


def cmd_table(args) -> int:
    started = time.time()
    ref = reference_tables()
    rows = build_table(args.id, args.rounds, args.warmup, args.seed, args.jobs)
    print(format_table(rows, ref[args.id]["title"], ref[args.id]["unit"]), file=sys.stderr)
    _emit(args, TABLE_COLUMNS, rows, f"table{args.id}.csv", started)
    return 0


# ----------------------------------------------------------------------
# optimize


def cmd_optimize(args) -> int:
    started = time.time()
    try:
        budget = OverheadBudget(args.e0, args.e1, args.e1_header)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    p = args.p_floor if args.p_floor is not None else (0.75 if args.atom == "star" else
                                                        markov.VIABILITY_THRESHOLD)
    res = optimize(_atom_factory(args.atom), budget, K=args.k, D=args.d, p=p,
                   rounds=args.rounds, warmup=args.warmup, seed=args.seed, step=args.step)
    rows = [{"W": s.W, "N": res.N, "throughput_per_round": f"{s.throughput:.6f}",
             "ci95": f"{s.ci95:.6f}", "wasteful_fraction": f"{s.wasteful_fraction:.6f}",
             "e1_at_p1": f"{(args.k + s.W / 8) / (res.N * args.d):.6f}"} for s in res.sweep]
    _emit(args, SWEEP_COLUMNS, rows, "optimize.csv", started)
    print(f"# chosen W={res.W} N={res.N} (W_max={res.w_max}) at p={p}: "
          f"{res.throughput:.4f} packets/round; e1 at p=1 {res.e1_at_p1:.4%} "
          f"(budget e1 {budget.e1:.2%}, e2 {budget.e2:.2%})", file=sys.stderr)
    return 0


# ----------------------------------------------------------------------


def _common(sp, sim: bool = True):
    sp.add_argument("--atom", default="cross", help="cross, star or file:<pattern path>")
    sp.add_argument("--p", type=float, help="homogeneous link success probability")
    for i in range(1, 6):
        sp.add_argument(f"--p{i}", type=float, default=None)
    sp.add_argument("--k", type=int, default=30, help="ACK header bytes")
    sp.add_argument("--d", type=int, default=600, help="data packet bytes")
    sp.add_argument("--rounds", type=int, default=200_000)
    sp.add_argument("--warmup", type=int, default=10_000)
    sp.add_argument("--seed", default="1")
    sp.add_argument("--out", help="CSV path (default: $%s/<command>.csv)" % OUT_DIR_ENV)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pncarq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="exact idealized throughputs")
    _common(a)
    a.add_argument("--p-range", help="start:stop:step over homogeneous p, stepping down "
                   "from stop and always including start")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run the simulator once")
    _common(s)
    m = s.add_mutually_exclusive_group()
    m.add_argument("--ideal", dest="realistic", action="store_false")
    m.add_argument("--realistic", dest="realistic", action="store_true")
    c = s.add_mutually_exclusive_group()
    c.add_argument("--coupled", dest="coupled", action="store_true")
    c.add_argument("--noncoupled", dest="coupled", action="store_false")
    s.add_argument("--tracking", nargs="?", const="single", default="single",
                   choices=("off", "single", "multi"))
    s.add_argument("--w", type=int, default=1)
    s.add_argument("--n", type=int, default=1)
    s.set_defaults(func=cmd_simulate, realistic=False, coupled=False)

    t = sub.add_parser("table", help="rebuild a published table")
    t.add_argument("id", choices=SUPPORTED_TABLES)
    t.add_argument("--rounds", type=int, default=200_000)
    t.add_argument("--warmup", type=int, default=10_000)
    t.add_argument("--seed", default="1")
    t.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)

    o = sub.add_parser("optimize", help="search W and N under an overhead budget")
    _common(o)
    o.add_argument("--e0", type=float, default=0.05)
    o.add_argument("--e1", type=float, default=0.025)
    o.add_argument("--e1-header", type=float, default=0.0125)
    o.add_argument("--p-floor", type=float, default=None,
                   help="worst-case LSP for the search (cross 0.57, star 0.75)")
    o.add_argument("--step", type=int, default=10)
    o.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        if hasattr(args, "seed"):
            from .channel import parse_seed
            try:
                args.seed = parse_seed(args.seed)
            except ValueError as exc:
                raise UsageError(f"bad seed: {exc}") from exc
        return args.func(args)
    except (UsageError, PatternError) as exc:
        print(f"pncarq: error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleBudget as exc:
        print(f"pncarq: infeasible: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"pncarq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
