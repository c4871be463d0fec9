"""Command-line front end.

Every subcommand resolves a :class:`~nearcrit.config.RunConfig` (defaults,
then ``--config`` file, then flags), runs the mapped operation and writes its
output under ``output_dir``. Each output file starts with a header that
holds the package version, the command line and the resolved configuration.

Exit codes: 0 success, 1 verification failure, 2 usage or parameter error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .backbone import explore_backbone
from .config import RunConfig, load_config
from .currents import CurrentMeasureSpec, worm_run
from .errors import NearcritError
from .extremal_length import extremal_length, extremal_length_oracle
from .fk import FkParams, enumerate_fk, sw_configs, sw_connection_series
from .ising_exact import SpinParams, exact_correlations
from .lattice import Quad, as_fraction, build_box, uniform_field, zeroed_field
from .records import EstimateRecord, batch_stderr, dumps, records_csv, stream_seed

SEED_SCHEME = "numpy SeedSequence(seed, spawn_key=stream key) per chain"
SCAN_KINDS = ("one-arm", "two-point", "mass", "backbone", "rsw", "mixing", "cluster-moments")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


# -- output ------------------------------------------------------------
class Output:
    """Writes files with a common header into the output directory."""

    def __init__(self, cfg: RunConfig, argv: list[str]):
        self.cfg = cfg
        self.dir = Path(cfg.output_dir)
        self.header = {"nearcrit_version": __version__, "command": " ".join(argv),
                       "config": cfg.to_dict(), "seed_scheme": SEED_SCHEME}
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p

    def csv(self, name: str, records) -> Path:
        lines = [f"nearcrit {__version__}", f"command: {self.header['command']}",
                 "config: " + json.dumps(self.header["config"], sort_keys=True),
                 f"seeds: {SEED_SCHEME}"]
        p = self._path(name)
        p.write_text(records_csv(records, lines))
        return p

    def json(self, name: str, result) -> Path:
        p = self._path(name)
        p.write_text(dumps({"header": self.header, "result": result}))
        return p

    def jsonl(self, name: str, rows) -> Path:
        p = self._path(name)
        lines = [json.dumps({"header": self.header}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in rows]
        p.write_text("\n".join(lines) + "\n")
        return p


# -- helpers -------------------------------------------------------------
def _float_list(text: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(not v.is_integer() for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _frac_list(text: str) -> list[str]:
    try:
        return [str(as_fraction(t)) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"expected a comma-separated list of fractions, got {text!r}") from None


def _budget(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid budget {text!r}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"budget must be an integer, got {text!r}")
    return int(v)


def _domain(cfg: RunConfig):
    """Box of side ``cfg.box`` at spacing ``cfg.a``, its centre vertex and an axis target."""
    g = build_box(cfg.a, cfg.box)
    origin = g.vertex_at((0, 0))
    pts = np.asarray(g.coords)
    on_axis = np.flatnonzero(pts[:, 1] == 0)
    target = int(on_axis[np.argmax(pts[on_axis, 0])])
    return g, int(origin), target


def _field(cfg: RunConfig, g, endpoints) -> np.ndarray:
    if cfg.field_schedule == "zeroed-near-endpoints":
        return zeroed_field(g, cfg.h, endpoints)
    return uniform_field(g, cfg.h)


# -- subcommands ---------------------------------------------------------
def cmd_enumerate(args, cfg: RunConfig, out: Output) -> int:
    g, origin, target = _domain(cfg)
    if g.n_edges > args.max_edges:
        raise UsageError(f"box has {g.n_edges} edges (ghost edges included), above "
                         f"--max-edges {args.max_edges}; use a smaller --box or larger --a")
    f = _field(cfg, g, (origin, target))
    sets = [[v] for v in range(g.n_vertices)] + [[origin, v] for v in range(g.n_vertices)]
    corr = exact_correlations(g, sets, SpinParams(cfg.beta, f))
    law = enumerate_fk(g, FkParams(beta=cfg.beta, field=tuple(f)))
    lab = law.space.labels()
    conn = [float(law.probs[lab[:, origin] == lab[:, v]].sum()) for v in range(g.n_vertices)]
    ghost = [float(law.probs[lab[:, v] == lab[:, g.ghost]].sum()) for v in range(g.n_vertices)]
    result = {"n_vertices": g.n_vertices, "n_edges": g.n_edges, "origin": origin,
              "coords": [[int(c) for c in p] for p in g.coords],
              "magnetization": corr[: g.n_vertices], "two_point": corr[g.n_vertices:],
              "fk_connection_to_origin": conn, "fk_connection_to_ghost": ghost}
    out.json("enumerate.json", result)
    return 0


def cmd_sample_fk(args, cfg: RunConfig, out: Output) -> int:
    g, origin, target = _domain(cfg)
    f = _field(cfg, g, (origin, target))
    params = FkParams(h=cfg.h, beta=cfg.beta, boundary=args.boundary, field=tuple(f))
    n = cfg.budget or 10_000
    boundary = g.inner_boundary(range(g.n_vertices))
    series = sw_connection_series(g, params, [([origin], boundary), ([origin], [g.ghost]),
                                              ([origin], [target])],
                                  n, stream_seed(cfg.seed, 11), via_wiring=False)
    desc = {"a": cfg.a, "h": cfg.h, "beta": cfg.beta, "box": cfg.box, "boundary": args.boundary,
            "field_schedule": cfg.field_schedule}
    recs = []
    for k, name in enumerate(("origin_to_boundary", "origin_to_ghost", "origin_to_target")):
        x = series[:, k].astype(float)
        recs.append(EstimateRecord(name, desc, float(x.mean()), batch_stderr(x), n, cfg.seed))
    cfgs = sw_configs(g, params, min(n, 2000), stream_seed(cfg.seed, 12))
    dens = cfgs[:, : g.n_internal].mean(axis=1)
    recs.append(EstimateRecord("open_edge_density", desc, float(dens.mean()),
                               batch_stderr(dens), len(dens), cfg.seed))
    out.csv("sample-fk.csv", recs)
    return 0


def _current_spec(cfg: RunConfig, to_ghost: bool):
    g, origin, target = _domain(cfg)
    f = _field(cfg, g, (origin, target))
    if to_ghost and not np.any(f > 0):
        raise UsageError("a current sourced at the ghost needs h > 0")
    sink = g.ghost if to_ghost else target
    return g, origin, target, CurrentMeasureSpec.ising(g, {origin, sink}, cfg.beta, f)


def cmd_sample_current(args, cfg: RunConfig, out: Output) -> int:
    g, origin, target, spec = _current_spec(cfg, args.to_ghost)
    n = cfg.budget or 10_000
    run = worm_run(spec, n, stream_seed(cfg.seed, 13), thin=args.thin)
    traced = run.labels != 0
    recs = []
    for e in range(g.n_edges):
        x = traced[:, e].astype(float)
        recs.append(EstimateRecord("edge_traced", {"a": cfg.a, "h": cfg.h, "edge": int(e),
                                                   "ends": [int(t) for t in g.edges[e]],
                                                   "sources": sorted(spec.sources)},
                                   float(x.mean()), batch_stderr(x), n, cfg.seed))
    out.csv("sample-current.csv", recs)
    return 0


def cmd_backbone(args, cfg: RunConfig, out: Output) -> int:
    g, origin, target, spec = _current_spec(cfg, args.to_ghost)
    run = worm_run(spec, args.count, stream_seed(cfg.seed, 14), thin=args.thin)
    rows = []
    for k, cur in enumerate(run.currents()):
        tr = explore_backbone(cur, origin, {target}, graph=g)
        rows.append({"sample": k, "step": 0, "vertex": origin, "explored": []})
        rows.extend({"sample": k, **s} for s in tr.steps())
    out.jsonl("backbone-trace.jsonl", rows)
    return 0


def cmd_verify(args, cfg: RunConfig, out: Output) -> int:
    from .suite import exact_suite, sampler_suite
    if args.suite == "exact":
        rep = exact_suite(args.max_edges, cfg.seed).to_dict()
    elif args.suite == "samplers":
        rep = sampler_suite(cfg.budget or 100_000, cfg.seed)
    else:
        from .suite import extremal_suite
        rep = extremal_suite(cfg.seed)
    out.json(f"verify-{args.suite}.json", rep)
    print(f"verify {args.suite}: {'PASS' if rep['passed'] else 'FAIL'}")
    return 0 if rep["passed"] else 1


def parse_quad(text: str) -> Quad:
    """Read a quad from lines ``v x y``, ``e u w`` and ``ab|bc|cd|da v0 v1 ...``.

    Vertices are numbered in the order of their ``v`` lines; the coordinates
    fix the rotation system. Blank lines and ``#`` comments are ignored.
    """
    coords, edges, arcs = [], [], {}
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split("#", 1)[0].split()
        if not tok:
            continue
        try:
            if tok[0] == "v" and len(tok) == 3:
                coords.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "e" and len(tok) == 3:
                edges.append((int(tok[1]), int(tok[2])))
            elif tok[0] in ("ab", "bc", "cd", "da") and len(tok) >= 2:
                arcs[tok[0]] = [int(t) for t in tok[1:]]
            else:
                raise ValueError
        except ValueError:
            raise UsageError(f"quad file line {lineno}: cannot parse {line.strip()!r}") from None
    missing = [k for k in ("ab", "bc", "cd", "da") if k not in arcs]
    if missing:
        raise UsageError(f"quad file lacks arcs {missing}")
    return Quad(len(coords), edges, arcs, coords=coords)


def cmd_extremal_length(args, cfg: RunConfig, out: Output) -> int:
    try:
        q = parse_quad(Path(args.quad).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read quad file: {exc}") from None
    arcs = tuple(args.arcs.split(","))
    if len(arcs) != 2:
        raise UsageError("--arcs takes two arc names, e.g. ab,cd")
    fn = extremal_length if args.method == "dirichlet" else extremal_length_oracle
    res = fn(q, arcs, info=True)
    result = {"length": res.length, "method": res.method, "residual": res.residual,
              "arcs": list(arcs)}
    out.json("extremal-length.json", result)
    print(json.dumps({k: result[k] for k in ("length", "method", "residual")}, sort_keys=True))
    return 0


def cmd_scan(args, cfg: RunConfig, out: Output) -> int:
    kind = args.kind
    kw = {"seed": cfg.seed}
    if cfg.budget is not None:
        kw["budget"] = cfg.budget
    if kind == "one-arm":
        if args.a:
            kw["a_grid"] = _frac_list(args.a)
        res = ex.one_arm_scan(**kw)
    elif kind == "two-point":
        if args.r:
            kw["r_grid"] = _int_list(args.r)
        if args.L:
            kw["L"] = args.L
        res = ex.critical_twopoint_scan(**kw)
    elif kind == "mass":
        budget = kw.pop("budget", None)
        h_grid = _float_list(args.h) if args.h else [0.05, 0.1, 0.2, 0.3, 0.4]
        sizes = {h: ex.DEFAULT_MASS_SIZES.get(h, (128, 20_000)) for h in h_grid}
        if args.L:
            sizes = {h: (args.L, b) for h, (_, b) in sizes.items()}
        if budget is not None:
            sizes = {h: (L, budget) for h, (L, _) in sizes.items()}
        res = ex.mass_scan(h_grid, sizes=sizes, **kw)
    elif kind == "backbone":
        res = ex.backbone_survival(h=cfg.h if cfg.h > 0 else 0.2, stride=cfg.stride, **kw)
    elif kind == "rsw":
        if args.n:
            kw["n_grid"] = _int_list(args.n)
        if args.H:
            kw["H_grid"] = _float_list(args.H)
        res = ex.near_critical_rsw_ratio(**kw)
    elif kind == "mixing":
        res = ex.mixing_ratio(**kw)
    else:
        if args.a:
            kw["a_grid"] = _frac_list(args.a)
        res = ex.cluster_moment_scan(**kw)
    if not isinstance(res, ex.ScanResult):
        res = ex.ScanResult([res])
    out.csv(f"scan-{kind}.csv", res.records)
    d = res.to_dict()
    d.pop("records")
    out.json(f"scan-{kind}-fit.json", d)
    if res.fit is not None:
        print(f"{kind}: exponent {res.fit.exponent:.4f} +- {res.fit.stderr:.4f}")
    return 0


def read_records_csv(path) -> list[dict]:
    """Rows of a CSV written by this package (header comment lines skipped)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    for r in rows:
        r["params"] = json.loads(r["params"]) if r.get("params") else {}
        for k in ("mean", "stderr"):
            r[k] = float(r[k])
    return rows


def cmd_fit(args, cfg: RunConfig, out: Output) -> int:
    try:
        rows = read_records_csv(args.input)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read records from {args.input}: {exc}") from None
    rows = [r for r in rows if args.observable is None or r["observable"] == args.observable]
    if len(rows) < 2:
        raise UsageError("need at least two matching rows to fit")

    def xval(r):
        v = r[args.x] if args.x in ("a", "h") else r["params"].get(args.x)
        if v in (None, ""):
            raise UsageError(f"row lacks the x column {args.x!r}")
        return float(as_fraction(str(v)))

    x = np.array([xval(r) for r in rows])
    y = np.array([r["mean"] for r in rows])
    err = np.array([r["stderr"] for r in rows])
    err = None if not np.all(err > 0) else err
    if args.model == "exponential":
        fit = ex.fit_exponential(x, y, err if err is not None else np.ones_like(y),
                                 power=args.power)
    else:
        fit = ex.fit_power_law(x, y, err, decay=args.model == "power-law-decay")
    out.json("fit.json", {"input": str(args.input), "observable": args.observable,
                          "x": args.x, "fit": fit.to_dict()})
    print(f"{fit.model}: exponent {fit.exponent:.4f} +- {fit.stderr:.4f}")
    return 0


COMMANDS = {"enumerate": cmd_enumerate, "sample-fk": cmd_sample_fk,
            "sample-current": cmd_sample_current, "backbone": cmd_backbone,
            "verify": cmd_verify, "extremal-length": cmd_extremal_length,
            "scan": cmd_scan, "fit": cmd_fit}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="configuration file (JSON or key = value lines)")
    common.add_argument("--output-dir", help="directory for output files")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--budget", type=_budget, help="Monte Carlo samples (accepts 1e5)")
    common.add_argument("--beta", type=float, help="inverse temperature (default critical)")
    common.add_argument("--box", help="box side in units of the unit square")
    common.add_argument("--field-schedule", choices=("uniform", "zeroed-near-endpoints"))
    single = _Parser(add_help=False)
    single.add_argument("--a", help="lattice spacing, e.g. 1/4")
    single.add_argument("--h", type=float, help="unscaled field")

    p = _Parser(prog="nearcrit", description="Near-critical planar Ising toolkit.")
    p.add_argument("--version", action="version", version=f"nearcrit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("enumerate", parents=[common, single],
                       help="exact spin and FK quantities on a small box")
    s.add_argument("--max-edges", type=int, default=22)
    s = sub.add_parser("sample-fk", parents=[common, single], help="Swendsen-Wang estimates")
    s.add_argument("--boundary", choices=("free", "wired"), default="free")
    for name, hlp in (("sample-current", "worm estimates of traced-edge marginals"),
                      ("backbone", "backbone exploration traces (JSON lines)")):
        s = sub.add_parser(name, parents=[common, single], help=hlp)
        s.add_argument("--to-ghost", action="store_true",
                       help="source the current at the origin and the ghost")
        s.add_argument("--thin", type=int, default=5)
        if name == "backbone":
            s.add_argument("action", choices=("trace",))
            s.add_argument("--count", type=int, default=10, help="number of traces")
    s = sub.add_parser("verify", parents=[common], help="exact and sampler checks")
    s.add_argument("--suite", choices=("exact", "samplers", "extremal"), default="exact")
    s.add_argument("--max-edges", type=int, default=12)
    s = sub.add_parser("extremal-length", parents=[common], help="extremal length of a quad")
    s.add_argument("quad", help="quad file")
    s.add_argument("--arcs", default="ab,cd")
    s.add_argument("--method", choices=("dirichlet", "oracle"), default="dirichlet")
    s = sub.add_parser("scan", parents=[common], help="scaling scans with fits")
    s.add_argument("kind", choices=SCAN_KINDS)
    s.add_argument("--a", help="comma-separated spacings, e.g. 1,1/2,1/4")
    s.add_argument("--h", help="comma-separated fields")
    s.add_argument("--r", help="comma-separated distances (two-point)")
    s.add_argument("--n", help="comma-separated annulus sizes (rsw)")
    s.add_argument("--H", help="comma-separated per-vertex fields (rsw)")
    s.add_argument("--L", type=int, help="lattice side")
    s = sub.add_parser("fit", parents=[common], help="refit a records CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--observable")
    s.add_argument("--x", default="a", help="a, h or a params key such as r")
    s.add_argument("--model", choices=("power-law", "power-law-decay", "exponential"),
                   default="power-law")
    s.add_argument("--power", type=float, default=0.25,
                   help="power-law correction of the exponential model")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {"output_dir": args.output_dir, "seed": args.seed, "budget": args.budget,
            "beta": args.beta, "box": args.box, "field_schedule": args.field_schedule}
    if args.command not in ("scan",):
        over["a"] = getattr(args, "a", None)
        over["h"] = getattr(args, "h", None)
    return cfg.updated(**over)


def run(argv=None) -> int:
    """Entry point; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"nearcrit: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        out = Output(cfg, ["nearcrit", *argv])
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, cfg, out)
    except (UsageError, NearcritError, OSError) as exc:
        print(f"nearcrit: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
