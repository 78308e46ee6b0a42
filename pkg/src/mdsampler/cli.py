"""Command-line entry point.

Exit codes: 0 success, 2 bad flags or config, 3 bad or missing data,
4 numerical failure.  Settings may come from a ``key = value`` config file
(``--config``); flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .core import MD, VARIANTS, DescentError, SamplerConfig
from .data_io import (DataError, GroundTruthBn, load_dataset, random_cpts, read_network,
                      reference_network, save_dataset, simulate_conditions, simulate_dataset,
                      SIGNALING11_CLAMPS, write_network)
from .estimation import EstimationError
from .report import adjacency_tsv, dumps

EXIT_OK, EXIT_FLAGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# per-subcommand sampler defaults (L, delta_h, p_mx, kstar, iters, burnin)
DEFAULTS = {
    "rastrigin": dict(L=10, delta_h=2.0, p_mx=0.1, kstar=100, iters=5_000_000, burnin=50_000),
    "bn-sim": dict(L=15, delta_h=10.0, p_mx=0.1, kstar=100, iters=5_000_000, burnin=50_000),
    "bn-learn": dict(L=20, delta_h=10.0, p_mx=0.1, kstar=10, iters=5_000_000, burnin=50_000),
    "crossval": dict(L=20, delta_h=10.0, p_mx=0.1, kstar=10, iters=5_000_000, burnin=50_000),
}


class FlagError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise FlagError(message)


def _sampler_flags(p):
    g = p.add_argument_group("sampler")
    g.add_argument("--L", type=int, help="number of density bands")
    g.add_argument("--delta-h", type=float, help="log-density spacing of the ladder")
    g.add_argument("--p-mx", type=float, help="mixed-jump probability")
    g.add_argument("--kstar", type=int, help="maximum number of recorded modes")
    g.add_argument("--iters", type=int, help="total iterations including burn-in")
    g.add_argument("--burnin", type=int, help="burn-in iterations")
    g.add_argument("--variant", choices=VARIANTS, help="md, md0 (no mixed jump) or wl")
    g.add_argument("--sigma", type=float, help="local proposal scale (continuous targets)")
    g.add_argument("--b", type=float, help="mixed-jump prior count (DAG targets)")
    g.add_argument("--reps", type=int, help="independent repetitions / datasets")
    g.add_argument("--backend", choices=("auto", "python", "cython"), help="kernel backend")


def _bn_flags(p):
    g = p.add_argument_group("network score")
    g.add_argument("--beta", type=float, help="edge penalty (default 0.1)")
    g.add_argument("--alpha", type=float, help="Dirichlet pseudo count (default 1)")
    g.add_argument("--cap", type=int, help="indegree cap (default 4)")


def build_parser():
    p = _Parser(prog="mdsampler", description="Multi-domain sampling and domain-based representations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--seed", type=int, help="master seed (default 0)")
        sp.add_argument("--out", help="output directory (default: JSON to stdout)")

    r = sub.add_parser("rastrigin", help="Rastrigin target vs quadrature oracle")
    common(r)
    _sampler_flags(r)
    r.add_argument("--m", type=int, help="dimension (default 4)")
    r.add_argument("--A", type=float, help="Rastrigin constant (default 2)")

    s = sub.add_parser("bn-sim", help="simulated 6-node networks vs exhaustive enumeration")
    common(s)
    _sampler_flags(s)
    _bn_flags(s)
    s.add_argument("--network", help="chain6, graph6 or both (default both)")
    s.add_argument("--rows", type=int, help="rows per dataset (default 500)")
    s.add_argument("--intervention", type=float, help="fraction of interventional rows (default 0.2)")
    s.add_argument("--variants", help="comma-separated variants to compare (default md,md0,wl)")

    lrn = sub.add_parser("bn-learn", help="structure learning on a dataset")
    common(lrn)
    _sampler_flags(lrn)
    _bn_flags(lrn)
    lrn.add_argument("data", nargs="?", help="dataset CSV")
    lrn.add_argument("--reference", help="reference network for TP/FP")
    lrn.add_argument("--threshold", help="comma-separated edge thresholds (default 0.5,0.7,0.9)")

    e = sub.add_parser("bn-enumerate", help="exact posterior of a network with at most 6 nodes")
    common(e)
    _bn_flags(e)
    e.add_argument("data", nargs="?", help="dataset CSV")
    e.add_argument("--backend", choices=("auto", "python", "cython"), help="kernel backend")

    c = sub.add_parser("crossval", help="cross-validated predictive evaluation")
    common(c)
    _sampler_flags(c)
    _bn_flags(c)
    c.add_argument("data", nargs="?", help="dataset CSV")
    c.add_argument("--folds", type=int, help="number of folds (default 10)")
    c.add_argument("--by-condition", action="store_true", default=None,
                   help="one fold per value of the cond column")
    c.add_argument("--threshold", type=float, help="edge threshold (default 0.9)")
    c.add_argument("--reference", help="reference network for TP/FP")

    g = sub.add_parser("simulate", help="write a simulated dataset")
    common(g)
    g.add_argument("--network", help="chain6, graph6, signaling11 or a network file")
    g.add_argument("--rows", type=int, help="rows (per condition with --conditions)")
    g.add_argument("--intervention", type=float, help="fraction of interventional rows")
    g.add_argument("--conditions", action="store_true", default=None,
                   help="signaling11 only: nine blocks, each clamping one node")
    return p


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if not os.path.exists(path):
        raise FlagError(f"config file {path} not found")
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FlagError(f"{path}, line {n}: expected key = value")
            key, value = (t.strip() for t in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve(args, parser):
    """Merge config-file values under explicit flags and apply defaults."""
    opts = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        types = {a.dest: a.type for a in sub._actions if a.dest != "help"}
        flags = {a.dest: a for a in sub._actions}
        for key, raw in read_config(args.config).items():
            if key not in flags or key in ("config", "command"):
                raise FlagError(f"unknown config key {key!r}")
            if key in opts:
                continue
            act = flags[key]
            if isinstance(act, argparse._StoreTrueAction):
                opts[key] = raw.lower() in ("1", "true", "yes", "on")
                continue
            try:
                val = types[key](raw) if types.get(key) else raw
            except ValueError:
                raise FlagError(f"config key {key}: bad value {raw!r}") from None
            if act.choices is not None and val not in act.choices:
                raise FlagError(f"config key {key}: {val!r} not in {list(act.choices)}")
            opts[key] = val
    for key, val in DEFAULTS.get(args.command, {}).items():
        opts.setdefault(key, val)
    opts.setdefault("seed", 0)
    opts.setdefault("reps", 1)
    opts.setdefault("variant", MD)
    return opts


def sampler_config(opts):
    try:
        return SamplerConfig(L=opts["L"], delta_h=opts["delta_h"], p_mx=opts["p_mx"],
                             kstar=opts["kstar"], burn_in=opts["burnin"], n_iter=opts["iters"],
                             seed=opts["seed"], variant=opts["variant"],
                             sigma=opts.get("sigma", 1.0), b=opts.get("b", 0.5))
    except ValueError as err:
        raise FlagError(str(err)) from None


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k not in ("seconds", "_runs")}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


class Output:
    """Collects files and writes them only once the command has succeeded."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def commit(self, report):
        text = dumps(report)
        if self.out_dir is None:
            sys.stdout.write(text)
            return
        os.makedirs(self.out_dir, exist_ok=True)
        self.files["report.json"] = text
        for name, body in self.files.items():
            final = os.path.join(self.out_dir, name)
            fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=".tmp-")
            with os.fdopen(fd, "w") as fh:
                fh.write(body)
            os.replace(tmp, final)


def _envelope(command, opts, body):
    resolved = {k: v for k, v in sorted(opts.items()) if k not in ("command", "config")}
    return {"command": command, "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "settings": resolved, **_strip_timing(body)}


def _thresholds(text):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise FlagError(f"bad threshold list {text!r}") from None
    if not vals:
        raise FlagError("empty threshold list")
    return vals


def _need_data(opts):
    path = opts.get("data")
    if not path:
        raise FlagError("a dataset CSV is required")
    return path


def _score_opts(opts):
    beta = opts.get("beta", 0.1)
    alpha = opts.get("alpha", 1.0)
    cap = opts.get("cap", 4)
    if not beta > 0 or not alpha > 0 or cap < 0:
        raise FlagError("need beta > 0, alpha > 0, cap >= 0")
    return beta, alpha, cap


def _use_backend(opts):
    name = opts.get("backend")
    if name:
        from . import kernels

        try:
            kernels.backend = kernels.get_backend(name)
        except ImportError as err:
            raise FlagError(str(err)) from None
        kernels.BACKEND = kernels.backend.BACKEND


def cmd_rastrigin(opts, out):
    from .experiments import rastrigin_study

    m = opts.get("m", 4)
    A = opts.get("A", 2.0)
    if m < 1 or not A > 0:
        raise FlagError("need m >= 1 and A > 0")
    if opts["reps"] < 1:
        raise FlagError("reps must be at least 1")
    cfg = sampler_config(opts)
    res = rastrigin_study(m, A, cfg, opts["reps"], opts["seed"])
    return res


def cmd_bn_sim(opts, out):
    from .experiments import bn_sim_study

    net = opts.get("network", "both")
    networks = ("chain6", "graph6") if net == "both" else tuple(net.split(","))
    for n in networks:
        if n not in ("chain6", "graph6"):
            raise FlagError(f"bn-sim compares against enumeration; network must be chain6 or graph6, got {n!r}")
    variants = tuple(v.strip() for v in opts.get("variants", "md,md0,wl").split(","))
    for v in variants:
        if v not in VARIANTS:
            raise FlagError(f"unknown variant {v!r}")
    rows = opts.get("rows", 500)
    frac = opts.get("intervention", 0.2)
    if rows < 1 or not 0 <= frac <= 1:
        raise FlagError("need rows >= 1 and intervention in [0, 1]")
    beta, alpha, cap = _score_opts(opts)
    cfg = sampler_config(opts)
    return bn_sim_study(networks, opts["reps"], variants, cfg, opts["seed"], rows, frac,
                        beta, alpha, cap)


def cmd_bn_learn(opts, out):
    from .experiments import bn_run, learn_summary, rep_rng

    path = _need_data(opts)
    thresholds = _thresholds(opts.get("threshold", "0.5,0.7,0.9"))
    beta, alpha, cap = _score_opts(opts)
    cfg = sampler_config(opts)
    data = load_dataset(path)
    reference = None
    if opts.get("reference"):
        reference, _ = read_network(opts["reference"])
        if len(reference) != data.m:
            raise DataError(f"reference has {len(reference)} nodes, data has {data.m}")
    runs = []
    for rep in range(opts["reps"]):
        run = bn_run(data, cfg, rep_rng(opts["seed"], rep), beta, alpha, cap)
        runs.append(learn_summary(run, data, thresholds, reference, local_c=max(thresholds)))
        if rep == 0:
            out.add("A.tsv", adjacency_tsv(run.A, data.names))
            for c in thresholds:
                out.add(f"mean_network_c{c:g}.txt", write_network(None, run.mean_network(c), data.arities))
    best = [r["best_log_posterior"] for r in runs]
    return {"dataset": {"path": path, "rows": data.n, "nodes": data.m, "arities": list(data.arities)},
            "runs": runs,
            "best_log_posterior": {"mean": float(np.mean(best)), "sd": float(np.std(best, ddof=1)) if len(best) > 1 else 0.0}}


def cmd_bn_enumerate(opts, out):
    from .dags import FamilyScores
    from .oracle import MAX_ENUM_NODES, cached_landscape, exact_landscape, landscape_key

    path = _need_data(opts)
    beta, alpha, cap = _score_opts(opts)
    data = load_dataset(path)
    if data.m > MAX_ENUM_NODES:
        raise FlagError(f"enumeration supports at most {MAX_ENUM_NODES} nodes, data has {data.m}")
    if out.out_dir is not None:
        # the cache entry (<digest>.npz and <digest>.json) lives beside the report
        land = cached_landscape(data, out.out_dir, beta, alpha, cap, opts.get("backend"))
    else:
        land = exact_landscape(FamilyScores(data, beta, alpha, cap), opts.get("backend"))
    summary = land.summary()
    summary["digest"] = landscape_key(data, beta, alpha, cap)
    summary["lambda"] = land.lam.tolist()
    return summary


def cmd_crossval(opts, out):
    from .experiments import crossval_study

    path = _need_data(opts)
    beta, alpha, cap = _score_opts(opts)
    cfg = sampler_config(opts)
    threshold = opts.get("threshold", 0.9)
    by_cond = bool(opts.get("by_condition", False))
    folds = opts.get("folds", 10)
    if not by_cond and folds < 2:
        raise FlagError("folds must be at least 2")
    data = load_dataset(path)
    if by_cond and data.cond is None:
        raise DataError(f"{path}: --by-condition needs a cond column")
    if not by_cond and not 2 <= folds <= data.n:
        raise FlagError(f"folds must lie in [2, {data.n}]")
    reference = None
    if opts.get("reference"):
        reference, _ = read_network(opts["reference"])
        if len(reference) != data.m:
            raise DataError(f"reference has {len(reference)} nodes, data has {data.m}")
    return crossval_study(data, cfg, folds, by_cond, threshold, opts["seed"], reference,
                          beta, alpha, cap)


def cmd_simulate(opts, out):
    from .dags import topological_order

    if out.out_dir is None:
        raise FlagError("simulate needs --out")
    net = opts.get("network", "chain6")
    rng = np.random.default_rng(int(opts["seed"]))
    if net in ("chain6", "graph6", "signaling11"):
        dag, names = reference_network(net)
        arity = 3 if net == "signaling11" else 2
        arities = (arity,) * len(dag)
    else:
        dag, arities = read_network(net)
        names = None
    bn = GroundTruthBn(dag, arities, random_cpts(dag, arities, rng), names)
    if opts.get("conditions"):
        if net != "signaling11":
            raise FlagError("--conditions is only defined for signaling11")
        data = simulate_conditions(bn, SIGNALING11_CLAMPS, opts.get("rows", 600), rng)
    else:
        frac = opts.get("intervention", 0.2)
        if not 0 <= frac <= 1:
            raise FlagError("intervention must lie in [0, 1]")
        data = simulate_dataset(bn, opts.get("rows", 500), frac, rng)
    with tempfile.TemporaryDirectory() as tmp:
        save_dataset(os.path.join(tmp, "data.csv"), data)
        for name in ("data.csv", "data.arities.json"):
            with open(os.path.join(tmp, name)) as fh:
                out.add(name, fh.read())
    out.add("network.txt", write_network(None, dag, arities))
    return {"network": net, "rows": data.n, "nodes": data.m, "arities": list(arities),
            "interventional_rows": int(data.fixed.any(axis=1).sum())}


COMMANDS = {
    "rastrigin": cmd_rastrigin,
    "bn-sim": cmd_bn_sim,
    "bn-learn": cmd_bn_learn,
    "bn-enumerate": cmd_bn_enumerate,
    "crossval": cmd_crossval,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise FlagError("a subcommand is required")
        opts = resolve(args, parser)
        _use_backend(opts)
        out = Output(opts.get("out"))
        body = COMMANDS[args.command](opts, out)
        out.commit(_envelope(args.command, opts, body))
        return EXIT_OK
    except FlagError as err:
        print(f"mdsampler: error: {err}", file=sys.stderr)
        return EXIT_FLAGS
    except (DataError, FileNotFoundError) as err:
        print(f"mdsampler: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (DescentError, EstimationError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"mdsampler: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
