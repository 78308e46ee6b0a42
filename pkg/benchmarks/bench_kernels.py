"""Compiled vs pure-Python kernels: per-call timings and sampler throughput.

    python benchmarks/bench_kernels.py [--repeat 5] [--iters 20000] [--json out.json]

Both backends receive identical inputs (pre-drawn uniforms), so the
benchmark also checks that their outputs agree.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from mdsampler import _pycore, kernels
from mdsampler.core import MultiDomainSampler, SamplerConfig
from mdsampler.dags import DagSpace, FamilyScores, empty_dag
from mdsampler.data_io import synthetic_signaling_data
from mdsampler.experiments import simulate_bn_dataset


def kernel_cases(rng):
    _, data6 = simulate_bn_dataset("graph6", rng, 500, 0.2)
    t6 = FamilyScores(data6).table
    dag = (0, 1, 1, 5, 10, 12)
    nu = (0, 0, 1, 5, 8, 12)
    us = rng.random(15)
    V = np.ascontiguousarray(rng.uniform(0.5, 3.0, (4, 3)))
    nus = [nu, dag, (0,) * 6, (0, 1, 3, 7, 0, 0)]
    x4 = rng.uniform(-2, 2, 4)
    return {
        "rastrigin_logpdf(m=4)": lambda k: k.rastrigin_logpdf(x4, 2.0),
        "rastrigin_ascend(m=4)": lambda k: k.rastrigin_ascend(x4, 2.0, 1e-6, 10_000, 0.1)[1],
        "propose_neighbor(m=6)": lambda k: k.propose_neighbor(dag, 4, 0.37),
        "sna(m=6)": lambda k: k.sna(empty_dag(6), t6, 4, 10_000),
        "mixed_jump_sample(m=6)": lambda k: k.mixed_jump_sample(nu, (1.0, 2.0, 0.5), 0.5, 4, us),
        "mixed_jump_log_density(m=6,M=4)": lambda k: k.mixed_jump_log_density(nus, V, 0.5, 4, dag),
        "enumerate_dags(m=4)": lambda k: len(k.enumerate_dags(4, 3)),
    }


def time_call(fn, repeat):
    timer = timeit.Timer(fn)
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def sampler_throughput(backend, scores, iters):
    space = DagSpace(scores, backend=backend)
    cfg = SamplerConfig(L=20, delta_h=10.0, kstar=10, burn_in=iters // 10, n_iter=iters)
    s = MultiDomainSampler(space, cfg, empty_dag(scores.m), np.random.default_rng(0))
    t = timeit.default_timer()
    s.run()
    return (timeit.default_timer() - t) / iters, s.registry.log_dens


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)

    if kernels._core is None:
        print("compiled kernels are not built; run `python setup.py build_ext --inplace`")
        return 1
    backends = {"cython": kernels._core, "python": _pycore}
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in kernel_cases(rng).items():
        outs = {b: fn(k) for b, k in backends.items()}
        same = repr(outs["cython"]) == repr(outs["python"])
        t = {b: time_call(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}
        rows.append({"case": name, "cython_us": 1e6 * t["cython"], "python_us": 1e6 * t["python"],
                     "speedup": t["python"] / t["cython"], "outputs_match": same})

    _, data = synthetic_signaling_data(seed=0, rows_per_condition=200)
    scores = FamilyScores(data)
    thr = {}
    for b in backends:
        thr[b] = sampler_throughput(b, scores, args.iters)
    rows.append({"case": f"sampler iteration (11 nodes, {args.iters} iters)",
                 "cython_us": 1e6 * thr["cython"][0], "python_us": 1e6 * thr["python"][0],
                 "speedup": thr["python"][0] / thr["cython"][0],
                 "outputs_match": thr["cython"][1] == thr["python"][1]})

    w = max(len(r["case"]) for r in rows)
    print(f"{'case':<{w}}  {'cython us':>11}  {'python us':>11}  {'speedup':>8}  match")
    for r in rows:
        print(f"{r['case']:<{w}}  {r['cython_us']:11.2f}  {r['python_us']:11.2f}  "
              f"{r['speedup']:8.1f}  {r['outputs_match']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["outputs_match"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
