"""Study designs: Rastrigin vs quadrature, BN posteriors vs enumeration,
structure learning and cross-validation."""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from .continuous import (ContinuousSpace, RastriginTarget, layer_of, rastrigin_expectations,
                         rastrigin_oracle, rastrigin_payloads)
from .core import MD, MD0, WL, MultiDomainSampler, SamplerConfig
from .dags import (DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_CAP, DagSpace, FamilyScores,
                   adjacency, dag_edges, empty_dag, mask_to_parents)
from .data_io import (GroundTruthBn, dr_predictive_log_probability, predictive_log_probability,
                      random_cpts, reference_network, score_vs_reference, simulate_dataset,
                      threshold_network, crossval_split)
from .estimation import DrAccumulator
from .oracle import exact_landscape


def rep_rng(seed, rep):
    """Independent stream for repetition ``rep`` of a study seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(rep)])


# ---------------------------------------------------------------------------
# Rastrigin
# ---------------------------------------------------------------------------

def rastrigin_run(m, A, cfg, rng, oracle=None):
    """One MD run on the Rastrigin target, aligned to the oracle's domains.

    The chain starts from a standard normal draw (the exact global mode
    would sit on the measure-zero top band).
    """
    oracle = oracle or rastrigin_oracle(A)
    space = ContinuousSpace(RastriginTarget(m, A), sigma=cfg.sigma, mode_tol=cfg.mode_tol)
    x0 = rng.standard_normal(m)
    t0 = time.perf_counter()
    sampler = MultiDomainSampler(space, cfg, x0, rng)
    acc = DrAccumulator(cfg.kstar + 1, rastrigin_payloads(m), cfg.L)
    report = sampler.run(acc)
    elapsed = time.perf_counter() - t0
    dr = report.dr

    domains = oracle.domains(m)
    n_dom = len(domains)
    log_lam = np.full(n_dom, np.nan)
    mu = np.full((n_dom, m), np.nan)
    true_log_lam = np.empty(n_dom)
    true_mu = np.empty((n_dom, m))
    layers = np.empty(n_dom, dtype=np.int64)
    found = np.zeros(n_dom, dtype=bool)
    pos = {idx: d for d, (idx, _) in enumerate(domains)}
    for d, (idx, mode) in enumerate(domains):
        true_log_lam[d] = oracle.domain_log_lambda(idx)
        true_mu[d] = oracle.domain_mean(idx)
        layers[d] = layer_of(mode)
    for k, nu in enumerate(sampler.registry.modes):
        d = pos.get(oracle.classify(nu))
        if d is None:
            continue
        found[d] = True
        if dr.visited[k + 1]:
            log_lam[d] = math.log(dr.lam[k + 1])
            mu[d] = dr.mu["x"][k + 1]
    truth = rastrigin_expectations(oracle, m)
    return {
        "modes_registered": int(sampler.registry.M),
        "domains_found": int(found.sum()),
        "log_lambda": log_lam,
        "mu_x": mu,
        "true_log_lambda": true_log_lam,
        "true_mu_x": true_mu,
        "layers": layers,
        "lambda_sum": float(math.fsum(dr.lam.tolist())),
        "lambda_0": float(dr.lam[0]),
        "expectations": {name: np.asarray(dr.overall[name]) for name in truth},
        "true_expectations": truth,
        "acceptance": {kind: v["rate"] for kind, v in report.acceptance.items()},
        "gamma": report.gamma,
        "seconds": elapsed,
        "report": report,
    }


def rastrigin_study(m=4, A=2.0, cfg=None, reps=1, seed=0, progress=None):
    """Repeated runs and MSE tables against the quadrature oracle.

    Per-layer tables average the squared error of log lambda and of each
    coordinate of mu_X over the layer's domains and over repetitions.
    """
    cfg = cfg or SamplerConfig()
    oracle = rastrigin_oracle(A)
    runs = []
    for rep in range(reps):
        runs.append(rastrigin_run(m, A, cfg, rep_rng(seed, rep), oracle))
        if progress:
            progress(rep, runs[-1])
    layers = runs[0]["layers"]
    table = []
    for layer in range(1, m + 2):
        sel = layers == layer
        ll = np.array([r["log_lambda"][sel] - r["true_log_lambda"][sel] for r in runs])
        mx = np.array([r["mu_x"][sel] - r["true_mu_x"][sel] for r in runs])
        table.append({
            "layer": layer,
            "n_domains": int(sel.sum()),
            "mse_log_lambda": _nanmse(ll),
            "mse_mu_x": _nanmse(mx),
        })
    expect = {}
    for name in runs[0]["true_expectations"]:
        err = np.array([np.ravel(r["expectations"][name] - r["true_expectations"][name]) for r in runs])
        expect[name] = _nanmse(err)
    all_ll = np.array([r["log_lambda"] - r["true_log_lambda"] for r in runs])
    all_mu = np.array([r["mu_x"] - r["true_mu_x"] for r in runs])
    return {
        "m": m,
        "A": A,
        "reps": reps,
        "seed": seed,
        "config": cfg.to_dict(),
        "layer_table": table,
        "expectation_mse": expect,
        "mse_log_lambda": _nanmse(all_ll),
        "mse_mu_x": _nanmse(all_mu),
        "runs": [{
            "modes_registered": r["modes_registered"],
            "domains_found": r["domains_found"],
            "lambda_sum": r["lambda_sum"],
            "lambda_0": r["lambda_0"],
            "acceptance": r["acceptance"],
            "gamma": r["gamma"],
            "seconds": r["seconds"],
            "log_lambda": r["log_lambda"],
            "diagnostics": r["report"].diagnostics,
        } for r in runs],
        "_runs": runs,
    }


def _nanmse(err):
    err = np.asarray(err, dtype=float)
    if err.size == 0:
        return float("nan")
    if np.isnan(err).all():
        return float("nan")
    return float(np.nanmean(err ** 2))


# ---------------------------------------------------------------------------
# Bayesian networks
# ---------------------------------------------------------------------------

class BnRun:
    """Result of one sampler run on a DAG posterior."""

    def __init__(self, sampler, report, space, seconds):
        self.sampler = sampler
        self.report = report
        self.space = space
        self.seconds = seconds
        reg = sampler.registry
        self.modes = list(reg.modes)
        self.mode_scores = list(reg.log_dens)
        dr = report.dr
        self.lam = dr.lam[:reg.M + 1].copy()
        self.visited = dr.visited[:reg.M + 1].copy()
        A_k = dr.mu["A"][:reg.M + 1]
        self.A_k = np.where(self.visited[:, None, None], A_k, np.nan)
        self.A = np.asarray(dr.overall["A"])
        self.best_score = max(space.best_score, max(self.mode_scores))
        self.best_state = space.best_state if space.best_score >= max(self.mode_scores) \
            else self.modes[int(np.argmax(self.mode_scores))]

    def local_networks(self, c):
        """Thresholded conditional adjacency of each recorded domain (k >= 1)."""
        out = []
        for k in range(1, len(self.lam)):
            if self.visited[k]:
                out.append(threshold_network(self.A_k[k], c))
            else:
                out.append(self.modes[k - 1])
        return out

    def mean_network(self, c):
        return threshold_network(self.A, c)


def bn_run(data, cfg, rng, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA, cap=DEFAULT_CAP,
           scores=None, x0=None, backend=None):
    scores = scores or FamilyScores(data, beta, alpha, cap)
    space = DagSpace(scores, b=cfg.b, backend=backend)
    x0 = empty_dag(data.m) if x0 is None else tuple(x0)
    t0 = time.perf_counter()
    sampler = MultiDomainSampler(space, cfg, x0, rng)
    acc = DrAccumulator(cfg.kstar + 1, {"A": adjacency}, cfg.L)
    report = sampler.run(acc)
    return BnRun(sampler, report, space, time.perf_counter() - t0)


def compare_to_oracle(run, land, min_lambda=1e-4):
    """Missed modes and MSEs of log lambda, A_k and A against the exact landscape.

    Only oracle domains with mass above ``min_lambda`` enter the comparison.
    Matrix MSEs average over off-diagonal entries.
    """
    m = land.m
    off = ~np.eye(m, dtype=bool)
    index = {nu: k + 1 for k, nu in enumerate(run.modes)}
    big = np.flatnonzero(land.lam > min_lambda)
    missed = 0
    ll_err, ak_err = [], []
    for d in big:
        k = index.get(land.modes[d])
        if k is None or not run.visited[k]:
            missed += 1
            continue
        ll_err.append(math.log(run.lam[k]) - math.log(land.lam[d]))
        ak_err.append(np.mean((run.A_k[k][off] - land.A_k[d][off]) ** 2))
    return {
        "oracle_modes": int(land.n_modes),
        "oracle_modes_above_min": int(len(big)),
        "missed_modes": int(missed),
        "mse_log_lambda": float(np.mean(np.square(ll_err))) if ll_err else float("nan"),
        "mse_A_k": float(np.mean(ak_err)) if ak_err else float("nan"),
        "mse_A": float(np.mean((run.A[off] - land.A[off]) ** 2)),
        "registered_modes": len(run.modes),
    }


def simulate_bn_dataset(network, rng, n=500, intervention_fraction=0.2, arity=2,
                        strength=(0.6, 0.9)):
    dag, names = reference_network(network)
    arities = (arity,) * len(dag)
    bn = GroundTruthBn(dag, arities, random_cpts(dag, arities, rng, strength), names)
    return bn, simulate_dataset(bn, n, intervention_fraction, rng)


def bn_sim_study(networks=("chain6", "graph6"), datasets=5, variants=(MD, MD0, WL), cfg=None,
                 seed=0, n=500, intervention_fraction=0.2, beta=DEFAULT_BETA,
                 alpha=DEFAULT_ALPHA, cap=DEFAULT_CAP, progress=None, landscapes=None):
    """Simulated datasets scored by every variant against enumeration.

    Returns per-dataset records and a summary holding the mean error of
    the first variant and the ratio of every other variant to it.
    """
    cfg = cfg or SamplerConfig(L=15, delta_h=10, p_mx=0.1, kstar=100, burn_in=50_000,
                               n_iter=1_000_000)
    out = {"config": cfg.to_dict(), "n": n, "intervention_fraction": intervention_fraction,
           "networks": {}}
    for net in networks:
        records = []
        for ds in range(datasets):
            rng = rep_rng(seed, ds)
            _, data = simulate_bn_dataset(net, rng, n, intervention_fraction)
            scores = FamilyScores(data, beta, alpha, cap)
            key = (net, ds)
            land = landscapes.get(key) if landscapes is not None else None
            if land is None:
                land = exact_landscape(scores)
                if landscapes is not None:
                    landscapes[key] = land
            rec = {"dataset": ds, "oracle_modes": int(land.n_modes), "variants": {}}
            for v, variant in enumerate(variants):
                vcfg = replace(cfg, variant=variant)
                run = bn_run(data, vcfg, rep_rng(seed, 1000 * (ds + 1) + v), scores=scores)
                cmp = compare_to_oracle(run, land)
                cmp["seconds"] = run.seconds
                cmp["acceptance"] = {k: s["rate"] for k, s in run.report.acceptance.items()}
                rec["variants"][variant] = cmp
                if progress:
                    progress(net, ds, variant, cmp)
            records.append(rec)
        base = variants[0]
        summary = {}
        for stat in ("missed_modes", "mse_log_lambda", "mse_A_k", "mse_A"):
            row = {}
            ref = float(np.mean([r["variants"][base][stat] for r in records]))
            for variant in variants:
                val = float(np.mean([r["variants"][variant][stat] for r in records]))
                row[variant] = val
                if variant != base and stat != "missed_modes":
                    row[variant + "_ratio"] = val / ref if ref > 0 else float("nan")
            summary[stat] = row
        summary["mean_oracle_modes"] = float(np.mean([r["oracle_modes"] for r in records]))
        out["networks"][net] = {"datasets": records, "summary": summary}
    return out


def learn_summary(run, data, thresholds=(0.5, 0.7, 0.9), reference=None, local_c=0.9):
    """Mean networks, local networks and posterior edge probabilities."""
    res = {
        "best_log_posterior": run.best_score,
        "best_network": [[i + 1, j + 1] for i, j in dag_edges(run.best_state)],
        "modes": [{"edges": [[i + 1, j + 1] for i, j in dag_edges(nu)],
                   "log_posterior": s,
                   "log_lambda": (math.log(run.lam[k + 1]) if run.lam[k + 1] > 0 else None)}
                  for k, (nu, s) in enumerate(zip(run.modes, run.mode_scores))],
        "lambda_0": float(run.lam[0]),
        "A": run.A,
        "mean_networks": {},
        "gamma": run.report.gamma,
        "acceptance": {k: s["rate"] for k, s in run.report.acceptance.items()},
        "diagnostics": run.report.diagnostics,
        "seconds": run.seconds,
    }
    for c in thresholds:
        net = run.mean_network(c)
        entry = {"edges": [[i + 1, j + 1] for i, j in dag_edges(net)]}
        if reference is not None:
            ev = score_vs_reference(net, reference, c)
            entry.update({"TP": ev.tp, "FP": ev.fp})
        res["mean_networks"][str(c)] = entry
    locals_ = run.local_networks(local_c)
    # parent sets that are not shared by every local network
    m = data.m
    distinct = [i for i in range(m) if len({g[i] for g in locals_}) > 1]
    res["local_networks"] = {
        "threshold": local_c,
        "distinct_nodes": [data.names[i] for i in distinct],
        "domains": [{
            "k": k + 1,
            "log_lambda": (math.log(run.lam[k + 1]) if run.lam[k + 1] > 0 else None),
            "parents": {data.names[i]: [data.names[p] for p in mask_to_parents(g[i])]
                        for i in distinct},
        } for k, g in enumerate(locals_)],
    }
    return res


def crossval_study(data, cfg, folds=10, by_condition=False, threshold=0.9, seed=0,
                   reference=None, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA, cap=DEFAULT_CAP,
                   progress=None):
    """Train on each fold's complement, score the held-out rows.

    Reports per fold the mean-network and DR predictive log probabilities of
    the test rows (sums over rows) and, with a reference, TP/FP.
    """
    splits = crossval_split(data, folds, by_condition, rep_rng(seed, 10_000))
    records = []
    for f, (train_rows, test_rows) in enumerate(splits):
        train, test = data.subset(train_rows), data.subset(test_rows)
        run = bn_run(train, cfg, rep_rng(seed, f), beta, alpha, cap)
        mean_net = run.mean_network(threshold)
        pred_mean = float(predictive_log_probability(test, mean_net, train, alpha).sum())
        pred_dr = float(dr_predictive_log_probability(
            test, run.local_networks(threshold), run.lam, train, mean_net, alpha).sum())
        rec = {"fold": f + 1, "n_train": int(train.n), "n_test": int(test.n),
               "log_pred_mean": pred_mean, "log_pred_dr": pred_dr,
               "best_log_posterior": run.best_score, "seconds": run.seconds,
               "modes": len(run.modes)}
        if reference is not None:
            ev = score_vs_reference(mean_net, reference, threshold)
            rec.update({"TP": ev.tp, "FP": ev.fp})
        records.append(rec)
        if progress:
            progress(f, rec)
    summary = {
        "folds": len(records),
        "mean_log_pred_mean": float(np.mean([r["log_pred_mean"] for r in records])),
        "mean_log_pred_dr": float(np.mean([r["log_pred_dr"] for r in records])),
    }
    if reference is not None:
        summary["mean_TP"] = float(np.mean([r["TP"] for r in records]))
        summary["mean_FP"] = float(np.mean([r["FP"] for r in records]))
    return {"config": cfg.to_dict(), "threshold": threshold, "by_condition": by_condition,
            "fold_records": records, "summary": summary}
