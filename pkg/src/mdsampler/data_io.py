"""Datasets, networks and predictive evaluation.

On disk a dataset is a CSV with columns ``Z1..Zm`` (states 1..r_i),
``I1..Im`` (0/1 intervention mask) and an optional ``cond`` label.  Arities
live in a JSON sidecar ``<stem>.arities.json`` or are inferred as the largest
observed state.  Networks use a small text format::

    3
    2 2 3
    1 -> 2
    2 -> 3
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dags import DEFAULT_ALPHA, DiscreteDataset, dag_edges, dag_from_edges, mask_to_parents, \
    suff_stats, topological_order


class DataError(ValueError):
    """Malformed or inconsistent input file."""


# ---------------------------------------------------------------------------
# Ground-truth networks
# ---------------------------------------------------------------------------

@dataclass
class GroundTruthBn:
    """A DAG with conditional probability tables.

    ``cpts[i]`` has shape ``(q_i, r_i)``; parent configurations are
    mixed-radix with the lowest-numbered parent varying fastest.
    """

    dag: tuple
    arities: tuple
    cpts: list
    names: list = field(default=None)

    def __post_init__(self):
        self.dag = tuple(int(p) for p in self.dag)
        self.arities = tuple(int(r) for r in self.arities)
        m = len(self.dag)
        if len(self.arities) != m or len(self.cpts) != m:
            raise ValueError("dag, arities and cpts disagree on the node count")
        self.order = topological_order(self.dag)
        if self.order is None:
            raise ValueError("structure has a cycle")
        self.parents = [mask_to_parents(p) for p in self.dag]
        for i in range(m):
            q = int(np.prod([self.arities[p] for p in self.parents[i]], dtype=np.int64))
            t = np.asarray(self.cpts[i], dtype=float)
            if t.shape != (q, self.arities[i]):
                raise ValueError(f"cpt of node {i + 1} has shape {t.shape}, expected {(q, self.arities[i])}")
            if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12):
                raise ValueError(f"cpt rows of node {i + 1} must be probability vectors")
            self.cpts[i] = t
        if self.names is None:
            self.names = [f"Z{i + 1}" for i in range(m)]

    @property
    def m(self):
        return len(self.dag)

    def parent_index(self, values, i):
        idx = np.zeros(values.shape[0], dtype=np.int64)
        stride = 1
        for p in self.parents[i]:
            idx += stride * values[:, p]
            stride *= self.arities[p]
        return idx

    def sample(self, n, rng, clamp=None):
        """Ancestral sampling with optional clamps.

        ``clamp`` is an (n, m) int array with -1 for free cells and a state
        otherwise; clamped cells keep their value.
        """
        m = self.m
        values = np.zeros((n, m), dtype=np.int64)
        fixed = np.zeros((n, m), dtype=bool)
        if clamp is not None:
            fixed = clamp >= 0
            values[fixed] = clamp[fixed]
        for i in self.order:
            free = ~fixed[:, i]
            if not free.any():
                continue
            probs = self.cpts[i][self.parent_index(values[free], i)]
            u = rng.random(int(free.sum()))
            draw = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
            values[free, i] = np.minimum(draw, self.arities[i] - 1)
        return values, fixed


def random_cpts(dag, arities, rng, strength=(0.6, 0.9)):
    """CPTs whose favoured child state rises with the parents' mean level.

    A parent configuration with mean scaled state ``s`` in [0, 1] favours
    child state ``(offset + min(floor(s r), r - 1)) mod r`` (an OR-like rule
    for binary nodes, never XOR, so each parent matters on its own).  The
    favoured state gets probability drawn uniformly from ``strength`` and
    the rest is split evenly.
    """
    m = len(dag)
    cpts = []
    for i in range(m):
        parents = mask_to_parents(dag[i])
        r = arities[i]
        offset = int(rng.integers(r))
        configs = [()]
        for p in parents:
            configs = [c + (s,) for s in range(arities[p]) for c in configs]
        t = np.zeros((len(configs), r))
        for k, conf in enumerate(configs):
            if parents:
                level = sum(st / max(arities[p] - 1, 1) for st, p in zip(conf, parents)) / len(parents)
                fav = (offset + min(int(level * r), r - 1)) % r
            else:
                fav = offset
            p_fav = rng.uniform(*strength) if r > 1 else 1.0
            t[k] = (1.0 - p_fav) / (r - 1) if r > 1 else 0.0
            t[k, fav] = p_fav
        cpts.append(t)
    return cpts


def simulate_dataset(bn, n, intervention_fraction, rng):
    """``ceil(fraction * n)`` randomly placed rows clamp one uniform node to a uniform state."""
    if not 0.0 <= intervention_fraction <= 1.0:
        raise ValueError("intervention fraction must lie in [0, 1]")
    m = bn.m
    n_int = int(math.ceil(intervention_fraction * n - 1e-12))
    clamp = np.full((n, m), -1, dtype=np.int64)
    rows = rng.permutation(n)[:n_int]
    nodes = rng.integers(0, m, size=n_int)
    for r, i in zip(rows, nodes):
        clamp[r, i] = rng.integers(bn.arities[i])
    values, fixed = bn.sample(n, rng, clamp)
    return DiscreteDataset(values, fixed, bn.arities, names=list(bn.names))


def simulate_conditions(bn, clamp_nodes, rows_per_condition, rng):
    """One block of rows per condition; condition c clamps node ``clamp_nodes[c]``
    to a uniform random state in each row (None means observational)."""
    blocks_v, blocks_f, labels = [], [], []
    for c, node in enumerate(clamp_nodes):
        clamp = np.full((rows_per_condition, bn.m), -1, dtype=np.int64)
        if node is not None:
            clamp[:, node] = rng.integers(bn.arities[node], size=rows_per_condition)
        v, f = bn.sample(rows_per_condition, rng, clamp)
        blocks_v.append(v)
        blocks_f.append(f)
        labels += [c + 1] * rows_per_condition
    return DiscreteDataset(np.vstack(blocks_v), np.vstack(blocks_f), bn.arities,
                           np.array(labels), list(bn.names))


# Reference structures (0-based edges)
CHAIN6 = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]
GRAPH6 = [(0, 1), (0, 3), (2, 3), (1, 4), (3, 4), (3, 5), (2, 5)]
SIGNALING11_NAMES = ["Raf", "Mek", "PLCg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk"]
_S = {name: i for i, name in enumerate(SIGNALING11_NAMES)}
SIGNALING11 = [(_S[a], _S[b]) for a, b in [
    ("PKC", "Raf"), ("PKC", "Mek"), ("PKC", "PKA"), ("PKC", "Jnk"), ("PKC", "P38"),
    ("PKA", "Raf"), ("PKA", "Mek"), ("PKA", "Erk"), ("PKA", "Akt"), ("PKA", "Jnk"), ("PKA", "P38"),
    ("Raf", "Mek"), ("Mek", "Erk"), ("Erk", "Akt"),
    ("PLCg", "PIP2"), ("PLCg", "PKC"), ("PIP2", "PKC"),
    ("PIP3", "PIP2"), ("PIP3", "PLCg"), ("PIP3", "Akt"),
]]
# nodes clamped in the nine pseudo-conditions of the synthetic signaling data
SIGNALING11_CLAMPS = [_S[n] for n in ("Raf", "Mek", "PLCg", "PIP2", "PIP3", "Akt", "PKA", "PKC", "P38")]


def reference_network(name):
    """``(dag, names)`` of a bundled structure: chain6, graph6 or signaling11."""
    if name == "chain6":
        return dag_from_edges(6, CHAIN6), [f"Z{i + 1}" for i in range(6)]
    if name == "graph6":
        return dag_from_edges(6, GRAPH6), [f"Z{i + 1}" for i in range(6)]
    if name == "signaling11":
        return dag_from_edges(11, SIGNALING11), list(SIGNALING11_NAMES)
    raise ValueError(f"unknown network {name!r}")


def synthetic_signaling_data(seed=0, rows_per_condition=600, strength=(0.6, 0.9)):
    """11 ternary nodes, nine conditions of ``rows_per_condition`` rows each."""
    rng = np.random.default_rng(seed)
    dag, names = reference_network("signaling11")
    arities = (3,) * 11
    bn = GroundTruthBn(dag, arities, random_cpts(dag, arities, rng, strength), names)
    return bn, simulate_conditions(bn, SIGNALING11_CLAMPS, rows_per_condition, rng)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def arities_path(path):
    stem, _ = os.path.splitext(path)
    return stem + ".arities.json"


def save_dataset(path, data, write_arities=True):
    m = data.m
    header = [f"Z{i + 1}" for i in range(m)] + [f"I{i + 1}" for i in range(m)]
    if data.cond is not None:
        header.append("cond")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(data.n):
            row = [int(v) + 1 for v in data.values[r]] + [int(f) for f in data.fixed[r]]
            if data.cond is not None:
                row.append(data.cond[r])
            w.writerow(row)
    if write_arities:
        with open(arities_path(path), "w") as fh:
            json.dump({"arities": list(data.arities), "names": list(data.names)}, fh)


def _parse_int(text, line, col):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"line {line}, column {col}: expected an integer, got {text!r}") from None


def load_dataset(path, arities=None):
    """Read a dataset CSV; errors name the offending line and column."""
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_cond = bool(header) and header[-1] == "cond"
    cols = header[:-1] if has_cond else header
    if len(cols) % 2:
        raise DataError(f"line 1: expected Z1..Zm,I1..Im columns, got {len(cols)} columns")
    m = len(cols) // 2
    want = [f"Z{i + 1}" for i in range(m)] + [f"I{i + 1}" for i in range(m)]
    if m == 0 or cols != want:
        raise DataError(f"line 1: header must be {','.join(want) or 'Z1..Zm,I1..Im'}")
    ncol = len(header)
    values, fixed, cond = [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncol:
            raise DataError(f"line {ln}: expected {ncol} fields, got {len(row)}")
        v = [_parse_int(row[c].strip(), ln, header[c]) for c in range(m)]
        f = [_parse_int(row[m + c].strip(), ln, header[m + c]) for c in range(m)]
        for c, s in enumerate(v):
            if s < 1:
                raise DataError(f"line {ln}, column {header[c]}: state {s} is below 1")
        for c, s in enumerate(f):
            if s not in (0, 1):
                raise DataError(f"line {ln}, column {header[m + c]}: mask must be 0 or 1, got {s}")
        values.append(v)
        fixed.append(f)
        if has_cond:
            cond.append(row[-1].strip())
    values = np.array(values, dtype=np.int64).reshape(-1, m)
    fixed = np.array(fixed, dtype=bool).reshape(-1, m)

    names = None
    if arities is None and os.path.exists(arities_path(path)):
        try:
            with open(arities_path(path)) as fh:
                side = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise DataError(f"{arities_path(path)}: {err}") from None
        arities = side.get("arities") if isinstance(side, dict) else side
        names = side.get("names") if isinstance(side, dict) else None
    if arities is None:
        arities = [int(values[:, i].max()) if len(values) else 1 for i in range(m)]
    arities = [int(a) for a in arities]
    if len(arities) != m:
        raise DataError(f"{len(arities)} arities declared for {m} nodes")
    for r in range(values.shape[0]):
        for c in range(m):
            if values[r, c] > arities[c]:
                raise DataError(f"line {r + 2}, column Z{c + 1}: state {values[r, c]} exceeds "
                                f"arity {arities[c]}")
    if has_cond:
        labels = np.array(cond)
        try:
            labels = labels.astype(np.int64)
        except ValueError:
            pass
    else:
        labels = None
    return DiscreteDataset(values - 1, fixed, arities, labels, names)


def write_network(path, pa, arities):
    m = len(pa)
    lines = [str(m), " ".join(str(int(r)) for r in arities)]
    lines += [f"{i + 1} -> {j + 1}" for i, j in dag_edges(pa)]
    text = "\n".join(lines) + "\n"
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return text


def read_network(path):
    """Return ``(dag, arities)`` from the network text format."""
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    with open(path) as fh:
        lines = [(n, ln.strip()) for n, ln in enumerate(fh, start=1)]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 2:
        raise DataError(f"{path}: expected a node count and an arity line")
    n0, first = lines[0]
    try:
        m = int(first)
    except ValueError:
        raise DataError(f"line {n0}: node count must be an integer") from None
    n1, second = lines[1]
    try:
        arities = [int(t) for t in second.split()]
    except ValueError:
        raise DataError(f"line {n1}: arities must be integers") from None
    if len(arities) != m:
        raise DataError(f"line {n1}: {len(arities)} arities for {m} nodes")
    edges = []
    for n, ln in lines[2:]:
        parts = ln.split("->")
        if len(parts) != 2:
            raise DataError(f"line {n}: expected 'i -> j'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"line {n}: node ids must be integers") from None
        if not (1 <= i <= m and 1 <= j <= m) or i == j:
            raise DataError(f"line {n}: bad edge {i} -> {j}")
        edges.append((i - 1, j - 1))
    pa = dag_from_edges(m, edges)
    if topological_order(pa) is None:
        raise DataError(f"{path}: network has a cycle")
    return pa, arities


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------

def _node_log_predictive(train, test, i, parents, alpha):
    """Per-row log predictive of node ``i`` (0 where it is clamped in the test row)."""
    counts = suff_stats(train, i, parents).astype(float)
    q, r = counts.shape
    a_ijk = alpha / (r * q)
    a_ik = alpha / q
    table = np.log(a_ijk + counts) - np.log(a_ik + counts.sum(axis=1, keepdims=True))
    idx = np.zeros(test.n, dtype=np.int64)
    stride = 1
    for p in parents:
        idx += stride * test.values[:, p]
        stride *= test.arities[p]
    out = table[idx, test.values[:, i]]
    out[test.fixed[:, i]] = 0.0
    return out


def predictive_log_probability(test, parent_sets, train, alpha=DEFAULT_ALPHA):
    """Per-row log predictive probabilities of ``test`` under a structure.

    ``parent_sets`` is a parent-mask tuple (it need not be acyclic, only a
    parent set per node is used).  Clamped nodes of a test row contribute
    nothing.
    """
    if train.arities != test.arities:
        raise ValueError("training and test arities differ")
    total = np.zeros(test.n)
    for i, mask in enumerate(parent_sets):
        total += _node_log_predictive(train, test, i, mask_to_parents(mask), alpha)
    return total


def dr_predictive_log_probability(test, local_networks, lam, train, fallback,
                                  alpha=DEFAULT_ALPHA):
    """Per-row log of sum_k lam_k P(y | G_k).

    ``local_networks[k]`` is the network of domain k >= 1; domain 0 uses
    ``fallback`` (the mean network).  Domains with zero mass are skipped.
    """
    lam = np.asarray(lam, dtype=float)
    nets = [fallback] + list(local_networks)
    if len(nets) != len(lam):
        raise ValueError("need one network per domain (k = 0..M)")
    cache = {}
    terms = []
    for k, net in enumerate(nets):
        if lam[k] <= 0.0:
            continue
        key = tuple(net)
        if key not in cache:
            cache[key] = predictive_log_probability(test, net, train, alpha)
        terms.append(math.log(lam[k]) + cache[key])
    return logsumexp(np.vstack(terms), axis=0)


def threshold_network(A, c):
    """Parent masks of the edges with posterior probability at least ``c``."""
    A = np.asarray(A)
    m = A.shape[0]
    return tuple(int(sum(1 << i for i in range(m) if i != j and A[i, j] >= c)) for j in range(m))


@dataclass
class EvaluationResult:
    tp: int
    fp: int
    fn: int
    threshold: float = None
    log_pred_mean: float = None
    log_pred_dr: float = None
    folds: list = field(default_factory=list)

    def to_dict(self):
        return {"threshold": self.threshold, "TP": self.tp, "FP": self.fp, "FN": self.fn,
                "log_pred_mean": self.log_pred_mean, "log_pred_dr": self.log_pred_dr,
                "folds": self.folds}


def score_vs_reference(pred, reference, threshold=None):
    """Directed-edge TP/FP/FN of parent-mask structures."""
    pe = set(dag_edges(pred))
    re = set(dag_edges(reference))
    return EvaluationResult(tp=len(pe & re), fp=len(pe - re), fn=len(re - pe), threshold=threshold)


def crossval_split(data, folds, by_condition=False, rng=None):
    """List of ``(train_rows, test_rows)`` index arrays.

    By row: a random partition into ``folds`` parts whose sizes differ by at
    most one.  By condition: one fold per distinct label, in sorted order.
    """
    n = data.n
    if by_condition:
        if data.cond is None:
            raise DataError("dataset has no cond column")
        labels = np.unique(data.cond)
        out = []
        for lab in labels:
            test = np.flatnonzero(data.cond == lab)
            train = np.flatnonzero(data.cond != lab)
            out.append((train, test))
        return out
    if folds < 2 or folds > n:
        raise ValueError(f"folds must lie in [2, {n}]")
    rng = rng if rng is not None else np.random.default_rng(0)
    perm = rng.permutation(n)
    parts = np.array_split(perm, folds)
    return [(np.sort(np.concatenate(parts[:f] + parts[f + 1:])), np.sort(parts[f]))
            for f in range(folds)]
