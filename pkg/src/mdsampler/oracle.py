"""Exact posterior landscapes of small networks by exhaustive enumeration."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dags import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_CAP, FamilyScores, dag_edges

MAX_ENUM_NODES = 6


def count_dags(n):
    """Number of labeled DAGs on n nodes (recursion over source sets)."""
    a = [1]
    for k in range(1, n + 1):
        a.append(sum((-1) ** (s + 1) * math.comb(k, s) * 2 ** (s * (k - s)) * a[k - s]
                     for s in range(1, k + 1)))
    return a[n]


def enumerate_dags(m, cap=DEFAULT_CAP, backend=None):
    """All DAGs on ``m`` nodes with indegree at most ``cap``, as an (N, m) mask array."""
    if not 1 <= m <= MAX_ENUM_NODES:
        raise ValueError(f"enumeration supports 1..{MAX_ENUM_NODES} nodes, got {m}")
    if cap < 0:
        raise ValueError("cap must be non-negative")
    return kernels.get_backend(backend).enumerate_dags(m, min(cap, max(m - 1, 0)))


def basin_roots(successor):
    """Follow successor pointers to their fixed points."""
    root = np.asarray(successor, dtype=np.int64).copy()
    while True:
        nxt = root[root]
        if np.array_equal(nxt, root):
            return root
        root = nxt


@dataclass
class ExactLandscape:
    """Posterior over every DAG with its SNA basin and the exact DR.

    ``modes`` are sorted by decreasing score; ``basin[n]`` is the 0-based
    position in ``modes`` of DAG ``n``'s mode.  ``A_k[k]`` is the adjacency
    expectation conditional on basin ``k`` and ``A`` the overall one.
    """

    m: int
    cap: int
    dags: np.ndarray
    log_post: np.ndarray
    basin: np.ndarray
    modes: list
    mode_scores: np.ndarray
    lam: np.ndarray
    A_k: np.ndarray
    A: np.ndarray

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def log_lam(self):
        with np.errstate(divide="ignore"):
            return np.log(self.lam)

    def mode_index(self, pa):
        """Position of ``pa`` in ``modes`` or -1."""
        try:
            return self.modes.index(tuple(pa))
        except ValueError:
            return -1

    def summary(self):
        return {
            "m": self.m,
            "cap": self.cap,
            "n_dags": int(len(self.log_post)),
            "n_modes": self.n_modes,
            "modes": [[[i + 1, j + 1] for i, j in dag_edges(nu)] for nu in self.modes],
            "mode_scores": self.mode_scores.tolist(),
            "log_lambda": [float(v) for v in self.log_lam],
            "A": self.A.tolist(),
        }


def exact_landscape(scores, backend=None):
    """Enumerate, normalize, and partition the DAG space of ``scores``.

    Basins come from the same SNA step the sampler uses, so the two agree
    on every DAG.
    """
    m, cap = scores.m, scores.cap
    if m > MAX_ENUM_NODES:
        raise ValueError(f"enumeration supports at most {MAX_ENUM_NODES} nodes")
    k = kernels.get_backend(backend)
    table = scores.table
    dags = k.enumerate_dags(m, cap)
    raw = np.zeros(len(dags))
    for i in range(m):
        raw += table[i, dags[:, i]]
    mx = raw.max()
    p = np.exp(raw - mx)

    root = basin_roots(k.sna_successors(np.ascontiguousarray(dags), table, cap))
    mode_rows = np.unique(root)
    order = mode_rows[np.argsort(-raw[mode_rows], kind="stable")]
    pos = np.full(len(dags), -1, dtype=np.int64)
    pos[order] = np.arange(len(order))
    basin = pos[root]
    K = len(order)

    # normalize by the same sums that form lambda so it adds to one
    S = np.bincount(basin, weights=p, minlength=K)
    Z = S.sum()
    lam = S / Z
    p /= Z
    log_post = raw - (mx + math.log(Z))
    A_k = np.zeros((K, m, m))
    A = np.zeros((m, m))
    for j in range(m):
        col = dags[:, j]
        for i in range(m):
            if i == j:
                continue
            bit = (col >> i) & 1
            A_k[:, i, j] = np.bincount(basin, weights=p * bit, minlength=K)
            A[i, j] = float(np.sum(p * bit))
    A_k /= lam[:, None, None]
    modes = [tuple(int(v) for v in dags[r]) for r in order]
    return ExactLandscape(m=m, cap=cap, dags=dags, log_post=log_post, basin=basin,
                          modes=modes, mode_scores=raw[order], lam=lam, A_k=A_k, A=A)


def landscape_key(data, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA, cap=DEFAULT_CAP):
    h = hashlib.sha256()
    h.update(data.digest().encode())
    h.update(f"{float(beta)!r}|{float(alpha)!r}|{int(cap)}".encode())
    return h.hexdigest()[:32]


def cached_landscape(data, cache_dir, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA,
                     cap=DEFAULT_CAP, backend=None):
    """Load the landscape of ``data`` from ``cache_dir`` or compute and store it.

    Each entry is ``<digest>.npz`` plus a ``<digest>.json`` summary.
    """
    key = landscape_key(data, beta, alpha, cap)
    npz = os.path.join(cache_dir, key + ".npz")
    if os.path.exists(npz):
        return load_landscape(npz)
    scores = FamilyScores(data, beta, alpha, cap)
    land = exact_landscape(scores, backend)
    os.makedirs(cache_dir, exist_ok=True)
    save_landscape(land, npz)
    return land


def save_landscape(land, path):
    from .report import dumps

    np.savez_compressed(
        path, m=land.m, cap=land.cap, dags=land.dags, log_post=land.log_post,
        basin=land.basin, modes=np.array(land.modes, dtype=np.int64).reshape(-1, land.m),
        mode_scores=land.mode_scores, lam=land.lam, A_k=land.A_k, A=land.A)
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        fh.write(dumps(land.summary()))


def load_landscape(path):
    with np.load(path) as z:
        return ExactLandscape(
            m=int(z["m"]), cap=int(z["cap"]), dags=z["dags"], log_post=z["log_post"],
            basin=z["basin"], modes=[tuple(int(v) for v in row) for row in z["modes"]],
            mode_scores=z["mode_scores"], lam=z["lam"], A_k=z["A_k"], A=z["A"])
