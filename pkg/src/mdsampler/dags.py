"""Bayesian-network structure space.

A DAG on m nodes is a tuple of parent bitmasks, ``pa[j] >> i & 1`` meaning
``i -> j``.  The posterior score decomposes over families, so every family
(node, parent set) is scored once into a table indexed ``table[i, mask]``
that the compiled kernels read directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import gammaln

from . import kernels
from .core import DescentError, StateSpaceModel

DEFAULT_CAP = 4
DEFAULT_BETA = 0.1
DEFAULT_ALPHA = 1.0
# dense (m, 2^m) tables beyond this many nodes get too large
MAX_DENSE_NODES = 16


@dataclass
class DiscreteDataset:
    """Discrete observations with a per-cell intervention mask.

    ``values`` holds 0-based states, ``fixed[r, i]`` is True when node ``i``
    was clamped in row ``r``.  ``cond`` optionally labels each row with an
    experimental condition.
    """

    values: np.ndarray
    fixed: np.ndarray
    arities: tuple
    cond: np.ndarray = None
    names: list = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        n, m = self.values.shape
        self.fixed = np.asarray(self.fixed, dtype=bool)
        if self.fixed.shape != (n, m):
            raise ValueError(f"intervention mask has shape {self.fixed.shape}, expected {(n, m)}")
        self.arities = tuple(int(r) for r in self.arities)
        if len(self.arities) != m:
            raise ValueError(f"{len(self.arities)} arities for {m} nodes")
        if any(r < 1 for r in self.arities):
            raise ValueError("arities must be positive")
        if n:
            bad = (self.values < 0) | (self.values >= np.array(self.arities))
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise ValueError(f"row {r + 1}, node {c + 1}: value out of range")
        if self.cond is not None:
            self.cond = np.asarray(self.cond)
            if self.cond.shape != (n,):
                raise ValueError("cond must have one label per row")
        if self.names is None:
            self.names = [f"Z{i + 1}" for i in range(m)]

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows)
        return DiscreteDataset(self.values[rows], self.fixed[rows], self.arities,
                               None if self.cond is None else self.cond[rows], list(self.names))

    def digest(self):
        """Content hash of values, mask and arities."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.asarray(self.arities, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(np.packbits(self.fixed).tobytes())
        h.update(str(self.values.shape).encode())
        return h.hexdigest()


def mask_to_parents(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def parents_to_mask(parents):
    mask = 0
    for p in parents:
        mask |= 1 << int(p)
    return mask


def suff_stats(data, i, parents):
    """Counts N[k, j] of child state j under parent configuration k.

    Rows in which node ``i`` was clamped are left out; clamped values of the
    parents still count as evidence.  Parent configurations are mixed-radix
    with the first listed parent varying fastest.
    """
    parents = list(parents)
    if i in parents:
        raise ValueError("a node can not be its own parent")
    keep = ~data.fixed[:, i]
    v = data.values[keep]
    r = data.arities[i]
    idx = np.zeros(v.shape[0], dtype=np.int64)
    stride = 1
    for p in parents:
        idx += stride * v[:, p]
        stride *= data.arities[p]
    q = stride
    flat = np.bincount(idx * r + v[:, i], minlength=q * r)
    return flat.reshape(q, r)


def family_log_score(counts, n_parents, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA):
    """|parents| log beta plus the Dirichlet-multinomial marginal of one family."""
    counts = np.asarray(counts, dtype=float)
    q, r = counts.shape
    a_ijk = alpha / (r * q)
    a_ik = alpha / q
    n_ik = counts.sum(axis=1)
    s = (np.sum(gammaln(a_ik) - gammaln(a_ik + n_ik))
         + np.sum(gammaln(a_ijk + counts)) - q * r * gammaln(a_ijk))
    return n_parents * math.log(beta) + float(s)


class FamilyScores:
    """Per-family score cache for one dataset.

    For up to 16 nodes the scores of every parent set within the indegree cap
    are computed up front into a dense ``(m, 2^m)`` array (entries above the
    cap are -inf).  Larger networks score families lazily on first use.
    """

    def __init__(self, data, beta=DEFAULT_BETA, alpha=DEFAULT_ALPHA, cap=DEFAULT_CAP):
        if not beta > 0 or not alpha > 0:
            raise ValueError("beta and alpha must be positive")
        self.data = data
        self.m = data.m
        self.beta = float(beta)
        self.alpha = float(alpha)
        self.cap = int(min(cap, self.m - 1)) if self.m > 1 else 0
        if cap < 0:
            raise ValueError("indegree cap must be non-negative")
        self.dense = self.m <= MAX_DENSE_NODES
        if self.dense:
            self.table = np.full((self.m, 1 << self.m), -np.inf)
            for i in range(self.m):
                others = [p for p in range(self.m) if p != i]
                for size in range(self.cap + 1):
                    for ps in combinations(others, size):
                        self.table[i, parents_to_mask(ps)] = self._compute(i, ps)
        else:
            self.table = _LazyTable(self)

    def _compute(self, i, parents):
        return family_log_score(suff_stats(self.data, i, parents), len(parents),
                                self.beta, self.alpha)

    def family(self, i, mask):
        if _popcount(mask) > self.cap:
            raise ValueError(f"node {i + 1} has {_popcount(mask)} parents, cap is {self.cap}")
        return float(self.table[i, mask])

    def score(self, pa):
        """Log posterior score (up to a constant) of a DAG."""
        return log_posterior_score(pa, self)


class _LazyTable:
    """Dict-backed stand-in for the dense table: ``table[i, mask]``."""

    def __init__(self, owner):
        self.owner = owner
        self.cache = {}

    def __getitem__(self, key):
        v = self.cache.get(key)
        if v is None:
            i, mask = key
            if _popcount(mask) > self.owner.cap:
                v = -math.inf
            else:
                v = self.owner._compute(i, mask_to_parents(mask))
            self.cache[key] = v
        return v


def _popcount(v):
    return bin(int(v)).count("1")


def log_posterior_score(pa, scores):
    """Sum of family scores; raises if a parent set exceeds the cap."""
    s = 0.0
    for i, mask in enumerate(pa):
        s += scores.family(i, mask)
    return s


# ---------------------------------------------------------------------------
# Graph helpers
# ---------------------------------------------------------------------------

def dag_from_edges(m, edges):
    """Parent-mask tuple from 0-based ``(i, j)`` edges meaning i -> j."""
    pa = [0] * m
    for i, j in edges:
        if not (0 <= i < m and 0 <= j < m) or i == j:
            raise ValueError(f"bad edge {i} -> {j}")
        pa[j] |= 1 << i
    return tuple(pa)


def dag_edges(pa):
    """0-based edges ``(i, j)`` sorted lexicographically."""
    m = len(pa)
    return [(i, j) for i in range(m) for j in range(m) if pa[j] >> i & 1]


def adjacency(pa):
    m = len(pa)
    A = np.zeros((m, m))
    for j, mask in enumerate(pa):
        for i in mask_to_parents(mask):
            A[i, j] = 1.0
    return A


def from_adjacency(A):
    A = np.asarray(A)
    m = A.shape[0]
    return tuple(int(sum(1 << i for i in range(m) if A[i, j])) for j in range(m))


def is_dag(pa):
    return bool(kernels.python_backend.is_acyclic(tuple(pa)))


def topological_order(pa):
    """A topological order of the nodes, or None when the graph has a cycle."""
    m = len(pa)
    indeg = [_popcount(p) for p in pa]
    children = [[j for j in range(m) if pa[j] >> i & 1] for i in range(m)]
    ready = [i for i in range(m) if indeg[i] == 0]
    order = []
    while ready:
        i = ready.pop()
        order.append(i)
        for j in children[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return order if len(order) == m else None


# ---------------------------------------------------------------------------
# State-space model
# ---------------------------------------------------------------------------

class DagSpace(StateSpaceModel):
    """DAG instance: neighbor-move local proposals, SNA basins, edit-count jumps.

    Parameters
    ----------
    scores : FamilyScores
    b : float
        Prior count added to every mixed-jump category.
    backend : str, optional
        Kernel backend; networks above 16 nodes always use the Python one.
    descent_cache : int
        Maximum number of memoized SNA results.
    """

    hashable_states = True

    def __init__(self, scores, b=0.5, backend=None, descent_cache=200_000, max_sna_steps=100_000):
        self.scores = scores
        self.m = scores.m
        self.cap = scores.cap
        self.b = float(b)
        if not self.b > 0:
            raise ValueError("b must be positive")
        if scores.dense:
            self.k = kernels.get_backend(backend)
        else:
            self.k = kernels.python_backend
        self.table = scores.table
        self.T = self.m * (self.m - 1) // 2
        self._cache = {}
        self._cache_size = int(descent_cache)
        self.max_sna_steps = int(max_sna_steps)
        self.best_state = None
        self.best_score = -math.inf

    def log_density(self, pa):
        return self.k.dag_score(pa, self.table)

    def descend(self, pa):
        mode = self._cache.get(pa)
        if mode is not None:
            return mode
        mode, steps = self.k.sna(pa, self.table, self.cap, self.max_sna_steps)
        if steps < 0:
            raise DescentError(f"steepest neighbor ascent exceeded {self.max_sna_steps} steps")
        if len(self._cache) >= self._cache_size:
            self._cache.clear()
        self._cache[pa] = mode
        # every descent ends at a local maximum; remember the best one seen
        score = self.log_density(mode)
        if score > self.best_score:
            self.best_score = score
            self.best_state = mode
        return mode

    def states_equal(self, a, b):
        return tuple(a) == tuple(b)

    def neighbors(self, pa):
        return self.k.list_neighbors(pa, self.cap)

    def local_propose(self, pa, rng):
        new, n_fwd, n_rev = self.k.propose_neighbor(pa, self.cap, rng.random())
        if new is None:
            raise ValueError("graph has no valid neighbors")
        return new, -math.log(n_fwd), -math.log(n_rev)

    def mixed_jump_sample(self, registry, k, rng):
        u = rng.random(self.T)
        return self.k.mixed_jump_sample(registry.modes[k], registry.V[k], self.b, self.cap, u)

    def mixed_jump_log_density(self, registry, pa):
        return self.k.mixed_jump_log_density(registry.modes, registry.V[:registry.M],
                                             self.b, self.cap, pa)

    def adapt_statistic(self, pa, nu):
        return np.array(self.k.edit_counts(pa, nu), dtype=float)

    def initial_adapt_statistic(self):
        return np.ones(3)

    def payload(self, pa):
        return adjacency(pa)

    def serialize_state(self, pa):
        return [[i + 1, j + 1] for i, j in dag_edges(pa)]


def empty_dag(m):
    return (0,) * m
