"""Domain-based representations from the weighted main-phase trace.

Each post burn-in sample X^{t+1} carries weight exp(w^t) of its cell under the
*pre-update* weight matrix.  Weights are accumulated relative to a running
offset so that the ever-growing log-weights never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_RESCALE_AT = 50.0


class EstimationError(ValueError):
    pass


def _as_payload_fns(payloads):
    if payloads is None:
        return {}
    if callable(payloads):
        return {"h": payloads}
    return dict(payloads)


class DrAccumulator:
    """Weighted per-domain sums for one or more payload functions.

    Parameters
    ----------
    n_domains : int
        M + 1 (domain 0 collects states outside every recorded basin).
    payloads : callable or dict of name -> callable
        Map a state to a scalar, vector or matrix.
    L : int, optional
        Number of density bands; enables per-cell raw visit counts.
    """

    def __init__(self, n_domains, payloads=None, L=None):
        self.n_domains = int(n_domains)
        self.fns = _as_payload_fns(payloads)
        self.S1 = np.zeros(self.n_domains)
        self.Sh = {}
        self.counts = np.zeros(self.n_domains, dtype=np.int64)
        self.cell_visits = None if L is None else np.zeros((self.n_domains, L), dtype=np.int64)
        self.offset = None
        self.n = 0
        self._pend = None
        self._pend_a = 0.0
        self._pend_t = None

    def _rescale(self, new_offset):
        f = math.exp(self.offset - new_offset)
        self.S1 *= f
        for v in self.Sh.values():
            v *= f
        self._pend_a *= f
        self.offset = new_offset

    def _flush(self):
        # a rejected proposal repeats the previous state, so consecutive
        # weights of one state are summed before touching the payload arrays
        point = self._pend
        if point is None:
            return
        a = self._pend_a
        k = point.k
        self.S1[k] += a
        if self.fns:
            for name, fn in self.fns.items():
                v = np.asarray(fn(point.x), dtype=float)
                if not math.isfinite(v.sum()) and not np.all(np.isfinite(v)):
                    where = "" if self._pend_t is None else f" at iteration {self._pend_t}"
                    raise EstimationError(f"non-finite payload {name!r}{where}")
                acc = self.Sh.get(name)
                if acc is None:
                    acc = self.Sh[name] = np.zeros((self.n_domains,) + v.shape)
                acc[k] += a * v
        self._pend = None
        self._pend_a = 0.0

    def accumulate(self, point, w, t=None):
        """Add state ``point.x`` in domain ``point.k`` with log-weight ``w``."""
        if self.offset is None:
            self.offset = float(w)
        elif w - self.offset > _RESCALE_AT:
            self._rescale(float(w))
        if point is not self._pend:
            self._flush()
            self._pend = point
            self._pend_t = t
        self._pend_a += math.exp(w - self.offset)
        self.counts[point.k] += 1
        if self.cell_visits is not None:
            self.cell_visits[point.k, point.j] += 1
        self.n += 1

    def merge(self, other):
        """Fold another accumulator (same domains and payloads) into this one."""
        self._flush()
        other._flush()
        if other.n == 0:
            return self
        if self.n == 0:
            self.offset = other.offset
        off = max(self.offset, other.offset)
        fs = math.exp(self.offset - off)
        fo = math.exp(other.offset - off)
        self.S1 = self.S1 * fs + other.S1 * fo
        for name, v in other.Sh.items():
            mine = self.Sh.get(name)
            self.Sh[name] = v * fo if mine is None else mine * fs + v * fo
        for name in set(self.Sh) - set(other.Sh):
            self.Sh[name] = self.Sh[name] * fs
        self.offset = off
        self.counts = self.counts + other.counts
        if self.cell_visits is not None and other.cell_visits is not None:
            self.cell_visits = self.cell_visits + other.cell_visits
        self.n += other.n
        return self

    def finalize(self):
        self._flush()
        if self.n == 0:
            raise EstimationError("no samples accumulated")
        total = math.fsum(self.S1.tolist())
        lam = self.S1 / total
        visited = self.S1 > 0
        # pin the sum to one: absorb rounding into the largest mass
        top = int(np.argmax(lam))
        lam[top] = 0.0
        lam[top] = 1.0 - math.fsum(lam.tolist())
        mu = {}
        overall = {}
        for name, S in self.Sh.items():
            m = np.full(S.shape, np.nan)
            m[visited] = S[visited] / self.S1[visited].reshape((-1,) + (1,) * (S.ndim - 1))
            mu[name] = m
            tot = np.zeros(S.shape[1:])
            for k in np.flatnonzero(visited):
                tot = tot + lam[k] * m[k]
            overall[name] = tot
        return DomainRepresentation(lam=lam, mu=mu, overall=overall, visited=visited,
                                    counts=self.counts.copy())


@dataclass
class DomainRepresentation:
    """Probability mass and conditional expectations per domain.

    ``lam[k]`` and ``mu[name][k]`` for k = 0..M; unvisited domains have zero
    mass and NaN expectations (``visited[k]`` is False).
    """

    lam: np.ndarray
    mu: dict
    overall: dict
    visited: np.ndarray
    counts: np.ndarray
    modes: list = field(default_factory=list)

    @property
    def log_lam(self):
        with np.errstate(divide="ignore"):
            return np.log(self.lam)

    def to_dict(self):
        out = {
            "lambda": self.lam.tolist(),
            "log_lambda": [float(v) for v in self.log_lam],
            "visited": self.visited.tolist(),
            "counts": self.counts.tolist(),
            "mu": {},
            "overall": {},
        }
        for name, m in self.mu.items():
            out["mu"][name] = {
                "shape": list(m.shape[1:]),
                "values": [None if not self.visited[k] else np.asarray(m[k]).ravel().tolist()
                           for k in range(len(m))],
            }
            out["overall"][name] = {"shape": list(np.shape(self.overall[name])),
                                    "values": np.ravel(self.overall[name]).tolist()}
        return out


@dataclass
class DiagnosticsReport:
    flags: dict
    details: dict
    recommendations: list

    @property
    def all_clear(self):
        return not any(self.flags.values())

    def to_dict(self):
        return {"flags": dict(self.flags), "details": dict(self.details),
                "recommendations": list(self.recommendations), "all_clear": self.all_clear}


def _normalized(w, mask):
    vals = w[mask]
    mx = vals.max()
    return vals - (mx + math.log(np.exp(vals - mx).sum()))


def diagnostics(gamma, visits, occupied, main_visits=None, w_final=None, V_final=None,
                snapshot=None, covariance=True, gamma_tol=1e-3, flat_tol=0.5,
                w_tol=0.1, v_tol=0.05, eig_range=(1e-8, 1e8)):
    """Convergence checks on a finished run.

    (a) small final gain and roughly uniform cell visits, (b) stable weights
    and adaptive statistics over the tail of the run, (c) adaptive
    statistics in a sane range.
    """
    occ = np.asarray(occupied).astype(bool)
    flags = {}
    details = {"gamma": float(gamma)}

    counts = np.asarray(main_visits if main_visits is not None else visits, dtype=float)
    cells = counts[occ]
    unvisited = int(np.sum(cells == 0)) if cells.size else 0
    if cells.size and cells.mean() > 0:
        dev = float(np.max(np.abs(cells - cells.mean())) / cells.mean())
    else:
        dev = float("inf")
    details["max_relative_visit_deviation"] = dev
    details["unvisited_cells"] = unvisited
    flags["a"] = bool(gamma >= gamma_tol or dev > flat_tol or unvisited > 0)

    w_change = v_change = 0.0
    if snapshot is not None and w_final is not None:
        w_snap, V_snap = snapshot
        if occ.any():
            w_change = float(np.max(np.abs(_normalized(np.asarray(w_final), occ)
                                           - _normalized(np.asarray(w_snap), occ))))
        if V_final is not None and len(V_final):
            num = np.linalg.norm((np.asarray(V_final) - np.asarray(V_snap)).reshape(len(V_final), -1), axis=1)
            den = np.linalg.norm(np.asarray(V_final).reshape(len(V_final), -1), axis=1)
            v_change = float(np.max(num / np.where(den > 0, den, 1.0)))
    details["w_change"] = w_change
    details["V_change"] = v_change
    flags["b"] = bool(w_change > w_tol or v_change > v_tol)

    bad = False
    if V_final is not None and len(V_final):
        V = np.asarray(V_final)
        if not np.all(np.isfinite(V)):
            bad = True
        elif covariance:
            eig = np.linalg.eigvalsh(V)
            details["V_eigen_range"] = [float(eig.min()), float(eig.max())]
            bad = bool(eig.min() < eig_range[0] or eig.max() > eig_range[1])
        else:
            details["V_range"] = [float(V.min()), float(V.max())]
            bad = bool(V.min() < 0 or V.max() > eig_range[1])
    flags["c"] = bad

    recs = []
    if flags["a"] or flags["b"]:
        recs.append("extend run")
    if flags["c"]:
        recs.append("reinitialize with smaller gamma_1")
    return DiagnosticsReport(flags=flags, details=details, recommendations=recs)
