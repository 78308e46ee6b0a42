"""Euclidean state spaces: gradient-ascent basins and Gaussian proposals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .core import DescentError, StateSpaceModel

LOG_2PI = math.log(2.0 * math.pi)


class RastriginTarget:
    """p(x) proportional to exp(-R(x)), R(x) = sum x_i^2 + A (m - sum cos(pi x_i))."""

    def __init__(self, m=4, A=2.0):
        self.m = int(m)
        self.A = float(A)

    def log_density(self, x):
        return kernels.backend.rastrigin_logpdf(x, self.A)

    def gradient(self, x):
        return kernels.backend.rastrigin_grad(x, self.A)

    def ascend(self, x, gtol, max_iter, max_step):
        return kernels.backend.rastrigin_ascend(x, self.A, gtol, max_iter, max_step)

    def marginal_log_density(self, t):
        """One coordinate's log density (the target is a product of these)."""
        return -(t * t + self.A * (1.0 - np.cos(np.pi * t)))

    def marginal_gradient(self, t):
        return -2.0 * t - self.A * np.pi * np.sin(np.pi * t)


def gradient_ascent(log_density, gradient, x, gtol=1e-6, max_iter=10_000, max_step=0.1):
    """Backtracking (Armijo, halving) gradient ascent for a generic target.

    Steps are capped at ``max_step`` in Euclidean length so an iterate can not
    leap over a ridge into a neighbouring basin.  Returns ``(x, iterations)``
    with iterations = -1 when the budget is exhausted.
    """
    x = np.array(x, dtype=float)
    f = log_density(x)
    for it in range(max_iter):
        g = np.asarray(gradient(x), dtype=float)
        gg = float(g @ g)
        gnorm = math.sqrt(gg)
        if gnorm < gtol:
            return x, it
        step = min(1.0, max_step / gnorm)
        while True:
            y = x + step * g
            fy = log_density(y)
            if fy >= f + 1e-4 * step * gg:
                break
            step *= 0.5
            if step * gnorm < 1e-13:
                # no representable progress left: accept a loose stationary point
                return x, (it if gnorm < math.sqrt(gtol) else -1)
        x, f = y, fy
    return x, -1


class ContinuousSpace(StateSpaceModel):
    """R^m instance: Gaussian local moves and a Gaussian-mixture mixed jump.

    ``target`` provides ``log_density`` and ``gradient`` (and optionally a fast
    ``ascend``).  Modes are matched by Euclidean distance ``mode_tol``.
    """

    hashable_states = False

    def __init__(self, target, sigma=1.0, mode_tol=1e-3, gtol=1e-6, max_descent=10_000,
                 max_step=0.1, v_init=0.01, jitter=1e-6):
        self.target = target
        self.m = target.m
        self.state_dim = target.m
        self.sigma = float(sigma)
        self.mode_tol = float(mode_tol)
        self.gtol = gtol
        self.max_descent = max_descent
        self.max_step = max_step
        self.v_init = v_init
        self.jitter = jitter
        self._chol_cache = {}

    def log_density(self, x):
        return self.target.log_density(x)

    def descend(self, x):
        if hasattr(self.target, "ascend"):
            mode, it = self.target.ascend(x, self.gtol, self.max_descent, self.max_step)
        else:
            mode, it = gradient_ascent(self.target.log_density, self.target.gradient, x,
                                       self.gtol, self.max_descent, self.max_step)
        if it < 0:
            raise DescentError(f"gradient ascent did not converge in {self.max_descent} steps")
        return mode

    def states_equal(self, a, b):
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) <= self.mode_tol

    def match_mode(self, registry, nu):
        return kernels.backend.match_point(registry.array, registry.M, nu, self.mode_tol)

    def local_propose(self, x, rng):
        y = x + self.sigma * rng.standard_normal(self.m)
        return y, 0.0, 0.0

    def adaptive_propose(self, x, V, sigma, rng):
        """y ~ N(x, sigma^2 V); V None means the identity."""
        if V is None:
            y = x + sigma * rng.standard_normal(self.m)
        else:
            y = x + sigma * (np.linalg.cholesky(V) @ rng.standard_normal(self.m))
        return y, self.adaptive_log_q(x, y, V, sigma)

    def adaptive_log_q(self, x, y, V, sigma):
        cov = sigma * sigma * (np.eye(self.m) if V is None else np.asarray(V))
        return gaussian_log_density(y, x, cov)

    def _factors(self, registry):
        """Cholesky factors, inverses and half log-determinants of V_k + jitter I."""
        M = registry.M
        cache = self._chol_cache
        if cache.get("registry") is not registry or cache["Linv"].shape[0] != registry.cap:
            cache.clear()
            cache["registry"] = registry
            cache["Linv"] = np.zeros((registry.cap, self.m, self.m))
            cache["half_logdet"] = np.zeros(registry.cap)
            cache["L"] = np.zeros((registry.cap, self.m, self.m))
            cache["versions"] = np.full(registry.cap, -1, dtype=np.int64)
        stale = np.flatnonzero(cache["versions"][:M] != registry.v_version[:M])
        for k in stale:
            # V_k collapses toward rank one while gamma is large; keep the
            # proposal covariance nonsingular
            try:
                L = np.linalg.cholesky(registry.V[k] + self.jitter * np.eye(self.m))
            except np.linalg.LinAlgError:
                raise ValueError(f"adaptive covariance of mode {k + 1} is not positive definite")
            cache["L"][k] = L
            cache["Linv"][k] = np.linalg.inv(L)
            cache["half_logdet"][k] = float(np.sum(np.log(np.diag(L))))
            cache["versions"][k] = registry.v_version[k]
        return cache["L"][:M], cache["Linv"][:M], cache["half_logdet"][:M]

    def mixed_jump_sample(self, registry, k, rng):
        L, _, _ = self._factors(registry)
        return registry.array[k] + L[k] @ rng.standard_normal(self.m)

    def mixed_jump_log_density(self, registry, y):
        M = registry.M
        _, Linv, half_logdet = self._factors(registry)
        diff = np.asarray(y) - registry.array[:M]
        z = np.einsum("kij,kj->ki", Linv, diff)
        comp = -0.5 * np.einsum("ki,ki->k", z, z) - half_logdet - 0.5 * self.m * LOG_2PI
        mx = comp.max()
        return float(mx + math.log(np.exp(comp - mx).sum()) - math.log(M))

    def adapt_statistic(self, x, nu):
        d = np.asarray(x) - np.asarray(nu)
        return np.outer(d, d)

    def initial_adapt_statistic(self):
        return self.v_init * np.eye(self.m)


def gaussian_log_density(y, mean, cov):
    cov = np.asarray(cov, dtype=float)
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, np.asarray(y, dtype=float) - np.asarray(mean, dtype=float))
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * len(z) * LOG_2PI)


# ---------------------------------------------------------------------------
# Exact DRs for separable targets by one-dimensional quadrature
# ---------------------------------------------------------------------------

@dataclass
class Basin1D:
    mode: float
    lower: float
    upper: float
    mass: float
    mean: float


@dataclass
class ProductOracle:
    """Per-coordinate basins of a separable target and their exact moments."""

    basins: list
    Z: float
    moments: dict

    @property
    def modes(self):
        return [b.mode for b in self.basins]

    def domain_log_lambda(self, idx):
        """log mass of the product basin indexed by per-coordinate basin indices."""
        return sum(math.log(self.basins[i].mass / self.Z) for i in idx)

    def domain_mean(self, idx):
        return np.array([self.basins[i].mean for i in idx])

    def domains(self, m):
        """All product domains as (index tuple, mode vector), lexicographic."""
        import itertools

        n = len(self.basins)
        out = []
        for idx in itertools.product(range(n), repeat=m):
            out.append((idx, np.array([self.basins[i].mode for i in idx])))
        return out

    def classify(self, x):
        """Per-coordinate basin indices of a point."""
        idx = []
        for t in np.asarray(x, dtype=float):
            for n, b in enumerate(self.basins):
                if b.lower <= t < b.upper:
                    idx.append(n)
                    break
        return tuple(idx)


def _bisect_root(f, a, b, xtol=1e-14):
    return optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def product_target_quadrature_oracle(log_density_1d, gradient_1d, span=10.0, grid=4001,
                                     epsabs=1e-12, epsrel=1e-12, extra_moments=None):
    """Exact basin masses and means of a one-dimensional factor.

    Critical points are bracketed on a grid over ``[-span, span]`` by sign
    changes of the derivative and refined by bisection; maxima are modes and
    the minima between them are basin boundaries.  Masses and first moments
    are integrated with adaptive quadrature at absolute tolerance ``epsabs``.
    ``extra_moments`` maps a name to a function g(t); the oracle reports the
    normalized expectation E[g(X_1)] for each.
    """
    xs = np.linspace(-span, span, grid)
    gs = gradient_1d(xs)
    roots = []
    for a, b, ga, gb in zip(xs[:-1], xs[1:], gs[:-1], gs[1:]):
        if ga == 0.0:
            roots.append(float(a))
        elif ga * gb < 0:
            roots.append(_bisect_root(gradient_1d, float(a), float(b)))
    roots = sorted(set(roots))
    modes = [r for r in roots if gradient_1d(r - 1e-6) > 0 > gradient_1d(r + 1e-6)]
    bounds = [r for r in roots if gradient_1d(r - 1e-6) < 0 < gradient_1d(r + 1e-6)]
    edges = [-math.inf] + bounds + [math.inf]
    if len(edges) - 1 != len(modes):
        raise ValueError("modes and basin boundaries do not interleave")

    shift = max(log_density_1d(mo) for mo in modes)

    def quad(fn, lo, hi):
        def integrand(t):
            w = math.exp(log_density_1d(t) - shift)
            return 0.0 if w == 0.0 else fn(t) * w

        val, err = integrate.quad(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=500)
        if not math.isfinite(val):
            raise ArithmeticError("quadrature did not converge")
        return val

    basins = []
    for mo, lo, hi in zip(modes, edges[:-1], edges[1:]):
        mass = quad(lambda t: 1.0, lo, hi)
        first = quad(lambda t: t, lo, hi)
        basins.append(Basin1D(mode=mo, lower=lo, upper=hi, mass=mass, mean=first / mass))
    Z = sum(b.mass for b in basins)
    moments = {}
    for name, g in (extra_moments or {}).items():
        moments[name] = sum(quad(g, b.lower, b.upper) for b in basins) / Z
    return ProductOracle(basins=basins, Z=Z, moments=moments)


def rastrigin_oracle(A=2.0, epsabs=1e-12, epsrel=1e-12):
    t = RastriginTarget(1, A)
    return product_target_quadrature_oracle(
        t.marginal_log_density, t.marginal_gradient, epsabs=epsabs, epsrel=epsrel,
        extra_moments={
            "x": lambda x: x,
            "exp2x": lambda x: math.exp(2.0 * x),
            "x5": lambda x: x ** 5,
            "x6": lambda x: x ** 6,
        },
    )


def rastrigin_expectations(oracle, m):
    """Exact E[X], E[e^{2S}], E[prod X_i], E[sum X_i^5], E[sum X_i^6]."""
    mo = oracle.moments
    return {
        "x": np.full(m, mo["x"]),
        "exp2s": mo["exp2x"] ** m,
        "prod": mo["x"] ** m,
        "sum5": m * mo["x5"],
        "sum6": m * mo["x6"],
    }


def rastrigin_payloads(m):
    return {
        "x": lambda x: x,
        "exp2s": lambda x: math.exp(2.0 * float(np.sum(x))),
        "prod": lambda x: float(np.prod(x)),
        "sum5": lambda x: float(np.sum(np.asarray(x) ** 5)),
        "sum6": lambda x: float(np.sum(np.asarray(x) ** 6)),
    }


def layer_of(mode, tol=0.5):
    """1-based layer: one plus the number of nonzero mode coordinates."""
    return 1 + int(np.sum(np.abs(np.asarray(mode)) > tol))
