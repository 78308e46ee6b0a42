"""Multi-domain sampling engine.

The sample space is split into an (M+1) x L grid of cells: the basin of the
mode reached by deterministic descent (``k``, with 0 for "no recorded mode")
crossed with a band of log density (``j``).  A Wang-Landau style weight per
cell flattens occupancy across the grid.  Cell columns are 0-based here:
column 0 is the top band ``[H_1, inf)`` and column ``L-1`` the unbounded
bottom band.

The engine is generic over a state-space model; see :class:`StateSpaceModel`.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels

MD, MD0, WL = "md", "md0", "wl"
VARIANTS = (MD, MD0, WL)
LOCAL, MIXED = "local", "mixed"


class DescentError(RuntimeError):
    """Mode search did not converge within its iteration budget."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class StateSpaceModel:
    """Capabilities a sample space must provide to the sampler.

    ``hashable_states`` models are matched against the registry by dict
    lookup; others override :meth:`match_mode`.
    """

    hashable_states = False

    def log_density(self, x):
        raise NotImplementedError

    def descend(self, x):
        """Deterministic ascent from ``x`` to the local mode of its basin."""
        raise NotImplementedError

    def states_equal(self, a, b):
        raise NotImplementedError

    def match_mode(self, registry, nu):
        """0-based registry index of ``nu``, or -1."""
        for k, mode in enumerate(registry.modes):
            if self.states_equal(mode, nu):
                return k
        return -1

    def local_propose(self, x, rng):
        """Return ``(y, log q(x, y), log q(y, x))``."""
        raise NotImplementedError

    def mixed_jump_sample(self, registry, k, rng):
        """Draw from the component of mode ``k`` (0-based)."""
        raise NotImplementedError

    def mixed_jump_log_density(self, registry, y):
        raise NotImplementedError

    def adapt_statistic(self, x, nu):
        raise NotImplementedError

    def initial_adapt_statistic(self):
        raise NotImplementedError

    def payload(self, x):
        """Default h(x) for domain-based representations."""
        return np.asarray(x, dtype=float)

    def serialize_state(self, x):
        return np.asarray(x).tolist()


@dataclass
class SamplerConfig:
    L: int = 10
    delta_h: float = 2.0
    p_mx: float = 0.1
    kstar: int = 100
    burn_in: int = 50_000
    n_iter: int = 5_000_000
    seed: int = 0
    variant: str = MD
    sigma: float = 1.0
    b: float = 0.5
    mode_tol: float = 1e-3
    rho: float = 0.5
    eta: float = 0.25
    eps_gamma: float = 1e-4
    gamma0: float = 1.0
    adaptive_local: bool = False

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant in (MD0, WL):
            # the Wang-Landau baseline differs from MD by having no domain
            # partition in the weights and no mixed jump
            self.p_mx = 0.0
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if not self.delta_h > 0:
            raise ValueError("delta_h must be positive")
        if not 0.0 <= self.p_mx < 1.0:
            raise ValueError("p_mx must lie in [0, 1)")
        if self.kstar < 1:
            raise ValueError("kstar must be at least 1")
        if self.burn_in < 0 or self.n_iter < self.burn_in:
            raise ValueError("need 0 <= burn_in <= n_iter")
        if not self.sigma > 0 or not self.b > 0 or not self.mode_tol > 0:
            raise ValueError("sigma, b and mode_tol must be positive")
        if not 0 < self.rho < 1 or not self.eta > 0 or not self.eps_gamma > 0:
            raise ValueError("need 0 < rho < 1, eta > 0, eps_gamma > 0")
        if not 0 < self.gamma0 <= 1:
            raise ValueError("gamma0 must lie in (0, 1]")

    def to_dict(self):
        return asdict(self)


class DensityLadder:
    """Evenly spaced log-density cut points H_1 > ... > H_{L-1}."""

    def __init__(self, top, delta_h, L):
        self.delta_h = float(delta_h)
        self.L = int(L)
        self.top = float(top)
        self.version = 0
        self._rebuild()

    def _rebuild(self):
        self.levels = self.top - self.delta_h * np.arange(self.L - 1)
        self._neg = (-self.levels).tolist()

    def column(self, logp):
        """0-based band index: number of cut points strictly above ``logp``."""
        return bisect.bisect_left(self._neg, -logp)

    def shift_up(self):
        self.top += self.delta_h
        self._rebuild()
        self.version += 1


class WeightMatrix:
    """Log-weights, MWL counters and occupancy over the cell grid.

    Storage is preallocated for ``rows`` domains; only the first M+1 rows are
    live.  ``c_level``/``occ_level`` are the per-band aggregates used by the
    flat-histogram check of the WL variant.
    """

    def __init__(self, rows, L):
        self.w = np.zeros((rows, L))
        self.c = np.zeros((rows, L), dtype=np.int64)
        self.occupied = np.zeros((rows, L), dtype=np.uint8)
        self.visits = np.zeros((rows, L), dtype=np.int64)
        self.c_level = np.zeros((1, L), dtype=np.int64)
        self.occ_level = np.zeros((1, L), dtype=np.uint8)

    @property
    def L(self):
        return self.w.shape[1]

    def reset_counters(self):
        self.c[:] = 0
        self.c_level[:] = 0


def working_log_density(logp, W, cell):
    """log p(x) - w_{kj}: the unnormalized working log density."""
    k, j = cell
    return logp - W.w[k, j]


class GammaSchedule:
    """Modified Wang-Landau gain sequence.

    While ``gamma >= eps_gamma`` the gain is multiplied by ``rho`` whenever
    the visit counters are flat; after that it decays as 1/(t + xi).  In the
    deterministic phase ``inv_gamma`` is tracked exactly.
    """

    ADAPTIVE, DETERMINISTIC = "adaptive", "deterministic"

    def __init__(self, gamma=1.0, rho=0.5, eta=0.25, eps_gamma=1e-4):
        self.gamma = float(gamma)
        self.rho = rho
        self.eta = eta
        self.eps_gamma = eps_gamma
        self.phase = self.ADAPTIVE
        self.t_c = None
        self.xi = None
        self.inv_gamma = None
        self.n_decreases = 0

    def update(self, c, occupied, t):
        """Advance from gamma_t to gamma_{t+1}; returns True if gamma was halved."""
        if self.gamma < self.eps_gamma:
            if self.phase == self.ADAPTIVE:
                self.phase = self.DETERMINISTIC
                self.t_c = t
                self.inv_gamma = 1.0 / self.gamma
                self.xi = self.inv_gamma - t
            self.inv_gamma += 1.0
            self.gamma = 1.0 / self.inv_gamma
            return False
        if kernels.backend.is_flat(c, occupied, self.eta):
            self.gamma *= self.rho
            self.n_decreases += 1
            return True
        return False


class ModeRegistry:
    """Recorded local modes with their log densities and adaptive statistics."""

    def __init__(self, model, cap, stat_shape, state_dim=None):
        self.model = model
        self.cap = int(cap)
        self.modes = []
        self.log_dens = []
        self.V = np.zeros((self.cap,) + tuple(stat_shape))
        self.v_version = np.zeros(self.cap, dtype=np.int64)
        self.version = 0
        self._index = {} if model.hashable_states else None
        self.array = None if state_dim is None else np.zeros((self.cap, state_dim))

    @property
    def M(self):
        return len(self.modes)

    def index_of(self, nu):
        """1-based domain index of mode ``nu``; 0 when unrecorded."""
        if self._index is not None:
            return self._index.get(nu, 0)
        return self.model.match_mode(self, nu) + 1

    def _store(self, k, nu, logd):
        if k == len(self.modes):
            self.modes.append(nu)
            self.log_dens.append(float(logd))
        else:
            if self._index is not None:
                del self._index[self.modes[k]]
            self.modes[k] = nu
            self.log_dens[k] = float(logd)
        if self._index is not None:
            self._index[nu] = k + 1
        if self.array is not None:
            self.array[k] = nu
        self.V[k] = self.model.initial_adapt_statistic()
        self.v_version[k] += 1
        self.version += 1

    def add(self, nu, logd):
        if self.M >= self.cap:
            raise ValueError("registry is full")
        self._store(self.M, nu, logd)
        return self.M

    def replace(self, k, nu, logd):
        """Overwrite the 1-based slot ``k``."""
        self._store(k - 1, nu, logd)

    def lowest(self):
        """1-based index of the mode with the smallest density."""
        return int(np.argmin(self.log_dens)) + 1

    def max_log_density(self):
        return max(self.log_dens)


ADDED, REPLACED, UNCHANGED = "added", "replaced", "unchanged"


def update_mode_registry(nu, logd, registry, W, variant=MD):
    """Record a newly found mode, possibly evicting the lowest one.

    Returns ``(status, k)`` with ``k`` the 1-based slot touched.
    """
    k = registry.index_of(nu)
    if k:
        return UNCHANGED, k
    if registry.M < registry.cap:
        k = registry.add(nu, logd)
        if variant == WL:
            W.w[k] = W.w[0]
        else:
            W.w[k] = 0.0
        W.c[k] = 0
        W.visits[k] = 0
        W.occupied[k] = 0
        return ADDED, k
    s = registry.lowest()
    if logd <= registry.log_dens[s - 1]:
        return UNCHANGED, 0
    registry.replace(s, nu, logd)
    if variant != WL:
        W.w[0] += W.w[s]
        W.w[s] = 0.0
    W.c[0] += W.c[s]
    W.c[s] = 0
    W.visits[0] += W.visits[s]
    W.visits[s] = 0
    W.occupied[0] |= W.occupied[s]
    W.occupied[s] = 0
    return REPLACED, s


def _cascade(a, rows, merge):
    a[:rows, -1] = merge(a[:rows, -2], a[:rows, -1])
    a[:rows, 1:-1] = a[:rows, :-2].copy()
    a[:rows, 0] = 0


def shift_ladder(registry, ladder, W):
    """Raise the ladder by one step when the best mode clears H_1 + delta_h."""
    if registry.M == 0 or not registry.max_log_density() > ladder.top + ladder.delta_h:
        return False
    ladder.shift_up()
    rows = registry.M + 1
    _cascade(W.w, rows, np.add)
    _cascade(W.c, rows, np.add)
    _cascade(W.visits, rows, np.add)
    _cascade(W.occupied, rows, np.bitwise_or)
    _cascade(W.c_level, 1, np.add)
    _cascade(W.occ_level, 1, np.bitwise_or)
    return True


class Point:
    """A state with its log density, mode and cell."""

    __slots__ = ("x", "logp", "mode", "k", "j", "reg_version", "lad_version")

    def __init__(self, x, logp, mode, k, j, reg_version, lad_version):
        self.x = x
        self.logp = logp
        self.mode = mode
        self.k = k
        self.j = j
        self.reg_version = reg_version
        self.lad_version = lad_version


def locate(model, x, logp, registry, ladder, iteration=None):
    """Descend from ``x`` and place it on the grid."""
    try:
        mode = model.descend(x)
    except DescentError as err:
        raise DescentError(str(err), iteration) from None
    return Point(x, logp, mode, registry.index_of(mode), ladder.column(logp),
                 registry.version, ladder.version)


def refresh(point, registry, ladder):
    if point.reg_version != registry.version:
        point.k = registry.index_of(point.mode)
        point.reg_version = registry.version
    if point.lad_version != ladder.version:
        point.j = ladder.column(point.logp)
        point.lad_version = ladder.version


def partition_index(model, x, registry, ladder):
    """Cell ``(k, j)`` of ``x``: 1-based domain (0 = unrecorded), 0-based band."""
    logp = model.log_density(x)
    if not math.isfinite(logp):
        raise ValueError("log density must be finite")
    p = locate(model, x, logp, registry, ladder)
    return p.k, p.j


def mh_step(model, cur, W, registry, ladder, rng, p_mx, adaptive_local=False,
            sigma=1.0, iteration=None):
    """One Metropolis-Hastings step against the working density.

    Returns ``(next_point, accepted, move_kind)``.
    """
    w = W.w
    M = registry.M
    if p_mx > 0.0 and rng.random() < p_mx:
        kind = MIXED
        k = int(rng.random() * M)
        y = model.mixed_jump_sample(registry, min(k, M - 1), rng)
    else:
        kind = LOCAL
        if adaptive_local:
            Vx = registry.V[cur.k - 1] if cur.k else None
            y, log_fwd = model.adaptive_propose(cur.x, Vx, sigma, rng)
        else:
            y, log_fwd, log_rev = model.local_propose(cur.x, rng)
    logp_y = model.log_density(y)
    u = rng.random()
    if not math.isfinite(logp_y):
        return cur, False, kind
    prop = locate(model, y, logp_y, registry, ladder, iteration)
    log_ratio = (logp_y - w[prop.k, prop.j]) - (cur.logp - w[cur.k, cur.j])
    if kind == MIXED:
        log_r_x = model.mixed_jump_log_density(registry, cur.x)
        log_r_y = model.mixed_jump_log_density(registry, y)
        if log_r_x == -math.inf or log_r_y == -math.inf:
            return cur, False, kind
        log_ratio += log_r_x - log_r_y
    elif adaptive_local:
        Vy = registry.V[prop.k - 1] if prop.k else None
        log_rev = model.adaptive_log_q(y, cur.x, Vy, sigma)
        log_ratio += log_rev - log_fwd
    else:
        log_ratio += log_rev - log_fwd
    if log_ratio >= 0.0 or u < math.exp(log_ratio):
        return prop, True, kind
    return cur, False, kind


def update_weights_and_stats(point, W, registry, model, gamma, variant):
    """Gain update of the visited cell (or band, for WL) and of V_k."""
    k, j = point.k, point.j
    if variant == WL:
        W.w[:registry.M + 1, j] += gamma
    else:
        W.w[k, j] += gamma
    W.c[k, j] += 1
    W.visits[k, j] += 1
    W.occupied[k, j] = 1
    W.c_level[0, j] += 1
    W.occ_level[0, j] = 1
    if k:
        V = registry.V[k - 1]
        V += (gamma / 2.0) * (model.adapt_statistic(point.x, registry.modes[k - 1]) - V)
        registry.v_version[k - 1] += 1


@dataclass
class MoveStats:
    proposed: int = 0
    accepted: int = 0

    @property
    def rate(self):
        return self.accepted / self.proposed if self.proposed else float("nan")


@dataclass
class SamplerReport:
    config: dict
    modes: list
    mode_log_density: list
    V: list
    gamma: float
    gamma_phase: str
    acceptance: dict
    visits: list
    log_weights: list
    ladder: list
    dr: object = None
    diagnostics: object = None
    extra: dict = field(default_factory=dict)


class MultiDomainSampler:
    """Burn-in (mode and ladder discovery) followed by the adaptive main run."""

    def __init__(self, model, cfg, x0, rng=None, state_dim=None):
        self.model = model
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        stat_shape = np.shape(model.initial_adapt_statistic())
        if state_dim is None:
            state_dim = getattr(model, "state_dim", None)
        self.registry = ModeRegistry(model, cfg.kstar, stat_shape, state_dim)
        self.W = WeightMatrix(cfg.kstar + 1, cfg.L)
        self.schedule = GammaSchedule(cfg.gamma0, cfg.rho, cfg.eta, cfg.eps_gamma)
        self.stats = {LOCAL: MoveStats(), MIXED: MoveStats()}
        self.burn_stats = MoveStats()
        self.t = 0

        logp = model.log_density(x0)
        if not math.isfinite(logp):
            raise ValueError("initial state must have finite log density")
        try:
            mode = model.descend(x0)
        except DescentError as err:
            raise DescentError(str(err), 0) from None
        mode_logp = model.log_density(mode)
        self.registry.add(mode, mode_logp)
        self.ladder = DensityLadder(mode_logp, cfg.delta_h, cfg.L)
        self.current = Point(x0, logp, mode, self.registry.index_of(mode),
                             self.ladder.column(logp), self.registry.version,
                             self.ladder.version)
        self.burned_in = False

    # -- burn-in ---------------------------------------------------------

    def run_burnin(self, monitor=None):
        """Local moves only, gain fixed at 1; modes and ladder adapt."""
        model, reg, ladder, W, rng = self.model, self.registry, self.ladder, self.W, self.rng
        variant = self.cfg.variant
        cur = self.current
        for t in range(1, self.cfg.burn_in + 1):
            y, log_fwd, log_rev = model.local_propose(cur.x, rng)
            logp_y = model.log_density(y)
            u = rng.random()
            accepted = False
            if math.isfinite(logp_y):
                try:
                    nu = model.descend(y)
                except DescentError as err:
                    raise DescentError(str(err), t) from None
                if not reg.index_of(nu):
                    update_mode_registry(nu, model.log_density(nu), reg, W, variant)
                shift_ladder(reg, ladder, W)
                refresh(cur, reg, ladder)
                prop = Point(y, logp_y, nu, reg.index_of(nu), ladder.column(logp_y),
                             reg.version, ladder.version)
                log_ratio = ((logp_y - W.w[prop.k, prop.j]) - (cur.logp - W.w[cur.k, cur.j])
                             + log_rev - log_fwd)
                if log_ratio >= 0.0 or u < math.exp(log_ratio):
                    cur = prop
                    accepted = True
            self.burn_stats.proposed += 1
            self.burn_stats.accepted += accepted
            update_weights_and_stats(cur, W, reg, model, 1.0, variant)
            self.t = t
            if monitor is not None:
                monitor(self, cur, accepted, LOCAL)
        self.current = cur
        self.burned_in = True
        W.reset_counters()
        return reg, ladder, W, cur

    # -- main phase ------------------------------------------------------

    def run_main(self, accumulator=None, monitor=None, snapshot_frac=0.9):
        """Adaptive main run on a frozen registry and ladder."""
        if not self.burned_in:
            self.run_burnin()
        model, reg, ladder, W, rng, cfg = (self.model, self.registry, self.ladder,
                                          self.W, self.rng, self.cfg)
        sched = self.schedule
        variant = cfg.variant
        p_mx = cfg.p_mx if reg.M > 0 else 0.0
        n_main = cfg.n_iter - cfg.burn_in
        snap_at = int(snapshot_frac * n_main)
        self.snapshot = None
        stats = self.stats
        wl = variant == WL
        cur = self.current
        t0 = self.t
        for step in range(n_main):
            t = t0 + step + 1
            if step == snap_at:
                self.snapshot = (W.w[:reg.M + 1].copy(), reg.V[:reg.M].copy())
            cur, accepted, kind = mh_step(model, cur, W, reg, ladder, rng, p_mx,
                                          cfg.adaptive_local, cfg.sigma, t)
            ms = stats[kind]
            ms.proposed += 1
            if accepted:
                ms.accepted += 1
            if accumulator is not None:
                accumulator.accumulate(cur, W.w[cur.k, cur.j], t)
            gamma = sched.gamma
            update_weights_and_stats(cur, W, reg, model, gamma, variant)
            if wl:
                flat = sched.update(W.c_level, W.occ_level, t)
            else:
                flat = sched.update(W.c[:reg.M + 1], W.occupied[:reg.M + 1], t)
            if flat:
                W.reset_counters()
            if monitor is not None:
                monitor(self, cur, accepted, kind)
        self.t = t0 + n_main
        self.current = cur
        if self.snapshot is None:
            self.snapshot = (W.w[:reg.M + 1].copy(), reg.V[:reg.M].copy())
        return self.report(accumulator)

    def run(self, accumulator=None, monitor=None):
        self.run_burnin(monitor)
        return self.run_main(accumulator, monitor)

    def report(self, accumulator=None):
        from .estimation import diagnostics

        reg, W = self.registry, self.W
        rows = reg.M + 1
        dr = accumulator.finalize() if accumulator is not None and accumulator.n else None
        diag = diagnostics(
            gamma=self.schedule.gamma,
            visits=W.visits[:rows],
            occupied=W.occupied[:rows],
            main_visits=(accumulator.cell_visits[:rows] if accumulator is not None
                         and accumulator.cell_visits is not None else None),
            w_final=W.w[:rows],
            V_final=reg.V[:reg.M],
            snapshot=self.snapshot,
            covariance=np.ndim(reg.V) == 3,
        )
        return SamplerReport(
            config=self.cfg.to_dict(),
            modes=[self.model.serialize_state(nu) for nu in reg.modes],
            mode_log_density=list(reg.log_dens),
            V=[np.asarray(v).tolist() for v in reg.V[:reg.M]],
            gamma=self.schedule.gamma,
            gamma_phase=self.schedule.phase,
            acceptance={kind: {"proposed": s.proposed, "accepted": s.accepted, "rate": s.rate}
                        for kind, s in self.stats.items()},
            visits=W.visits[:rows].tolist(),
            log_weights=W.w[:rows].tolist(),
            ladder=self.ladder.levels.tolist(),
            dr=dr,
            diagnostics=diag,
        )


def run_burnin(cfg, model, x1, rng=None, state_dim=None):
    """Burn-in only; returns ``(registry, ladder, W, point)``."""
    sampler = MultiDomainSampler(model, cfg, x1, rng, state_dim)
    return sampler.run_burnin()


def run_sampler(cfg, model, x1, accumulator=None, rng=None, state_dim=None, monitor=None):
    """Full run (burn-in then main); returns ``(sampler, report)``."""
    sampler = MultiDomainSampler(model, cfg, x1, rng, state_dim)
    report = sampler.run(accumulator, monitor)
    return sampler, report
