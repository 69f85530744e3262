"""Monte Carlo evaluation of observation/stopping policies.

Episodes run in lockstep as numpy arrays.  Randomness comes from Philox
streams keyed by ``(seed, stream, column)``: two streams for disorder times,
one per observation index for the measurement noise and one per arrival
index for the arrival gaps.  Episode ``i`` always reads entry ``i`` of each
column, so different policies run on common random numbers and a run with
more episodes extends a shorter one.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError
from .model import drift_flow, jump_coefficients
from .operators import horizon_T, t_star_0

RNG_NAME = "numpy.random.Philox"
_THETA, _NOISE, _ARRIVAL = 0, 1, 2


def stream(seed, tag, index=0):
    """Independent Philox generator for ``(seed, tag, index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), tag, index])))


@dataclass(frozen=True, eq=False)
class Policy:
    """An executable observation/stopping rule.

    Build with ``Policy.lump``, ``Policy.fixed``, ``Policy.arrival`` or
    ``Policy.immediate`` rather than directly.
    """

    kind: str
    n: int = 0
    solution: object = None
    schedule: object = None
    stages: list = field(default_factory=list)

    @classmethod
    def lump(cls, solution, n):
        if n > solution.n_max:
            raise DomainError(f"solution only covers up to {solution.n_max} observations")
        return cls("lump", int(n), solution)

    @classmethod
    def fixed(cls, schedule, params, phi_grid, phibar=None, quadrature=64):
        from .lump import _fixed_schedule_tables
        from .operators import QuadratureRule
        phi_grid = np.asarray(phi_grid, dtype=float)
        phibar = float(phi_grid[-1]) if phibar is None else phibar
        stages = _fixed_schedule_tables(schedule, params, phi_grid, phibar,
                                        QuadratureRule.gauss_hermite(quadrature), "linear")
        return cls("fixed", schedule.count, None, schedule, stages)

    @classmethod
    def arrival(cls, lattice):
        return cls("arrival", lattice.n, lattice)

    @classmethod
    def immediate(cls):
        return cls("immediate")


@dataclass(frozen=True)
class EpisodeResult:
    theta: float
    tau: float
    false_alarm: bool
    delay: float
    observations_used: int


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    stderr: float
    n_episodes: int
    seed: int
    truncated: int = 0
    rng: str = RNG_NAME
    numpy_version: str = np.__version__

    def to_dict(self):
        return dict(self.__dict__)


def sample_disorder(params, rng, size=None):
    """Disorder time: 0 with probability p, otherwise Exp(lam)."""
    u = rng.random(size)
    e = rng.standard_exponential(size) / params.lam
    out = np.where(u < params.p, 0.0, e)
    return float(out) if size is None else out


def observation_increment(t_prev, t_next, theta, params, rng=None, eps=None):
    """Standardized increment of the observed process between two looks.

    Pass ``eps`` to supply the standard normal noise instead of drawing it.
    """
    t_prev = np.asarray(t_prev, dtype=float)
    t_next = np.asarray(t_next, dtype=float)
    dt = t_next - t_prev
    if np.any(dt <= 0):
        raise DomainError("observation times must increase")
    if eps is None:
        eps = rng.standard_normal(np.broadcast(t_prev, t_next, np.asarray(theta)).shape)
    start = np.maximum(np.asarray(theta, dtype=float), t_prev)
    drift = params.alpha * np.maximum(t_next - start, 0.0)
    out = drift / np.sqrt(dt) + eps
    return out[()] if np.ndim(out) == 0 else out


class _Draws:
    """Column-wise random numbers for a batch of episodes."""

    def __init__(self, n, seed=None, rng=None):
        self.n, self.seed, self.rng = n, seed, rng
        self._noise, self._arr = {}, {}

    def theta(self, params):
        if self.rng is not None:
            return np.atleast_1d(sample_disorder(params, self.rng, self.n))
        # separate streams for the atom and the exponential keep prefixes stable
        u = stream(self.seed, _THETA, 0).random(self.n)
        e = stream(self.seed, _THETA, 1).standard_exponential(self.n) / params.lam
        return np.where(u < params.p, 0.0, e)

    def noise(self, col):
        if col not in self._noise:
            g = self.rng if self.rng is not None else stream(self.seed, _NOISE, col)
            self._noise[col] = g.standard_normal(self.n)
        return self._noise[col]

    def arrival_gap(self, col, mu):
        if col not in self._arr:
            g = self.rng if self.rng is not None else stream(self.seed, _ARRIVAL, col)
            self._arr[col] = g.standard_exponential(self.n) / mu
        return self._arr[col]


def _observe(params, t_prev, t_next, psi, theta, eps):
    dt = t_next - t_prev
    z = observation_increment(t_prev, t_next, theta, params, eps=eps)
    A, B = jump_coefficients(dt, z, params)
    return A * psi + B


def _run_lump(policy, params, theta, draws):
    sol = policy.solution
    phibar = sol.phibar
    m = theta.size
    t = np.zeros(m)
    psi = np.full(m, params.phi0)
    tau = np.full(m, np.nan)
    used = np.zeros(m, dtype=np.int64)
    for rights in range(policy.n, 0, -1):
        live = np.isnan(tau)
        if not np.any(live):
            break
        idx = np.nonzero(live)[0]
        h = sol.boundaries[rights].waiting_time(psi[idx])
        h[psi[idx] >= phibar] = 0.0
        stop = h <= 0
        tau[idx[stop]] = t[idx[stop]]
        go = idx[~stop]
        if go.size:
            col = policy.n - rights
            t_next = t[go] + h[~stop]
            psi[go] = _observe(params, t[go], t_next, psi[go], theta[go], draws.noise(col)[go])
            t[go] = t_next
            used[go] += 1
    live = np.isnan(tau)
    tau[live] = t[live] + t_star_0(psi[live], params)
    return tau, used


def _run_fixed(policy, params, theta, draws):
    sched = policy.schedule
    stages = policy.stages
    m = theta.size
    t = np.zeros(m)
    psi = np.full(m, params.phi0)
    tau = np.full(m, np.nan)
    used = np.zeros(m, dtype=np.int64)
    grid = stages[0][0].grid
    h = grid[1] - grid[0]
    for col, gap in enumerate(sched.intervals):
        left = sched.count - col
        live = np.nonzero(np.isnan(tau))[0]
        if not live.size:
            break
        stop_first = stages[left][1]
        node = np.rint(psi[live] / h).astype(np.int64)
        beyond = node >= grid.size
        sf = np.ones(live.size, dtype=bool)
        sf[~beyond] = stop_first[node[~beyond]]
        t0 = t_star_0(psi[live], params)
        sf &= t0 < gap
        done = live[sf]
        tau[done] = t[done] + t0[sf]
        go = live[~sf]
        if go.size:
            t_next = t[go] + gap
            psi[go] = _observe(params, t[go], t_next, psi[go], theta[go], draws.noise(col)[go])
            t[go] = t_next
            used[go] += 1
    live = np.isnan(tau)
    tau[live] = t[live] + t_star_0(psi[live], params)
    return tau, used


def _run_arrival(policy, params, theta, draws, horizon, trace=None):
    lat = policy.solution
    n, mu = lat.n, lat.params.mu
    m = theta.size
    now = np.zeros(m)
    t = np.zeros(m)
    psi = np.full(m, params.phi0)
    tau = np.full(m, np.nan)
    used = np.zeros(m, dtype=np.int64)
    got = np.zeros(m, dtype=np.int64)
    spent = np.zeros(m, dtype=np.int64)
    eta = draws.arrival_gap(0, mu).copy()  # time of the next arrival
    arrived = np.full((m, n), np.nan)
    looked = np.full((m, n), np.nan)
    any_tab = lat.tables[(n, n)]
    phibar = any_tab.phibar
    for _ in range(4 * n + 4):
        if not np.any(np.isnan(tau)):
            break
        for (j, k), tab in lat.tables.items():
            idx = np.nonzero(np.isnan(tau) & (got == j) & (spent == k))[0]
            if not idx.size:
                continue
            y = now[idx] - t[idx]
            i, c = tab.nearest_cell(y, psi[idx])
            over = (c >= tab.psi_grid.size) | (psi[idx] >= phibar)
            c = np.minimum(c, tab.psi_grid.size - 1)
            a = np.where(over, y, np.maximum(tab.action_time[i, c], y))
            kind = np.where(over, 0, tab.action_kind[i, c])
            t_act = t[idx] + a
            nxt = eta[idx] if j < n else np.full(idx.size, np.inf)
            arrive = nxt < t_act
            ar = idx[arrive]
            now[ar] = eta[ar]
            if ar.size:
                arrived[ar, j] = eta[ar]
            got[ar] += 1
            if j + 1 < n:
                eta[ar] = eta[ar] + draws.arrival_gap(j + 1, mu)[ar]
            act = ~arrive
            st = act & (kind == 0)
            tau[idx[st]] = t_act[st]
            ob = act & (kind == 1)
            go = idx[ob]
            if go.size:
                t_next = t_act[ob]
                # a look at zero elapsed time carries no information
                pos = t_next > t[go]
                g2 = go[pos]
                psi[g2] = _observe(params, t[g2], t_next[pos], psi[g2], theta[g2],
                                   draws.noise(k)[g2])
                t[go] = t_next
                now[go] = t_next
                looked[go, k] = t_next
                spent[go] += 1
                used[go] += 1
    live = np.isnan(tau)
    tau[live] = horizon + 1.0  # counted as truncated below
    if trace is not None:
        trace.update(arrival_times=arrived, observation_times=looked)
    return tau, used


def simulate_batch(policy, params, n_episodes=None, seed=None, rng=None, horizon=None,
                   trace=None):
    """Run a batch of episodes and return per-episode arrays.

    Returns ``(theta, tau, observations_used, truncated_mask)``.  For arrival
    policies a ``trace`` dict, if given, receives per-episode arrival and
    observation times (NaN where they never happened).
    """
    if rng is None and seed is None:
        raise DomainError("a seed or a generator is required")
    horizon = 50.0 * horizon_T(params) if horizon is None else horizon
    draws = _Draws(n_episodes, seed, rng)
    theta = draws.theta(params)
    if policy.kind == "immediate":
        tau, used = np.zeros(theta.size), np.zeros(theta.size, dtype=np.int64)
    elif policy.kind == "lump":
        tau, used = _run_lump(policy, params, theta, draws)
    elif policy.kind == "fixed":
        tau, used = _run_fixed(policy, params, theta, draws)
    elif policy.kind == "arrival":
        tau, used = _run_arrival(policy, params, theta, draws, horizon, trace)
    else:
        raise DomainError(f"unknown policy kind {policy.kind!r}")
    trunc = tau > horizon
    tau = np.where(trunc, horizon, tau)
    return theta, tau, used, trunc


def episode_losses(theta, tau, params):
    return (tau < theta).astype(float) + params.c * np.maximum(tau - theta, 0.0)


def run_episode(policy, params, rng):
    """Simulate one episode with draws taken from ``rng``."""
    theta, tau, used, _ = simulate_batch(policy, params, 1, rng=rng)
    th, ta = float(theta[0]), float(tau[0])
    return EpisodeResult(th, ta, ta < th, max(ta - th, 0.0), int(used[0]))


def estimate_risk(policy, params, n_episodes, seed, return_episodes=False):
    """Monte Carlo Bayes risk with its standard error."""
    if n_episodes < 1:
        raise DomainError("n_episodes must be >= 1")
    theta, tau, used, trunc = simulate_batch(policy, params, n_episodes, seed=seed)
    loss = episode_losses(theta, tau, params)
    mean = float(np.sum(loss) / n_episodes)
    sd = float(np.std(loss, ddof=1)) if n_episodes > 1 else 0.0
    est = RiskEstimate(mean, sd / math.sqrt(n_episodes), int(n_episodes), int(seed), int(trunc.sum()))
    if return_episodes:
        return est, {"theta": theta, "tau": tau, "false_alarm": tau < theta,
                     "delay": np.maximum(tau - theta, 0.0), "observations_used": used}
    return est


@dataclass(frozen=True, eq=False)
class DiscretizedPaths:
    """Odds sampled every ``1/n`` time units, shared by both interpolations.

    ``values[p, k]`` is the odds of path p right after the k-th grid look.
    """

    n: int
    times: np.ndarray
    values: np.ndarray
    params: object

    def piecewise_constant(self, t):
        k = np.minimum(np.floor(np.asarray(t) * self.n + 1e-12).astype(np.int64), self.times.size - 1)
        return self.values[:, k]

    def flow_interpolated(self, t):
        t = np.asarray(t, dtype=float)
        k = np.minimum(np.floor(t * self.n + 1e-12).astype(np.int64), self.times.size - 1)
        return drift_flow(t - self.times[k], self.values[:, k], self.params)

    def gap_function(self, phi):
        lam = self.params.lam
        return math.exp(lam / self.n) * (np.asarray(phi) + 1.0) - 1.0 - np.asarray(phi)

    def sup_gap(self):
        """Supremum over the horizon of the gap between the two interpolations."""
        return self.gap_function(self.values[:, :-1].max(axis=1))


def discretized_paths(n, horizon, phi0, params, rng, n_paths=1):
    """Odds from looks every ``1/n`` under the no-disorder reference law.

    Increments are standard normal, which is the law the jump map's mean
    identity refers to.
    """
    if n < 1 or not horizon > 0:
        raise DomainError("need n >= 1 and horizon > 0")
    steps = int(math.floor(horizon * n + 1e-9))
    times = np.arange(steps + 1) / n
    vals = np.empty((n_paths, steps + 1))
    vals[:, 0] = phi0
    z = rng.standard_normal((n_paths, steps))
    dt = 1.0 / n
    for k in range(steps):
        A, B = jump_coefficients(dt, z[:, k], params)
        vals[:, k + 1] = A * vals[:, k] + B
    return DiscretizedPaths(n, times, vals, params)
