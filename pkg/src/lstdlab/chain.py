"""Finite ergodic Markov reward processes.

Provides Garnet-style random chain generation, stationary distributions by
power iteration, the exact discounted value function, the one-step Bellman
operator and its lambda-weighted geometric mixture, and seeded trajectory
sampling. Everything here is dense and deterministic; state spaces are
expected to stay in the hundreds.
"""

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .linalg import solve_refined

__all__ = [
    "NonConvergence",
    "SingularSystem",
    "MarkovRewardProcess",
    "StationaryDistribution",
    "GarnetSpec",
    "Trajectory",
    "garnet_generate",
    "stationary_distribution",
    "exact_value",
    "bellman_apply",
    "t_lambda_apply",
    "sample_trajectory",
]


class NonConvergence(RuntimeError):
    """Power iteration failed to reach the residual tolerance (non-ergodic kernel)."""


class SingularSystem(RuntimeError):
    """The Bellman system (I - gamma P) could not be solved."""


def _frozen_array(obj, name, value, dtype=np.float64):
    arr = np.ascontiguousarray(value, dtype=dtype)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class MarkovRewardProcess:
    """A finite Markov chain with state rewards and a discount factor.

    Parameters
    ----------
    P : (S, S) array
        Row-stochastic transition kernel.
    r : (S,) array
        State rewards, each in [0, R_max].
    gamma : float
        Discount factor in (0, 1).
    R_max : float
        Declared reward bound; generated instances use 1.0.
    """

    P: np.ndarray
    r: np.ndarray
    gamma: float
    R_max: float = 1.0

    def __post_init__(self):
        P = _frozen_array(self, "P", self.P)
        r = _frozen_array(self, "r", self.r)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got shape {P.shape}")
        if r.shape != (P.shape[0],):
            raise ValueError(f"r has shape {r.shape}, expected ({P.shape[0]},)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if np.any(P < 0.0):
            raise ValueError("P has negative entries")
        row_err = np.abs(P.sum(axis=1) - 1.0).max()
        if row_err > 1e-12:
            raise ValueError(f"rows of P sum to 1 +/- {row_err:.3e} (tolerance 1e-12)")
        if np.any(r < 0.0) or np.any(r > self.R_max):
            raise ValueError(f"rewards must lie in [0, {self.R_max}]")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def v_max(self) -> float:
        """Uniform bound R_max / (1 - gamma) on the value function."""
        return self.R_max / (1.0 - self.gamma)


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary distribution mu of a chain, with the residual it was solved to."""

    mu: np.ndarray
    residual: float

    def __post_init__(self):
        mu = _frozen_array(self, "mu", self.mu)
        if np.any(mu < 0.0):
            raise ValueError("mu has negative entries")
        if abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu does not sum to 1 within 1e-12")

    @property
    def d_mu(self) -> np.ndarray:
        """The diagonal matrix with mu on the diagonal."""
        return np.diag(self.mu)


@dataclass(frozen=True)
class GarnetSpec:
    """Parameters of the random Garnet chain generator.

    ``branching`` successors per state receive sorted-uniform-cut probabilities;
    the kernel is then blended with the uniform kernel at weight
    ``ergodicity_blend`` so that ergodicity holds by construction.
    """

    n_states: int
    branching: int = 5
    seed: int = 0
    ergodicity_blend: float = 0.01

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be positive")
        if not 1 <= self.branching <= self.n_states:
            raise ValueError("branching must lie in [1, n_states]")
        if not 0.0 <= self.ergodicity_blend < 0.1:
            raise ValueError("ergodicity_blend must lie in [0, 0.1)")


@dataclass(frozen=True)
class Trajectory:
    """A seeded state/reward sequence X_1..X_n sampled from a chain."""

    states: np.ndarray
    rewards: np.ndarray
    seed: int

    def __post_init__(self):
        _frozen_array(self, "states", self.states, dtype=np.int64)
        _frozen_array(self, "rewards", self.rewards)

    def __len__(self) -> int:
        return self.states.shape[0]

    def prefix(self, n: int) -> "Trajectory":
        """The first n steps, sharing storage with this trajectory."""
        if not 2 <= n <= len(self):
            raise ValueError(f"prefix length {n} outside [2, {len(self)}]")
        return Trajectory(self.states[:n], self.rewards[:n], self.seed)


def garnet_generate(spec: GarnetSpec, gamma: float) -> MarkovRewardProcess:
    """Generate a random Garnet chain with uniform rewards on [0, 1].

    Each row of the kernel puts mass on ``spec.branching`` distinct successor
    states; the masses are the gaps of sorted uniform cut points of [0, 1].
    The kernel is blended with the uniform kernel at weight
    ``spec.ergodicity_blend``. Deterministic in ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n_states, spec.branching
    P = np.zeros((n, n))
    for i in range(n):
        successors = rng.choice(n, size=k, replace=False)
        cuts = np.sort(rng.uniform(0.0, 1.0, size=k - 1))
        P[i, successors] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    eta = spec.ergodicity_blend
    if eta > 0.0:
        P = (1.0 - eta) * P + eta / n
    r = rng.uniform(0.0, 1.0, size=n)
    return MarkovRewardProcess(P=P, r=r, gamma=gamma, R_max=1.0)


def stationary_distribution(
    mrp: MarkovRewardProcess,
    tol: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> StationaryDistribution:
    """Stationary distribution by power iteration on P^T from the uniform vector.

    Iterates mu <- normalize(P^T mu) until the fixed-point residual
    ``max|mu^T P - mu^T|`` drops below ``tol``.

    Raises
    ------
    NonConvergence
        If the residual is still above ``tol`` after ``max_iterations``
        sweeps; the kernel is then treated as non-ergodic and the caller
        should regenerate the instance.
    """
    P = mrp.P
    n = mrp.n_states
    mu = np.full(n, 1.0 / n)
    residual = np.abs(P.T @ mu - mu).max()
    if residual <= tol:
        return StationaryDistribution(mu=mu, residual=float(residual))
    for _ in range(max_iterations):
        mu = P.T @ mu
        mu /= mu.sum()
        residual = np.abs(P.T @ mu - mu).max()
        if residual <= tol:
            return StationaryDistribution(mu=mu, residual=float(residual))
    raise NonConvergence(
        f"power iteration stalled at residual {residual:.3e} after "
        f"{max_iterations} sweeps (tolerance {tol:.1e})"
    )


def exact_value(mrp: MarkovRewardProcess) -> np.ndarray:
    """The value function v = (I - gamma P)^{-1} r by a dense solve.

    One extended-precision refinement pass keeps the Bellman residual
    well below 1e-10 even at gamma close to 1.
    """
    n = mrp.n_states
    system = np.eye(n) - mrp.gamma * mrp.P
    try:
        return solve_refined(system, mrp.r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"(I - gamma P) is singular: {exc}") from exc


def bellman_apply(mrp: MarkovRewardProcess, v: np.ndarray) -> np.ndarray:
    """One application of the Bellman operator: r + gamma P v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mrp.n_states,):
        raise ValueError(f"v has shape {v.shape}, expected ({mrp.n_states},)")
    return mrp.r + mrp.gamma * (mrp.P @ v)


def t_lambda_apply(mrp: MarkovRewardProcess, lam: float, v: np.ndarray) -> np.ndarray:
    """The lambda-weighted geometric mixture of Bellman operator powers.

    Uses the resolvent closed form

        T_lam v = (I - lam*gamma*P)^{-1} r + (1-lam)*gamma*P (I - lam*gamma*P)^{-1} v,

    which reduces to the plain Bellman operator at lam = 0 and to the exact
    value function (independent of v) at lam = 1.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mrp.n_states,):
        raise ValueError(f"v has shape {v.shape}, expected ({mrp.n_states},)")
    n = mrp.n_states
    resolvent = np.eye(n) - (lam * mrp.gamma) * mrp.P
    fixed_part = solve_refined(resolvent, mrp.r)
    if lam == 1.0:
        return fixed_part
    mixed = solve_refined(resolvent, v)
    return fixed_part + (1.0 - lam) * mrp.gamma * (mrp.P @ mixed)


def sample_trajectory(
    mrp: MarkovRewardProcess,
    mu: StationaryDistribution,
    n: int,
    seed: int,
) -> Trajectory:
    """Sample X_1..X_n with X_1 ~ mu by inverse-CDF draws over row cumsums.

    Bitwise-reproducible for a fixed seed.
    """
    if n < 2:
        raise ValueError(f"trajectory length must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    uniforms = rng.random(n).tolist()
    last = mrp.n_states - 1
    # plain-list bisection beats numpy scalar dispatch in this hot loop
    cum_rows = np.cumsum(mrp.P, axis=1).tolist()
    states = [0] * n
    state = min(bisect_right(np.cumsum(mu.mu).tolist(), uniforms[0]), last)
    states[0] = state
    for t in range(1, n):
        state = bisect_right(cum_rows[state], uniforms[t])
        if state > last:  # cumsum of a row can fall a few ulps short of 1
            state = last
        states[t] = state
    states = np.asarray(states, dtype=np.int64)
    return Trajectory(states=states, rewards=mrp.r[states], seed=seed)
