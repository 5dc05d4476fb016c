"""Least-squares temporal-difference estimation with eligibility traces.

Estimates the linear fixed point of the projected multi-step Bellman
equation from a single trajectory. The trace recursion

    z_1 = phi(X_1),   z_{i+1} = lam*gamma * z_i + phi(X_{i+1})

feeds the running sums

    A_hat = 1/(n-1) * sum_i z_i (phi(X_i) - gamma phi(X_{i+1}))^T
    b_hat = 1/(n-1) * sum_i z_i r(X_i),        i = 1..n-1,

and the estimate is theta_hat = A_hat^{-1} b_hat (pseudo-inverse when A_hat
is numerically singular). The module also provides the exact model-based
quantities A, b, theta, and the fixed-point value vector, which serve as
oracles for the estimator and for every bound calculation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .chain import MarkovRewardProcess, Trajectory
from .features import FeatureMap, MuGeometry, mu_norm
from .linalg import solve_refined

__all__ = [
    "SingularA",
    "EligibilityTrace",
    "LstdEstimate",
    "ExactSolution",
    "PerturbationCheck",
    "trace_matrix",
    "truncated_trace_matrix",
    "estimate_at",
    "lstd_estimate",
    "lstd_estimate_checkpoints",
    "lstd_estimate_truncated",
    "lstd_error",
    "exact_A_b",
    "perturbation_check",
]

# Smallest singular value of A_hat below which the solve falls back to the
# pseudo-inverse; early-n accumulators are often this close to singular.
PSEUDO_INVERSE_THRESHOLD = 1e-12


class SingularA(RuntimeError):
    """The exact model-based matrix A was numerically singular."""


class EligibilityTrace:
    """Incremental trace recursion z <- lam*gamma * z + phi(x).

    The sup norm of the trace never exceeds L / (1 - lam*gamma).
    """

    def __init__(self, d: int, lam_gamma: float):
        if not 0.0 <= lam_gamma < 1.0:
            raise ValueError(f"lambda*gamma must lie in [0, 1), got {lam_gamma}")
        self.z = np.zeros(d)
        self.lambda_gamma = lam_gamma

    def step(self, feature_row: np.ndarray) -> np.ndarray:
        self.z = self.lambda_gamma * self.z + feature_row
        return self.z

    def sup_bound(self, feature_bound: float) -> float:
        """Envelope L / (1 - lam*gamma) on the sup norm of the trace."""
        return feature_bound / (1.0 - self.lambda_gamma)


@dataclass(frozen=True)
class LstdEstimate:
    """Trajectory estimate of (A, b, theta) with conditioning diagnostics.

    ``A_hat`` and ``b_hat`` carry the 1/(n-1) normalization. When
    ``used_pseudo_inverse`` is False the solve residual satisfies
    |A_hat theta_hat - b_hat| <= 1e-9 (1 + |b_hat|).
    """

    A_hat: np.ndarray
    b_hat: np.ndarray
    theta_hat: np.ndarray
    n: int
    min_singular_value: float
    used_pseudo_inverse: bool

    def to_document(self) -> dict:
        return {
            "A_hat": self.A_hat.tolist(),
            "b_hat": self.b_hat.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "n": self.n,
            "min_singular_value": self.min_singular_value,
            "used_pseudo_inverse": self.used_pseudo_inverse,
        }


@dataclass(frozen=True)
class ExactSolution:
    """The model-based A, b, theta = A^{-1} b, and the fixed point Phi theta."""

    A: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    v_fixed: np.ndarray


def trace_matrix(feature_rows: np.ndarray, lam_gamma: float) -> np.ndarray:
    """Stack all traces z_1..z_N for the given feature rows.

    Row i is the geometrically decayed sum of rows 0..i with decay
    ``lam_gamma``; computed by a causal linear filter, so the result over a
    prefix equals the prefix of the result.
    """
    if not 0.0 <= lam_gamma < 1.0:
        raise ValueError(f"lambda*gamma must lie in [0, 1), got {lam_gamma}")
    return lfilter([1.0], [1.0, -lam_gamma], feature_rows, axis=0)


def truncated_trace_matrix(feature_rows: np.ndarray, lam_gamma: float, m: int) -> np.ndarray:
    """Traces restricted to the last m feature rows, via a rolling window.

    Row i sums rows max(i-m+1, 1)..i (1-based) with decay ``lam_gamma``.
    The window update subtracts the row that falls out of scope, so each
    step costs O(d) regardless of m.
    """
    if m < 1:
        raise ValueError(f"truncation depth must be >= 1, got {m}")
    n, _ = feature_rows.shape
    out = np.empty_like(feature_rows, dtype=np.float64)
    z = feature_rows[0].astype(np.float64)
    out[0] = z
    oldest_weight = lam_gamma ** (m - 1)
    for i in range(1, n):
        if i >= m:
            z = lam_gamma * (z - oldest_weight * feature_rows[i - m]) + feature_rows[i]
        else:
            z = lam_gamma * z + feature_rows[i]
        out[i] = z
    return out


def _solve_theta(A_hat: np.ndarray, b_hat: np.ndarray):
    singular_values = np.linalg.svd(A_hat, compute_uv=False)
    min_sv = float(singular_values[-1])
    if min_sv < PSEUDO_INVERSE_THRESHOLD:
        return np.linalg.pinv(A_hat) @ b_hat, min_sv, True
    theta = solve_refined(A_hat, b_hat)
    residual = np.linalg.norm(A_hat @ theta - b_hat)
    if residual > 1e-9 * (1.0 + np.linalg.norm(b_hat)):
        # conditioning too poor for a trustworthy direct solve
        return np.linalg.pinv(A_hat) @ b_hat, min_sv, True
    return theta, min_sv, False


def estimate_at(
    traces: np.ndarray,
    diffs: np.ndarray,
    rewards: np.ndarray,
    n: int,
) -> LstdEstimate:
    """Assemble the estimate for sample count n from precomputed summands.

    ``traces``, ``diffs`` and ``rewards`` are the per-step trace rows,
    discounted feature differences and rewards for steps 1..N-1 of a
    trajectory of length N >= n. Slicing their first n-1 rows reproduces a
    fresh estimate over the length-n prefix exactly, which is what makes
    checkpointed learning curves cheap.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 samples, got {n}")
    k = n - 1
    if k > traces.shape[0]:
        raise ValueError(f"n={n} exceeds the {traces.shape[0] + 1} available steps")
    A_hat = traces[:k].T @ diffs[:k] / k
    b_hat = traces[:k].T @ rewards[:k] / k
    theta_hat, min_sv, used_pinv = _solve_theta(A_hat, b_hat)
    return LstdEstimate(
        A_hat=A_hat,
        b_hat=b_hat,
        theta_hat=theta_hat,
        n=n,
        min_singular_value=min_sv,
        used_pseudo_inverse=used_pinv,
    )


def _trajectory_summands(traj: Trajectory, phi: FeatureMap, lam: float, gamma: float):
    if len(traj) < 2:
        raise ValueError("trajectory must have at least 2 states")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    feats = phi.Phi[traj.states]
    traces = trace_matrix(feats[:-1], lam * gamma)
    diffs = feats[:-1] - gamma * feats[1:]
    return traces, diffs, traj.rewards[:-1]


def lstd_estimate(traj: Trajectory, phi: FeatureMap, lam: float, gamma: float) -> LstdEstimate:
    """Single-pass LSTD(lambda) estimate from one trajectory."""
    traces, diffs, rewards = _trajectory_summands(traj, phi, lam, gamma)
    return estimate_at(traces, diffs, rewards, len(traj))


def lstd_estimate_checkpoints(
    traj: Trajectory,
    phi: FeatureMap,
    lam: float,
    gamma: float,
    ns,
) -> list[LstdEstimate]:
    """Estimates at each sample count in ``ns``, sharing one trace pass."""
    traces, diffs, rewards = _trajectory_summands(traj, phi, lam, gamma)
    return [estimate_at(traces, diffs, rewards, n) for n in ns]


def lstd_estimate_truncated(
    traj: Trajectory,
    phi: FeatureMap,
    lam: float,
    gamma: float,
    m: int,
) -> LstdEstimate:
    """LSTD(lambda) with traces truncated to the last m steps.

    For m >= n the output coincides with :func:`lstd_estimate`. Exists as a
    harness for the truncation argument; the production estimator keeps
    full traces.
    """
    if len(traj) < 2:
        raise ValueError("trajectory must have at least 2 states")
    feats = phi.Phi[traj.states]
    traces = truncated_trace_matrix(feats[:-1], lam * gamma, m)
    diffs = feats[:-1] - gamma * feats[1:]
    return estimate_at(traces, diffs, traj.rewards[:-1], len(traj))


def exact_A_b(
    mrp: MarkovRewardProcess,
    phi: FeatureMap,
    geom: MuGeometry,
    lam: float,
) -> ExactSolution:
    """The exact stationary quantities the estimator converges to.

    Computes, by dense resolvent solves,

        A = Phi^T D_mu (I - gamma P)(I - lam*gamma*P)^{-1} Phi
        b = Phi^T D_mu (I - lam*gamma*P)^{-1} r,

    then theta = A^{-1} b and the fixed-point value vector Phi theta.

    Raises
    ------
    SingularA
        If A is numerically singular; with independent features this
        signals a failed instance, not a user error.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    n = mrp.n_states
    resolvent = np.eye(n) - (lam * mrp.gamma) * mrp.P
    weighted = (phi.Phi * geom.mu[:, None]).T
    smoothed_features = solve_refined(resolvent, phi.Phi)
    A = weighted @ (smoothed_features - mrp.gamma * (mrp.P @ smoothed_features))
    b = weighted @ solve_refined(resolvent, mrp.r)
    try:
        theta = solve_refined(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularA(f"exact A is singular: {exc}") from exc
    return ExactSolution(A=A, b=b, theta=theta, v_fixed=phi.Phi @ theta)


def lstd_error(est: LstdEstimate, exact: ExactSolution, phi: FeatureMap, mu) -> float:
    """Distance |Phi theta_hat - Phi theta| in the mu-weighted norm."""
    return mu_norm(mu, phi.Phi @ (est.theta_hat - exact.theta))


@dataclass(frozen=True)
class PerturbationCheck:
    """Numerical audit of the estimation-error decomposition.

    With eps_A = A_hat - A and eps_b = b_hat - b, whenever
    |eps_A|_2 < C = (1-gamma) nu / (1-lam*gamma), the perturbed matrix is
    invertible and

        |Phi theta_hat - Phi theta|_mu
            <= (1-lam*gamma)/((1-gamma) sqrt(nu))
               * |(I + eps_A A^{-1})^{-1}|_2 * |eps_A theta - eps_b|_2.

    ``applicable`` records whether the smallness condition held; ``lhs``
    and ``rhs`` are the two sides when it did.
    """

    applicable: bool
    eps_a_norm: float
    c_value: float
    lhs: float
    rhs: float
    min_singular_value: float


def perturbation_check(
    est: LstdEstimate,
    exact: ExactSolution,
    phi: FeatureMap,
    mu,
    geom: MuGeometry,
    lam: float,
    gamma: float,
) -> PerturbationCheck:
    """Evaluate both sides of the estimation-error decomposition for one run."""
    eps_A = est.A_hat - exact.A
    eps_b = est.b_hat - exact.b
    c_value = (1.0 - gamma) * geom.nu / (1.0 - lam * gamma)
    eps_a_norm = float(np.linalg.norm(eps_A, 2))
    if eps_a_norm >= c_value:
        return PerturbationCheck(
            applicable=False,
            eps_a_norm=eps_a_norm,
            c_value=c_value,
            lhs=float("nan"),
            rhs=float("nan"),
            min_singular_value=est.min_singular_value,
        )
    d = exact.A.shape[0]
    inflation = np.linalg.inv(np.eye(d) + eps_A @ np.linalg.inv(exact.A))
    rhs = (
        (1.0 - lam * gamma)
        / ((1.0 - gamma) * np.sqrt(geom.nu))
        * float(np.linalg.norm(inflation, 2))
        * float(np.linalg.norm(eps_A @ exact.theta - eps_b))
    )
    lhs = lstd_error(est, exact, phi, mu)
    return PerturbationCheck(
        applicable=True,
        eps_a_norm=eps_a_norm,
        c_value=c_value,
        lhs=lhs,
        rhs=rhs,
        min_singular_value=est.min_singular_value,
    )
