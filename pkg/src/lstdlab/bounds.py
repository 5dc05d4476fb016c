"""Finite-sample and asymptotic bound formulas for trace-based estimation.

Every quantity here is a closed-form function of the sample count n, the
confidence delta, the trace decay lambda*gamma, the feature geometry
(d, L, nu), the value scale (R_max, V_max), and exponential mixing
parameters (beta_bar, b, kappa). Nothing is estimated from data: these are
calculators for the high-probability guarantees of the estimator.

Conventions
-----------
* ``m_star(n) = ceil(log(n-1) / log(1/(lam*gamma)))`` is the trace depth
  at which the discarded geometric tail falls to O(1/n); at lam = 0 it is
  taken to be 1 (the trace then remembers exactly one step).
* The estimation bound's leading term is evaluated at confidence delta
  directly; the explicit remainder follows the per-sample-size split
  delta_n = delta / (4 n^2) that makes the guarantee uniform over n.
"""

import math
from dataclasses import dataclass, replace

__all__ = [
    "NotFound",
    "MixingParams",
    "BoundInputs",
    "BoundReport",
    "EpsilonTerms",
    "m_star",
    "capital_lambda",
    "capital_i",
    "gamma_cap",
    "capital_j",
    "epsilon_trace",
    "concentration_radius",
    "capital_j_gamma",
    "n_zero_expression",
    "n_zero",
    "estimation_bound",
    "epsilon_terms",
    "h_explicit",
    "approximation_bound",
    "global_bound",
]

_FOUR_E_SQUARED = 4.0 * math.exp(2.0)


class NotFound(RuntimeError):
    """No sample size up to 2**63 satisfies the invertibility condition."""


@dataclass(frozen=True)
class MixingParams:
    """Exponential mixing envelope: the i-th coefficient is <= beta_bar * exp(-b * i**kappa)."""

    beta_bar: float = 1.0
    b: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.beta_bar <= 0.0 or self.b <= 0.0 or self.kappa <= 0.0:
            raise ValueError("mixing parameters must be strictly positive")

    def envelope(self, i: int) -> float:
        """Upper bound beta_bar * exp(-b * i**kappa) on the i-th coefficient."""
        return self.beta_bar * math.exp(-self.b * i**self.kappa)


@dataclass(frozen=True)
class BoundInputs:
    """Everything the bound formulas consume, gathered in one place.

    ``v_max`` defaults to r_max / (1 - gamma) when not supplied.
    """

    n: int
    delta: float
    lam: float
    gamma: float
    d: int
    L: float
    nu: float
    r_max: float = 1.0
    v_max: float | None = None
    mixing: MixingParams = MixingParams()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.d < 1 or self.L <= 0.0 or self.nu <= 0.0 or self.r_max < 0.0:
            raise ValueError("geometry constants out of range")
        if self.v_max is None:
            object.__setattr__(self, "v_max", self.r_max / (1.0 - self.gamma))

    @property
    def lam_gamma(self) -> float:
        return self.lam * self.gamma


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of every bound at a given (n, delta, lambda).

    Field names match the structured-text output of the ``bounds`` CLI
    subcommand. ``n0 = -1`` means the sample-size search hit its cap.
    """

    lambda_cap: float
    I: float
    m_star: int
    estimation_bound: float
    h_explicit: float
    approx_plain: float
    approx_improved: float
    global_bound: float
    n0: int
    n0_ok: bool


@dataclass(frozen=True)
class EpsilonTerms:
    """The explicit perturbation radii of the error decomposition.

    ``epsilon1`` bounds |A_hat - A|_2 and ``epsilon2`` bounds
    |eps_A theta - eps_b|_2, both at confidence delta/(4 n^2); ``epsilon0``
    and ``epsilon0_prime`` are their deterministic transient-bias parts;
    ``C`` is the invertibility margin; ``delta_bound`` dominates the
    per-step temporal-difference residual of the fixed point.
    """

    epsilon0: float
    epsilon1: float
    epsilon2: float
    C: float
    delta_bound: float
    epsilon0_prime: float


def m_star(n: int, lam: float, gamma: float) -> int:
    """Trace truncation depth ceil(log(n-1) / log(1/(lam*gamma))); 1 at lam = 0."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    lam_gamma = lam * gamma
    if lam_gamma == 0.0:
        return 1
    return math.ceil(math.log(n - 1) / math.log(1.0 / lam_gamma))


def capital_lambda(n: int, delta: float, mixing: MixingParams) -> float:
    """log(8 n^2 / delta) + log(max(4 e^2, n beta_bar)).

    Accepts any delta > 0 so that the rescaling identities relating the
    one-shot and union-bound variants can be evaluated verbatim.
    """
    return math.log(8.0 * n * n / delta) + math.log(max(_FOUR_E_SQUARED, n * mixing.beta_bar))


def capital_i(n: int, delta: float, mixing: MixingParams) -> float:
    """32 * Lambda(n, delta) * max(Lambda(n, delta) / b, 1)^(1/kappa)."""
    lam_cap = capital_lambda(n, delta, mixing)
    return 32.0 * lam_cap * max(lam_cap / mixing.b, 1.0) ** (1.0 / mixing.kappa)


def gamma_cap(n: int, delta: float, mixing: MixingParams) -> float:
    """log(2 / delta) + log(max(4 e^2, n beta_bar)); equals Lambda(n, 4 n^2 delta)."""
    return math.log(2.0 / delta) + math.log(max(_FOUR_E_SQUARED, n * mixing.beta_bar))


def capital_j(n: int, delta: float, mixing: MixingParams) -> float:
    """32 * Gamma(n, delta) * max(Gamma(n, delta) / b, 1)^(1/kappa); equals I(n, 4 n^2 delta)."""
    g = gamma_cap(n, delta, mixing)
    return 32.0 * g * max(g / mixing.b, 1.0) ** (1.0 / mixing.kappa)


def epsilon_trace(
    n: int, lam: float, gamma: float, d: int, k: int, L: float, L_prime: float
) -> float:
    """Truncation cost 2 m_star sqrt(d k) L L' / ((n-1)(1 - lam*gamma))."""
    lam_gamma = lam * gamma
    return (
        2.0
        * m_star(n, lam, gamma)
        * math.sqrt(d * k)
        * L
        * L_prime
        / ((n - 1) * (1.0 - lam_gamma))
    )


def concentration_radius(
    n: int,
    delta: float,
    lam: float,
    gamma: float,
    d: int,
    k: int,
    L: float,
    L_prime: float,
    mixing: MixingParams,
) -> float:
    """High-probability radius for a trace-weighted d x k running mean.

    Covers averages of z_i tau(X_i, X_{i+1})^T where the entries of tau are
    bounded by L_prime: with probability 1 - delta the spectral distance to
    the expectation is at most

        2 sqrt(d k) L L' / ((1-lam*gamma) sqrt(n-1))
            * sqrt((m_star + 1) J(n-1, delta))  +  epsilon_trace(n).

    The matrix case uses k = d with L' = 2L (discounted feature
    differences); the vector case uses k = 1 with L' the sup bound of the
    per-step residual.
    """
    lam_gamma = lam * gamma
    leading = (
        2.0
        * math.sqrt(d * k)
        * L
        * L_prime
        / ((1.0 - lam_gamma) * math.sqrt(n - 1))
        * math.sqrt((m_star(n, lam, gamma) + 1) * capital_j(n - 1, delta, mixing))
    )
    return leading + epsilon_trace(n, lam, gamma, d, k, L, L_prime)


def capital_j_gamma(
    n: int,
    delta: float,
    mixing: MixingParams,
    lam: float,
    gamma: float,
    d: int,
    k: int,
    L: float,
    L_prime: float,
) -> tuple[float, float, float]:
    """The triple (J(n, delta), Gamma(n, delta), epsilon_trace(n))."""
    return (
        capital_j(n, delta, mixing),
        gamma_cap(n, delta, mixing),
        epsilon_trace(n, lam, gamma, d, k, L, L_prime),
    )


def n_zero_expression(n: int, inputs: BoundInputs) -> float:
    """The quantity whose drop below 1 certifies invertibility of A_hat.

    Decreases to 0 as n grows (up to small ripples where the truncation
    depth ticks up); the smallest n where it stays below 1 is n0.
    """
    m = m_star(n, inputs.lam, inputs.gamma)
    prefactor = 2.0 * inputs.d * inputs.L**2 / ((1.0 - inputs.gamma) * inputs.nu)
    bracket = (
        2.0 / math.sqrt(n - 1) * math.sqrt((m + 1) * capital_i(n - 1, inputs.delta, inputs.mixing))
        + 1.0 / ((n - 1) * (1.0 - inputs.lam_gamma))
        + 2.0 * m / (n - 1)
    )
    return prefactor * bracket


def n_zero(delta: float, inputs: BoundInputs, n_max: int = 2**63) -> int:
    """Smallest sample count from which the invertibility condition holds.

    Doubles n until the expression drops below 1, bisects for the crossing,
    then nudges locally so that expression(n0) < 1 <= expression(n0 - 1).

    Raises
    ------
    NotFound
        If the expression is still >= 1 at ``n_max``; pathological inputs
        are reported this way rather than looping forever.
    """
    probe = replace(inputs, n=2, delta=delta)

    def expression(n: int) -> float:
        return n_zero_expression(n, probe)

    if expression(2) < 1.0:
        return 2
    low, high = 2, 4
    while expression(high) >= 1.0:
        low = high
        high *= 2
        if high > n_max:
            raise NotFound(f"no admissible sample size found up to {n_max}")
    while high - low > 1:
        mid = (low + high) // 2
        if expression(mid) < 1.0:
            high = mid
        else:
            low = mid
    # guard the bisection against local ripples of the ceiling term
    while high > 2 and expression(high - 1) < 1.0:
        high -= 1
    while expression(high) >= 1.0:
        high += 1
    return high


def estimation_bound(inputs: BoundInputs) -> float:
    """Leading high-probability bound on the estimation error.

        4 V_max d L^2 / (sqrt(n-1) (1-gamma) nu)
            * sqrt((1 + m_star(n)) I(n-1, delta)).
    """
    m = m_star(inputs.n, inputs.lam, inputs.gamma)
    return (
        4.0
        * inputs.v_max
        * inputs.d
        * inputs.L**2
        / (math.sqrt(inputs.n - 1) * (1.0 - inputs.gamma) * inputs.nu)
        * math.sqrt((1 + m) * capital_i(inputs.n - 1, inputs.delta, inputs.mixing))
    )


def epsilon_terms(inputs: BoundInputs) -> EpsilonTerms:
    """All explicit perturbation radii at confidence delta/(4 n^2).

    The matrix radius epsilon1 instantiates the concentration radius with
    k = d columns and per-entry bound L' = 2L; the vector radius epsilon2
    uses k = 1 with L' = delta_bound = 2 sqrt(d) L V_max / sqrt(nu). The
    unknown |theta|_2 inside the transient bias is replaced by its bound
    V_max / sqrt(nu).
    """
    n, lam, gamma = inputs.n, inputs.lam, inputs.gamma
    d, L = inputs.d, inputs.L
    lam_gamma = inputs.lam_gamma
    delta_n = inputs.delta / (4.0 * n * n)

    epsilon0 = 2.0 * d * L**2 / ((n - 1) * (1.0 - lam_gamma) ** 2)
    epsilon1 = (
        concentration_radius(n, delta_n, lam, gamma, d, d, L, 2.0 * L, inputs.mixing) + epsilon0
    )
    delta_bound = 2.0 * math.sqrt(d) * L * inputs.v_max / math.sqrt(inputs.nu)
    theta_bound = inputs.v_max / math.sqrt(inputs.nu)
    epsilon0_prime = epsilon0 * theta_bound + math.sqrt(d) * L * inputs.r_max / (
        (n - 1) * (1.0 - lam_gamma) ** 2
    )
    epsilon2 = (
        concentration_radius(n, delta_n, lam, gamma, d, 1, L, delta_bound, inputs.mixing)
        + epsilon0_prime
    )
    c_value = (1.0 - gamma) * inputs.nu / (1.0 - lam_gamma)
    return EpsilonTerms(
        epsilon0=epsilon0,
        epsilon1=epsilon1,
        epsilon2=epsilon2,
        C=c_value,
        delta_bound=delta_bound,
        epsilon0_prime=epsilon0_prime,
    )


def h_explicit(inputs: BoundInputs) -> float:
    """Explicit O(log n / n) remainder completing the estimation bound.

    Assembles the pieces the leading term drops: the truncation and
    transient-bias parts of the vector radius, plus the second-order
    product epsilon1 * epsilon2 / (C - epsilon1). The second-order part
    applies only once epsilon1 < C (the same condition that defines n0);
    below that it is omitted and the report's ``n0_ok`` flag marks the
    evaluation as not yet covered by the guarantee.
    """
    terms = epsilon_terms(inputs)
    prefactor = (1.0 - inputs.lam_gamma) / ((1.0 - inputs.gamma) * math.sqrt(inputs.nu))
    tail = (
        epsilon_trace(inputs.n, inputs.lam, inputs.gamma, inputs.d, 1, inputs.L, terms.delta_bound)
        + terms.epsilon0_prime
    )
    h = prefactor * tail
    if terms.epsilon1 < terms.C:
        h += prefactor * terms.epsilon1 * terms.epsilon2 / (terms.C - terms.epsilon1)
    return h


def approximation_bound(lam: float, gamma: float, proj_residual: float) -> tuple[float, float]:
    """Bounds on |v - v_fixed|_mu in terms of the projection residual |v - Pi v|_mu.

    Returns the plain coefficient (1 - lam*gamma)/(1 - gamma) and the
    Pythagorean refinement (1 - lam*gamma)/sqrt((1-gamma)(1+gamma-2 lam*gamma)),
    each multiplied by ``proj_residual``. Both coefficients equal 1 at
    lam = 1.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if proj_residual < 0.0:
        raise ValueError("projection residual must be non-negative")
    lam_gamma = lam * gamma
    refined_gap = (1.0 - gamma) * (1.0 + gamma - 2.0 * lam_gamma)
    if refined_gap <= 0.0:
        raise ValueError("refined coefficient undefined: 1 + gamma - 2 lam gamma <= 0")
    plain = (1.0 - lam_gamma) / (1.0 - gamma) * proj_residual
    improved = (1.0 - lam_gamma) / math.sqrt(refined_gap) * proj_residual
    return plain, improved


def global_bound(inputs: BoundInputs, proj_residual: float) -> BoundReport:
    """Assemble the full report: approximation + estimation + remainder."""
    plain, improved = approximation_bound(inputs.lam, inputs.gamma, proj_residual)
    est = estimation_bound(inputs)
    h = h_explicit(inputs)
    try:
        n0 = n_zero(inputs.delta, inputs)
    except NotFound:
        n0 = -1
    return BoundReport(
        lambda_cap=capital_lambda(inputs.n, inputs.delta, inputs.mixing),
        I=capital_i(inputs.n, inputs.delta, inputs.mixing),
        m_star=m_star(inputs.n, inputs.lam, inputs.gamma),
        estimation_bound=est,
        h_explicit=h,
        approx_plain=plain,
        approx_improved=improved,
        global_bound=plain + est + h,
        n0=n0,
        n0_ok=0 <= n0 <= inputs.n,
    )
