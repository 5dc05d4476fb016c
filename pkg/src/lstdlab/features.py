"""Linear value-function architectures and their mu-weighted geometry.

A feature map is a dense S x d matrix with linearly independent columns and
a known sup bound L on its entries. Together with a stationary distribution
mu it induces the Gram matrix Phi^T D_mu Phi, whose smallest eigenvalue nu
conditions every finite-sample bound, and the mu-orthogonal projection onto
the feature span.
"""

from dataclasses import dataclass, field

import numpy as np

from .chain import StationaryDistribution
from .linalg import solve_refined

__all__ = [
    "RankDeficient",
    "SingularGram",
    "FeatureMap",
    "MuGeometry",
    "random_features",
    "mu_geometry",
    "mu_norm",
]

# Dense S x S projections above this state count would dominate memory;
# the projection is then applied operationally instead.
_DENSE_PROJECTION_MAX_STATES = 2000


class RankDeficient(RuntimeError):
    """Repeated feature draws failed to produce linearly independent columns."""


class SingularGram(RuntimeError):
    """The Gram matrix is numerically singular under the given mu."""


@dataclass(frozen=True)
class FeatureMap:
    """A dense feature matrix with per-entry sup bound L.

    Columns must be linearly independent; construction verifies both the
    bound and the rank.
    """

    Phi: np.ndarray
    L: float

    def __post_init__(self):
        Phi = np.ascontiguousarray(self.Phi, dtype=np.float64)
        Phi.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)
        if Phi.ndim != 2:
            raise ValueError(f"Phi must be 2-d, got shape {Phi.shape}")
        if np.abs(Phi).max() > self.L:
            raise ValueError(f"|Phi| exceeds the declared bound L={self.L}")
        if np.linalg.matrix_rank(Phi) != Phi.shape[1]:
            raise ValueError("feature columns are linearly dependent")

    @property
    def n_states(self) -> int:
        return self.Phi.shape[0]

    @property
    def d(self) -> int:
        return self.Phi.shape[1]

    def vector(self, x: int) -> np.ndarray:
        """The feature vector of state x."""
        return self.Phi[x]


@dataclass(frozen=True)
class MuGeometry:
    """Gram matrix, smallest eigenvalue and mu-orthogonal projection.

    ``projection`` is the dense S x S matrix when S is small enough to
    materialize; ``project`` works either way.
    """

    gram: np.ndarray
    nu: float
    phi: FeatureMap
    mu: np.ndarray
    projection: np.ndarray | None = field(default=None, repr=False)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Apply the mu-orthogonal projection onto the feature span to v."""
        if self.projection is not None:
            return self.projection @ v
        weighted = self.phi.Phi * self.mu[:, None]
        return self.phi.Phi @ solve_refined(self.gram, weighted.T @ v)


def random_features(n_states: int, d: int, L: float, seed: int) -> FeatureMap:
    """Draw an S x d feature matrix with i.i.d. uniform entries on [0, L].

    Redraws from a fresh sub-seed until the columns are linearly
    independent; with uniform entries a redraw is practically unreachable.

    Raises
    ------
    RankDeficient
        If 16 draws in a row are rank deficient.
    """
    if d > n_states:
        raise ValueError(f"d={d} exceeds the number of states {n_states}")
    for child in np.random.SeedSequence(seed).spawn(16):
        Phi = np.random.default_rng(child).uniform(0.0, L, size=(n_states, d))
        if np.linalg.matrix_rank(Phi) == d:
            return FeatureMap(Phi=Phi, L=L)
    raise RankDeficient(f"16 draws of shape ({n_states}, {d}) were all rank deficient")


def mu_geometry(phi: FeatureMap, mu: StationaryDistribution) -> MuGeometry:
    """Gram matrix Phi^T D_mu Phi, its smallest eigenvalue, and the projection.

    Raises
    ------
    SingularGram
        If the smallest Gram eigenvalue is at or below 1e-14, which signals
        effective rank deficiency under this mu.
    """
    weights = mu.mu
    if weights.shape != (phi.n_states,):
        raise ValueError("mu and Phi disagree on the number of states")
    weighted = phi.Phi * weights[:, None]
    gram = weighted.T @ phi.Phi
    gram = 0.5 * (gram + gram.T)
    nu = float(np.linalg.eigvalsh(gram)[0])
    if nu <= 1e-14:
        raise SingularGram(f"smallest Gram eigenvalue {nu:.3e} <= 1e-14")
    projection = None
    if phi.n_states <= _DENSE_PROJECTION_MAX_STATES:
        projection = phi.Phi @ solve_refined(gram, weighted.T)
    return MuGeometry(gram=gram, nu=nu, phi=phi, mu=weights, projection=projection)


def mu_norm(mu, f: np.ndarray) -> float:
    """The mu-weighted quadratic norm sqrt(sum_x f(x)^2 mu(x))."""
    weights = mu.mu if isinstance(mu, StationaryDistribution) else np.asarray(mu)
    f = np.asarray(f)
    if f.shape != weights.shape:
        raise ValueError(f"shape mismatch: f {f.shape} vs mu {weights.shape}")
    return float(np.sqrt(np.sum(f * f * weights)))
