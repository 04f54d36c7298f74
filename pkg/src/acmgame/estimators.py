"""Linear-in-weights approximators: critics, actors and mass densities.

Each agent owns five of them: its own critic, actor and mass, plus a critic
and a mass for the opposing group. Weights may carry leading batch axes
(one row per agent); every evaluation broadcasts over them.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet, FeatureContext
from .core.errors import DegenerateDensity, DimensionMismatch, OutOfGridWarning, RoleMismatch
from .core.types import GroupId, Grid

DEGENERATE_MASS = 1e-12


class Role(enum.Enum):
    CRITIC = "critic"
    ACTOR = "actor"
    MASS = "mass"


@dataclass
class LinearApproximator:
    """``W^T phi`` over a fixed basis.

    Critic and mass weights have shape (..., dim); actor weights have shape
    (..., dim, m) for an m-dimensional control.
    """

    weights: np.ndarray
    basis: BasisSet
    role: Role
    target_group: GroupId

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        axis = -2 if self.role is Role.ACTOR else -1
        if self.weights.ndim < (2 if self.role is Role.ACTOR else 1) or self.weights.shape[axis] != self.basis.dim:
            raise DimensionMismatch(
                f"{self.role.value} weights of shape {self.weights.shape} do not match basis dim {self.basis.dim}")

    @property
    def norm(self) -> np.ndarray:
        w = self.weights
        if self.role is Role.ACTOR:
            return np.sqrt(np.sum(w * w, axis=(-2, -1)))
        return np.linalg.norm(w, axis=-1)


def _require(a: LinearApproximator, role: Role):
    if a.role is not role:
        raise RoleMismatch(f"expected a {role.value} approximator, got {a.role.value}")


def value_eval(a: LinearApproximator, ctx: FeatureContext) -> np.ndarray:
    _require(a, Role.CRITIC)
    return np.einsum("...d,...d->...", a.basis.eval(ctx), a.weights)


def value_grad_x(a: LinearApproximator, ctx: FeatureContext) -> np.ndarray:
    """Spatial gradient of the critic, shape (..., 2)."""
    _require(a, Role.CRITIC)
    return np.einsum("...dk,...d->...k", a.basis.grad_x(ctx), a.weights)


def actor_eval(a: LinearApproximator, ctx: FeatureContext, explore_noise=None) -> np.ndarray:
    """Actor output plus exploration noise, shape (..., m)."""
    _require(a, Role.ACTOR)
    u = np.einsum("...d,...dm->...m", a.basis.eval(ctx), a.weights)
    if explore_noise is not None:
        noise = np.asarray(explore_noise, dtype=float)
        if noise.ndim == 0:
            noise = noise[None]
        if noise.shape[-1] != u.shape[-1]:
            raise DimensionMismatch(f"noise has length {noise.shape[-1]}, control has {u.shape[-1]}")
        u = u + noise
    return u


# --------------------------------------------------------------------- mass

class MassQuadrature:
    """Precomputed features on a grid for fast batched normalization."""

    def __init__(self, basis: BasisSet, grid: Grid):
        self.basis = basis
        self.grid = grid
        self.nodes = grid.nodes
        self.weights = grid.weights
        self.features = basis.eval(FeatureContext(self.nodes))  # (n_nodes, dim)
        self._features_t = np.ascontiguousarray(self.features.T)
        self._moment = self.weights[:, None] * self.nodes

    def clipped(self, W: np.ndarray) -> np.ndarray:
        """``max(W^T phi, 0)`` on every node, shape (..., n_nodes)."""
        return np.maximum(W @ self._features_t, 0.0)

    def normalize(self, W: np.ndarray) -> dict[str, np.ndarray]:
        """Normalizer, expectation and validity diagnostics for batched weights."""
        dens = self.clipped(W)
        z = dens @ self.weights
        bad = ~(z > DEGENERATE_MASS)
        if np.any(bad):
            rows = np.argwhere(np.atleast_1d(bad)).ravel()
            raise DegenerateDensity(f"mass integral {np.min(z):.3g} <= {DEGENERATE_MASS:g} (rows {list(rows[:10])})")
        rho = dens / z[..., None]
        return {
            "normalizer": z,
            "expectation": rho @ self._moment,
            "integral": rho @ self.weights,
            "min_density": rho.min(axis=-1),
        }


@dataclass
class MassField:
    """A mass approximator plus the grid on which it is normalized."""

    approximator: LinearApproximator
    grid: Grid
    cached_normalizer: float = field(default=np.nan)

    def __post_init__(self):
        _require(self.approximator, Role.MASS)
        self._quad = MassQuadrature(self.approximator.basis, self.grid)
        if not np.isfinite(self.cached_normalizer):
            self.renormalize()

    def renormalize(self) -> float:
        """Recompute the normalizer after the weights changed."""
        stats = self._quad.normalize(self.approximator.weights)
        self.cached_normalizer = float(stats["normalizer"])
        return self.cached_normalizer

    def density_on_grid(self) -> np.ndarray:
        return self._quad.clipped(self.approximator.weights) / self.cached_normalizer

    def integral(self) -> float:
        return float(self.density_on_grid() @ self.grid.weights)


def mass_density(f: MassField, x) -> np.ndarray:
    """Normalized, non-negative density at ``x`` (clamped into the grid)."""
    x = np.asarray(x, dtype=float)
    xc, moved = f.grid.clamp(x)
    if np.any(moved):
        warnings.warn(f"{int(np.sum(moved))} point(s) clamped into the mass grid", OutOfGridWarning, stacklevel=2)
    if not f.cached_normalizer > DEGENERATE_MASS:
        raise DegenerateDensity("mass field has no positive mass")
    raw = np.einsum("...d,d->...", f.approximator.basis.eval(FeatureContext(xc)), f.approximator.weights)
    return np.maximum(raw, 0.0) / f.cached_normalizer


def mass_expectation(f: MassField) -> np.ndarray:
    """Trapezoidal estimate of the mean position under the normalized density."""
    return f._quad.normalize(f.approximator.weights)["expectation"]
