"""Feature maps for the critic, actor and mass approximators.

Two families are provided:

* ``polynomial_quadratic`` -- ten features
  ``[1, x1, x2, x1^2, x1 x2, x2^2, x1 - a1, x2 - a2, x1 - b1, x2 - b2]``
  where ``a`` is the expected position of the agent's own group and ``b``
  that of the opposing group.
* ``gaussian_rbf_grid`` -- isotropic Gaussians ``exp(-|x - c|^2 / (2 s^2))``
  on a square lattice of centers spanning the grid rectangle.

Features never depend on time, so every approximator's time variation lives
in its weights. All derivatives are taken with respect to ``x`` only, the
group expectations being held fixed. Every function broadcasts over leading
batch axes and preserves the floating dtype of its inputs (so the
finite-difference helpers can run in extended precision).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core.errors import ValidationError
from .core.types import Grid


class BasisKind(enum.Enum):
    POLYNOMIAL_QUADRATIC = "polynomial_quadratic"
    GAUSSIAN_RBF_GRID = "gaussian_rbf_grid"


@dataclass(frozen=True)
class FeatureContext:
    """Arguments of a feature map: the agent's position and the two group expectations."""

    x: np.ndarray
    mu_own: np.ndarray | None = None
    mu_other: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x)
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(float)
        zeros = np.zeros_like(x)
        mo = zeros if self.mu_own is None else np.asarray(self.mu_own, dtype=x.dtype)
        mt = zeros if self.mu_other is None else np.asarray(self.mu_other, dtype=x.dtype)
        for name, arr in (("x", x), ("mu_own", mo), ("mu_other", mt)):
            if arr.shape[-1:] != (2,):
                raise ValidationError(f"FeatureContext.{name} needs a trailing axis of length 2")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"FeatureContext.{name} is not finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mu_own", mo)
        object.__setattr__(self, "mu_other", mt)

    def with_x(self, x) -> "FeatureContext":
        return FeatureContext(x, self.mu_own, self.mu_other)


@dataclass(frozen=True, eq=False)
class BasisSet:
    kind: BasisKind
    centers: np.ndarray | None = None
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind is BasisKind.GAUSSIAN_RBF_GRID:
            c = np.asarray(self.centers, dtype=float)
            if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] == 0:
                raise ValidationError("RBF centers must have shape (n, 2) with n >= 1")
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ValidationError("RBF bandwidth must be > 0")
            object.__setattr__(self, "centers", c)

    @property
    def dim(self) -> int:
        if self.kind is BasisKind.POLYNOMIAL_QUADRATIC:
            return 10
        return self.centers.shape[0]

    # ------------------------------------------------------------ evaluation

    def eval(self, ctx: FeatureContext) -> np.ndarray:
        """Feature vector, shape (..., dim)."""
        x = ctx.x
        if self.kind is BasisKind.POLYNOMIAL_QUADRATIC:
            x1, x2 = x[..., 0], x[..., 1]
            mo, mt = ctx.mu_own, ctx.mu_other
            shape = np.broadcast_shapes(x.shape, mo.shape, mt.shape)[:-1]
            out = np.empty(shape + (10,), dtype=x.dtype)
            out[..., 0] = 1
            out[..., 1] = x1
            out[..., 2] = x2
            out[..., 3] = x1 * x1
            out[..., 4] = x1 * x2
            out[..., 5] = x2 * x2
            out[..., 6:8] = x - mo
            out[..., 8:10] = x - mt
            return out
        d = x[..., None, :] - self.centers
        return np.exp(-0.5 * np.sum(d * d, axis=-1) / self.bandwidth**2)

    def grad_x(self, ctx: FeatureContext) -> np.ndarray:
        """Jacobian of :meth:`eval` with respect to ``x``, shape (..., dim, 2)."""
        x = ctx.x
        if self.kind is BasisKind.POLYNOMIAL_QUADRATIC:
            shape = np.broadcast_shapes(x.shape, ctx.mu_own.shape, ctx.mu_other.shape)[:-1]
            x1, x2 = x[..., 0], x[..., 1]
            out = np.zeros(shape + (10, 2), dtype=x.dtype)
            out[..., 1, 0] = 1
            out[..., 2, 1] = 1
            out[..., 3, 0] = 2 * x1
            out[..., 4, 0] = x2
            out[..., 4, 1] = x1
            out[..., 5, 1] = 2 * x2
            out[..., 6, 0] = 1
            out[..., 7, 1] = 1
            out[..., 8, 0] = 1
            out[..., 9, 1] = 1
            return out
        d = x[..., None, :] - self.centers
        phi = np.exp(-0.5 * np.sum(d * d, axis=-1) / self.bandwidth**2)
        return -(phi[..., None] * d) / self.bandwidth**2

    def laplacian(self, ctx: FeatureContext) -> np.ndarray:
        """Trace of each feature's spatial Hessian, shape (..., dim)."""
        x = ctx.x
        if self.kind is BasisKind.POLYNOMIAL_QUADRATIC:
            shape = np.broadcast_shapes(x.shape, ctx.mu_own.shape, ctx.mu_other.shape)[:-1]
            out = np.zeros(shape + (10,), dtype=x.dtype)
            out[..., 3] = 2
            out[..., 5] = 2
            return out
        b2 = self.bandwidth**2
        d = x[..., None, :] - self.centers
        r2 = np.sum(d * d, axis=-1)
        phi = np.exp(-0.5 * r2 / b2)
        return phi * (r2 / (b2 * b2) - 2.0 / b2)


def polynomial_quadratic() -> BasisSet:
    return BasisSet(BasisKind.POLYNOMIAL_QUADRATIC)


def rbf(centers, bandwidth: float) -> BasisSet:
    return BasisSet(BasisKind.GAUSSIAN_RBF_GRID, np.atleast_2d(np.asarray(centers, dtype=float)), float(bandwidth))


def rbf_lattice(grid: Grid, centers_per_axis: int, bandwidth: float) -> BasisSet:
    """Gaussian bumps on a ``centers_per_axis`` square lattice spanning ``grid``."""
    lo1, hi1, lo2, hi2 = grid.bounds
    if centers_per_axis == 1:
        a1, a2 = np.array([(lo1 + hi1) / 2]), np.array([(lo2 + hi2) / 2])
    else:
        a1, a2 = np.linspace(lo1, hi1, centers_per_axis), np.linspace(lo2, hi2, centers_per_axis)
    c1, c2 = np.meshgrid(a1, a2, indexing="ij")
    return rbf(np.stack([c1.ravel(), c2.ravel()], axis=-1), bandwidth)


def make_basis(kind: str, grid: Grid, centers_per_axis: int, bandwidth: float) -> BasisSet:
    kind = BasisKind(kind)
    if kind is BasisKind.POLYNOMIAL_QUADRATIC:
        return polynomial_quadratic()
    return rbf_lattice(grid, centers_per_axis, bandwidth)


# ------------------------------------------------- finite-difference fallbacks

def fd_grad_x(basis: BasisSet, ctx: FeatureContext, h: float = 1e-4) -> np.ndarray:
    """Central-difference Jacobian of ``basis.eval`` in ``x``, shape (..., dim, 2)."""
    cols = []
    for k in range(2):
        e = np.zeros(2, dtype=ctx.x.dtype)
        e[k] = h
        fp = basis.eval(ctx.with_x(ctx.x + e))
        fm = basis.eval(ctx.with_x(ctx.x - e))
        cols.append((fp - fm) / (2 * e[k]))
    return np.stack(cols, axis=-1)


def fd_laplacian(basis: BasisSet, ctx: FeatureContext, h: float = 1e-4) -> np.ndarray:
    """Five-point central-difference Laplacian of ``basis.eval``, shape (..., dim)."""
    f0 = basis.eval(ctx)
    total = np.zeros_like(f0)
    for k in range(2):
        e = np.zeros(2, dtype=ctx.x.dtype)
        e[k] = h
        total = total + (basis.eval(ctx.with_x(ctx.x + e)) - 2 * f0 + basis.eval(ctx.with_x(ctx.x - e))) / (e[k] * e[k])
    return total
