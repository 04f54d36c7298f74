"""Small numeric types: 2-D positions, group tags and the quadrature grid."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError


class GroupId(enum.Enum):
    PURSUER = "pursuer"
    EVADER = "evader"

    @property
    def other(self) -> "GroupId":
        return GroupId.EVADER if self is GroupId.PURSUER else GroupId.PURSUER

    @property
    def code(self) -> int:
        return 0 if self is GroupId.PURSUER else 1


def vec2(x1: float, x2: float) -> np.ndarray:
    """Build a finite position vector of shape (2,)."""
    return as_vec2((x1, x2))


def as_vec2(value, name: str = "vector") -> np.ndarray:
    """Coerce ``value`` to a float array whose last axis has length 2.

    Leading batch axes are allowed. Non-finite components raise
    :class:`ValidationError`.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ValidationError(f"{name} must have a trailing axis of length 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite components")
    return arr


@dataclass(frozen=True)
class Grid:
    """Tensor-product rectangle used for mass normalization and expectations.

    ``bounds`` is ``(x1_lo, x1_hi, x2_lo, x2_hi)``; ``resolution`` counts
    nodes per axis (endpoints included).
    """

    bounds: tuple[float, float, float, float]
    resolution: tuple[int, int]

    def __post_init__(self):
        lo1, hi1, lo2, hi2 = self.bounds
        if not (hi1 > lo1 and hi2 > lo2):
            raise ValidationError("grid_bounds must have positive area")
        if min(self.resolution) < 8:
            raise ValidationError("grid_resolution must be >= 8 per axis")

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        lo1, hi1, lo2, hi2 = self.bounds
        return (np.linspace(lo1, hi1, self.resolution[0]),
                np.linspace(lo2, hi2, self.resolution[1]))

    @cached_property
    def nodes(self) -> np.ndarray:
        """Grid nodes, shape (n1*n2, 2), x1-major ordering."""
        a1, a2 = self.axes
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        return np.stack([g1.ravel(), g2.ravel()], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights matching :attr:`nodes`."""
        w = []
        for ax in self.axes:
            h = ax[1] - ax[0]
            wa = np.full(ax.size, h)
            wa[0] = wa[-1] = 0.5 * h
            w.append(wa)
        return np.outer(w[0], w[1]).ravel()

    def refined(self, factor: int = 2) -> "Grid":
        n1, n2 = self.resolution
        return Grid(self.bounds, ((n1 - 1) * factor + 1, (n2 - 1) * factor + 1))

    def clamp(self, x: np.ndarray, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Clamp points into the rectangle shrunk by ``margin``.

        Returns the clamped points and a boolean mask of rows that moved.
        """
        lo1, hi1, lo2, hi2 = self.bounds
        lo = np.array([lo1 + margin, lo2 + margin])
        hi = np.array([hi1 - margin, hi2 - margin])
        xc = np.clip(x, lo, hi)
        moved = np.any(xc != x, axis=-1)
        return xc, moved

    def contains(self, x: np.ndarray) -> np.ndarray:
        lo1, hi1, lo2, hi2 = self.bounds
        x = np.asarray(x)
        return (x[..., 0] >= lo1) & (x[..., 0] <= hi1) & (x[..., 1] >= lo2) & (x[..., 1] <= hi2)
