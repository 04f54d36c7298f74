"""Agent models, inter-group coupling and the Euler-Maruyama integrator.

Each agent follows

    dx = [f(x) + g(x) u + G] dt + sigma dw

where ``G`` is the mean position of the opposing group (times an optional
gain). All functions accept a leading batch axis so a whole group can be
stepped in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core.config import SimConfig, check_pd, check_psd
from .core.errors import DimensionMismatch, EmptyGroup, NumericalBlowup, ValidationError
from .core.types import GroupId, as_vec2

DriftFn = Callable[[np.ndarray], np.ndarray]
InputFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GroupModel:
    name: str
    drift_f: DriftFn
    input_g: InputFn
    sigma: float
    Q: np.ndarray
    R: np.ndarray
    control_dim: int

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValidationError(f"{self.name}: sigma must be >= 0")
        check_psd(f"{self.name} Q", np.asarray(self.Q, dtype=float))
        check_pd(f"{self.name} R", np.asarray(self.R, dtype=float))
        if np.shape(self.R) != (self.control_dim, self.control_dim):
            raise DimensionMismatch(
                f"{self.name}: R has shape {np.shape(self.R)} but the model's control "
                f"dimension is {self.control_dim}")

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.drift_f(x)

    def g(self, x: np.ndarray) -> np.ndarray:
        """Input map evaluated at ``x``, shape (..., 2, m)."""
        return self.input_g(x)


@dataclass(frozen=True)
class CouplingTerm:
    """Additive drift contributed by the opposing group."""

    value: np.ndarray


# ------------------------------------------------------------ built-in models

def _benchmark_pursuer_f(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([-x1 + x2, -0.5 * x1 * x1 - 0.5 * x2], axis=-1)


def _benchmark_pursuer_g(x):
    g = np.zeros(x.shape[:-1] + (2, 1))
    g[..., 1, 0] = 1.0
    return g


def _benchmark_evader_f(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 + 2.0 * x2, 2.0 * x1 + x2], axis=-1)


def _benchmark_evader_g(x):
    g = np.zeros(x.shape[:-1] + (2, 1))
    g[..., 0, 0] = 1.0
    g[..., 1, 0] = 2.0
    return g


# name -> (f, g, control_dim)
MODEL_REGISTRY: dict[str, tuple[DriftFn, InputFn, int]] = {
    "benchmark_pursuer": (_benchmark_pursuer_f, _benchmark_pursuer_g, 1),
    "benchmark_evader": (_benchmark_evader_f, _benchmark_evader_g, 1),
}


def _monomials(x):
    x1, x2 = x[..., 0], x[..., 1]
    one = np.ones_like(x1)
    return np.stack([one, x1, x2, x1 * x1, x1 * x2, x2 * x2], axis=-1)


def polynomial_model(f_coeffs, g_coeffs) -> tuple[DriftFn, InputFn, int]:
    """Drift and input map from coefficient tables over ``[1, x1, x2, x1^2, x1 x2, x2^2]``.

    ``f_coeffs`` has shape (2, 6); ``g_coeffs`` has shape (2, m, 6).
    """
    fc = np.asarray(f_coeffs, dtype=float)
    gc = np.asarray(g_coeffs, dtype=float)
    if fc.shape != (2, 6):
        raise ValidationError(f"f_coeffs must have shape (2, 6), got {fc.shape}")
    if gc.ndim != 3 or gc.shape[0] != 2 or gc.shape[2] != 6:
        raise ValidationError(f"g_coeffs must have shape (2, m, 6), got {gc.shape}")

    def f(x):
        return _monomials(x) @ fc.T

    def g(x):
        return np.einsum("...k,imk->...im", _monomials(x), gc)

    return f, g, gc.shape[1]


def build_model(cfg: SimConfig, group: GroupId) -> GroupModel:
    name = cfg.model_name(group)
    if name == "polynomial":
        table = cfg.model_tables.get(group.value)
        if not table or table.get("f_coeffs") is None or table.get("g_coeffs") is None:
            raise ValidationError(f"model 'polynomial' for {group.value} needs f_coeffs and g_coeffs")
        f, g, m = polynomial_model(table["f_coeffs"], table["g_coeffs"])
    elif name in MODEL_REGISTRY:
        f, g, m = MODEL_REGISTRY[name]
    else:
        raise ValidationError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)} or 'polynomial'")
    model = GroupModel(name, f, g, cfg.sigma(group), np.asarray(cfg.Q(group), dtype=float),
                       np.asarray(cfg.R(group), dtype=float), m)
    probe = cfg.grid.nodes
    if not (np.all(np.isfinite(model.f(probe))) and np.all(np.isfinite(model.g(probe)))):
        raise ValidationError(f"{name}: drift or input map not finite on the grid rectangle")
    return model


# ---------------------------------------------------------------- operations

def _coupling_value(coupling) -> np.ndarray:
    return coupling.value if isinstance(coupling, CouplingTerm) else np.asarray(coupling, dtype=float)


def total_drift(model: GroupModel, x, u, coupling) -> np.ndarray:
    """``f(x) + g(x) u + G`` for one agent or a batch."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    if u.shape[-1] != model.control_dim:
        raise DimensionMismatch(f"control has length {u.shape[-1]}, model expects {model.control_dim}")
    gu = np.einsum("...im,...m->...i", model.g(x), u)
    return model.f(x) + gu + _coupling_value(coupling)


def linearize(model: GroupModel, x0=(0.0, 0.0), h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """``(df/dx, g)`` at ``x0`` by central differences; shapes (2, 2) and (2, m)."""
    x0 = as_vec2(x0, "x0").astype(float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        cols.append((model.f(x0 + e) - model.f(x0 - e)) / (2 * h))
    return np.stack(cols, axis=-1), model.g(x0)


def euler_maruyama_step(x, drift, sigma: float, dt: float, dw, guard: float = 1e6) -> np.ndarray:
    """One Euler-Maruyama step ``x + drift dt + sigma dw``.

    Raises :class:`NumericalBlowup` if any output component is non-finite
    or exceeds ``guard`` in magnitude.
    """
    x_new = np.asarray(x, dtype=float) + np.asarray(drift) * dt + sigma * np.asarray(dw)
    bad = ~np.isfinite(x_new) | (np.abs(x_new) > guard)
    if np.any(bad):
        rows = np.argwhere(np.any(bad, axis=-1)).ravel() if x_new.ndim > 1 else []
        raise NumericalBlowup(
            f"state left the guard |x| <= {guard:g} (max |x| = {np.nanmax(np.abs(x_new)):.3g}, "
            f"rows {list(rows[:10])})")
    return x_new


def empirical_group_mean(states) -> CouplingTerm:
    """Arithmetic mean of a group's positions.

    Uses exactly rounded summation, so the result does not depend on the
    order in which agents are listed.
    """
    arr = np.asarray(states, dtype=float)
    if arr.size == 0:
        raise EmptyGroup("cannot average an empty group")
    arr = as_vec2(arr.reshape(-1, 2), "states")
    n = arr.shape[0]
    return CouplingTerm(np.array([math.fsum(arr[:, 0]) / n, math.fsum(arr[:, 1]) / n]))
