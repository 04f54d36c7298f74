"""Hamiltonians, equation residuals and the normalized-gradient tuning laws.

Three residuals drive learning:

* ``e_hji`` -- how far the critic is from satisfying the stationary
  Hamilton-Jacobi-Isaacs equation at the agent's position,
* ``e_fpk`` -- how far the mass approximator is from satisfying the
  Fokker-Planck-Kolmogorov equation there,
* ``e_u``   -- the gap between the actor and the control implied by the
  critic's gradient.

Each approximator follows ``dW/dt = -alpha psi e' / (1 + |psi|^2)`` where
``psi`` is the residual's gradient with respect to the weights, discretized
with forward Euler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import FeatureContext
from .core.errors import (
    DimensionMismatch,
    NonFiniteResidual,
    ResidualConsistencyError,
    SingularR,
    ValidationError,
    WeightGuardTripped,
)
from .core.types import Grid
from .estimators import LinearApproximator, Role, _require
from .meanfield import quad_form

CONSISTENCY_RTOL = 1e-10


@dataclass(frozen=True)
class LearningRates:
    alpha_h: float
    alpha_m: float
    alpha_u: float

    def __post_init__(self):
        for name in ("alpha_h", "alpha_m", "alpha_u"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")


@dataclass
class ResidualSet:
    e_hji: np.ndarray
    e_fpk: np.ndarray
    e_u: np.ndarray
    psi_v: np.ndarray
    psi_m: np.ndarray
    phi_u: np.ndarray

    def __post_init__(self):
        for name in ("e_hji", "e_fpk", "e_u", "psi_v", "psi_m", "phi_u"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteResidual(f"{name} is not finite")


def _r_inverse(R) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise SingularR("R is not positive definite") from None
    return np.linalg.inv(R)


def optimal_control(grad_v, g_of_x, R) -> np.ndarray:
    """``-1/2 R^-1 g(x)' dV/dx``, shape (..., m)."""
    g = np.asarray(g_of_x, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    r_inv = _r_inverse(R)
    if g.shape[-1] != r_inv.shape[0]:
        raise DimensionMismatch(f"g has {g.shape[-1]} input columns but R is {r_inv.shape}")
    gtp = np.einsum("...im,...i->...m", g, np.asarray(grad_v, dtype=float))
    return -0.5 * gtp @ r_inv.T


def hamiltonian(x, u, grad_v, drift, Q, R, phi_own, phi_other) -> np.ndarray:
    """``(Phi_own - Phi_other) + x'Qx + u'Ru + dV/dx . drift``.

    The same expression serves both groups: each passes its own coupling
    first and the opposing group's second.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape[0] != x.shape[-1] or R.shape[0] != u.shape[-1]:
        raise DimensionMismatch(f"Q {Q.shape} / R {R.shape} incompatible with x {x.shape} / u {u.shape}")
    grad_v = np.asarray(grad_v, dtype=float)
    drift = np.asarray(drift, dtype=float)
    if grad_v.shape[-1] != drift.shape[-1]:
        raise DimensionMismatch("gradient and drift lengths differ")
    return (np.asarray(phi_own) - np.asarray(phi_other)) + quad_form(x, Q) + quad_form(u, R) \
        + np.sum(grad_v * drift, axis=-1)


def hji_residual(critic: LinearApproximator, ctx: FeatureContext, drift, u, sigma: float,
                 Q, R, phi_own, phi_other, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Critic residual and its weight gradient.

    ``e = (sigma^2/2) lap(V) - H(x, u, dV/dx, drift) + (Phi_own - Phi_other)``
    evaluated with the current critic, and ``psi = de/dW``. The residual is
    affine in the weights; with ``check`` the identity
    ``e(W) - e(0) = W . psi`` is verified.
    """
    _require(critic, Role.CRITIC)
    basis = critic.basis
    W = critic.weights
    lap = basis.laplacian(ctx)
    jac = basis.grad_x(ctx)
    drift = np.asarray(drift, dtype=float)
    grad_v = np.einsum("...dk,...d->...k", jac, W)
    coupling = np.asarray(phi_own) - np.asarray(phi_other)
    half_s2 = 0.5 * sigma * sigma
    e = half_s2 * np.einsum("...d,...d->...", lap, W) \
        - hamiltonian(ctx.x, u, grad_v, drift, Q, R, phi_own, phi_other) + coupling
    psi = half_s2 * lap - np.einsum("...dk,...k->...d", jac, drift)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(psi))):
        raise NonFiniteResidual("HJI residual is not finite")
    if check:
        e0 = -hamiltonian(ctx.x, u, np.zeros_like(grad_v), drift, Q, R, phi_own, phi_other) + coupling
        linear = np.einsum("...d,...d->...", W, psi)
        # floor the tolerance by the size of the terms that were summed
        scale = np.abs(e) + np.abs(e0) + np.einsum("...d,...d->...", np.abs(W), np.abs(psi)) \
            + np.abs(np.asarray(phi_own)) + np.abs(np.asarray(phi_other)) \
            + quad_form(np.asarray(ctx.x, dtype=float), np.abs(np.atleast_2d(Q)))
        if np.any(np.abs((e - e0) - linear) > CONSISTENCY_RTOL * scale + 1e-300):
            raise ResidualConsistencyError("critic residual is not affine in the weights")
    return e, psi


def divergence(field: Callable[[np.ndarray], np.ndarray], x, h: float) -> np.ndarray:
    """Central-difference divergence of a vector field in the plane."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        total = total + (field(x + e)[..., k] - field(x - e)[..., k]) / (2.0 * h)
    return total


def fpk_residual(mass: LinearApproximator, x, drift_field: Callable[[np.ndarray], np.ndarray],
                 sigma: float, fd_step: float, grid: Grid | None = None):
    """Mass residual ``e = W . psi`` at ``x`` with ``psi_k = -(sigma^2/2) lap(phi_k) + div(phi_k d)``.

    ``d`` is the closed-loop drift field, whose divergence is taken with
    central differences of step ``fd_step``. With ``grid`` given, points
    closer than ``fd_step`` to the boundary are clamped inward.

    Returns ``(e, psi, clamped)`` where ``clamped`` flags moved points.
    """
    _require(mass, Role.MASS)
    x = np.asarray(x, dtype=float)
    clamped = np.zeros(x.shape[:-1], dtype=bool)
    if grid is not None:
        x, clamped = grid.clamp(x, margin=fd_step)
    ctx = FeatureContext(x)
    basis = mass.basis
    phi = basis.eval(ctx)
    jac = basis.grad_x(ctx)
    lap = basis.laplacian(ctx)
    d = drift_field(x)
    div_d = divergence(drift_field, x, fd_step)
    psi = -0.5 * sigma * sigma * lap + np.einsum("...dk,...k->...d", jac, d) + phi * np.asarray(div_d)[..., None]
    e = np.einsum("...d,...d->...", mass.weights, psi)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(psi))):
        raise NonFiniteResidual("FPK residual is not finite")
    return e, psi, clamped


def control_residual(actor: LinearApproximator, critic: LinearApproximator, ctx: FeatureContext,
                     g_of_x, R) -> tuple[np.ndarray, np.ndarray]:
    """``e_u = W_u' phi_u + 1/2 R^-1 g' dV/dx`` and the actor features ``phi_u``."""
    _require(actor, Role.ACTOR)
    _require(critic, Role.CRITIC)
    phi_u = actor.basis.eval(ctx)
    u_hat = np.einsum("...d,...dm->...m", phi_u, actor.weights)
    grad_v = np.einsum("...dk,...d->...k", critic.basis.grad_x(ctx), critic.weights)
    target = optimal_control(grad_v, g_of_x, R)
    if target.shape[-1] != u_hat.shape[-1]:
        raise DimensionMismatch(f"actor outputs {u_hat.shape[-1]} controls, R/g imply {target.shape[-1]}")
    return u_hat - target, phi_u


def normalized_update(W, regressor, e, alpha: float, dt: float, w_max: float | None = None) -> np.ndarray:
    """Forward-Euler step of ``dW/dt = -alpha psi e' / (1 + |psi|^2)``.

    ``W`` has the regressor's shape for scalar residuals, or one extra
    trailing axis (the control dimension) for vector residuals.
    """
    if alpha < 0 or not dt > 0:
        raise ValidationError("normalized_update needs alpha >= 0 and dt > 0")
    W = np.asarray(W, dtype=float)
    psi = np.asarray(regressor, dtype=float)
    e = np.asarray(e, dtype=float)
    denom = 1.0 + np.sum(psi * psi, axis=-1)
    if W.shape == psi.shape:
        step = psi * (e / denom)[..., None]
    elif W.shape[:-1] == psi.shape:
        if e.shape[:-1] != psi.shape[:-1] or e.shape[-1] != W.shape[-1]:
            raise DimensionMismatch(f"residual shape {e.shape} incompatible with weights {W.shape}")
        step = psi[..., :, None] * (e / denom[..., None])[..., None, :]
    else:
        raise DimensionMismatch(f"regressor shape {psi.shape} incompatible with weights {W.shape}")
    W_new = W - (dt * alpha) * step
    if w_max is not None:
        axes = tuple(range(psi.ndim - 1, W.ndim))
        norms = np.sqrt(np.sum(W_new * W_new, axis=axes))
        if not np.all(norms <= w_max):
            raise WeightGuardTripped(f"weight norm {np.nanmax(norms):.4g} exceeds W_max = {w_max:g}")
    return W_new
