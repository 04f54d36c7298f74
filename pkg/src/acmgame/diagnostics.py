"""Self-checks behind ``acmgame check``.

Each check returns a :class:`CheckResult`; none of them touch the disk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import acm
from .basis import FeatureContext, fd_grad_x, fd_laplacian, polynomial_quadratic, rbf, rbf_lattice
from .core.types import GroupId, Grid
from .estimators import LinearApproximator, Role


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)))


def check_derivatives(n: int = 100, seed: int = 0) -> CheckResult:
    """Analytic feature derivatives against extended-precision central differences."""
    rng = np.random.default_rng(seed)
    grid = Grid((-4.0, 4.0, -4.0, 4.0), (33, 33))
    worst = 0.0
    for basis in (polynomial_quadratic(), rbf_lattice(grid, 5, 1.25)):
        x = rng.uniform(-3, 3, (n, 2)).astype(np.longdouble)
        ctx = FeatureContext(x, rng.uniform(-3, 3, (n, 2)), rng.uniform(-3, 3, (n, 2)))
        ctx64 = FeatureContext(x.astype(float), ctx.mu_own.astype(float), ctx.mu_other.astype(float))
        worst = max(worst, _rel(basis.grad_x(ctx64), fd_grad_x(basis, ctx).astype(float)))
        worst = max(worst, _rel(basis.laplacian(ctx64), fd_laplacian(basis, ctx).astype(float)))
    return CheckResult("derivatives", worst < 1e-5, f"max relative error {worst:.2e}")


def check_heat_kernel(sigma: float = 0.02, b: float = 0.5) -> CheckResult:
    """A Gaussian bump is the exact zero-drift density at time ``b^2/sigma^2``."""
    basis = rbf(np.zeros((1, 2)), b)
    mass = LinearApproximator(np.array([1.0 / (2 * np.pi * b * b)]), basis, Role.MASS, GroupId.PURSUER)
    grid = Grid((-2.0, 2.0, -2.0, 2.0), (41, 41))
    x = grid.nodes
    e, _, _ = acm.fpk_residual(mass, x, lambda y: np.zeros_like(y), sigma, 1e-3)
    t = b * b / (sigma * sigma)
    r2 = np.sum(x * x, axis=-1)
    s2 = sigma * sigma * t
    m = np.exp(-r2 / (2 * s2)) / (2 * np.pi * s2)
    dm_dt = m * (r2 / (2 * s2 * s2) - 1.0 / s2) * sigma * sigma
    rms = float(np.sqrt(np.mean((e + dm_dt) ** 2)))
    return CheckResult("heat kernel", rms < 1e-3, f"grid RMS {rms:.2e}")


def check_update_bound(n: int = 10_000, seed: int = 1) -> CheckResult:
    """``|dW| <= dt alpha |e| / 2`` for the critic, mass and actor forms of the law."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for k in range(n):
        d = int(rng.integers(1, 12))
        psi = rng.normal(size=d) * 10 ** rng.uniform(-3, 3)
        alpha, dt = rng.uniform(0.01, 10), rng.uniform(1e-4, 0.1)
        if k % 3 == 2:
            # actor: matrix weights driven by a control-vector residual
            m = int(rng.integers(1, 4))
            W = rng.normal(size=(d, m))
            e = rng.normal(size=m) * 10 ** rng.uniform(-3, 3)
        else:
            W = rng.normal(size=d)
            e = rng.normal() * 10 ** rng.uniform(-3, 3)
        dW = acm.normalized_update(W, psi, e, alpha, dt) - W
        worst = max(worst, float(np.linalg.norm(dW) - (dt * alpha * np.linalg.norm(e) / 2 + 1e-12)))
    return CheckResult("update bound", worst <= 0, f"max excess {worst:.2e}")


def check_control_fixed_point() -> CheckResult:
    basis = polynomial_quadratic()
    w_v = np.array([0, 0.3, -0.2, 1.0, 0.4, 2.0, 0.1, 0.0, -0.1, 0.2])
    g = np.array([[1.0], [2.0]])
    R = np.array([[2.0]])
    # the control implied by this critic is linear in x; write it in the actor's basis
    k = -0.5 / R[0, 0] * g[:, 0]
    w_u = np.zeros((10, 1))
    w_u[0, 0] = k @ np.array([w_v[1] + w_v[6] + w_v[8], w_v[2] + w_v[7] + w_v[9]])
    w_u[1, 0] = k[0] * 2 * w_v[3] + k[1] * w_v[4]
    w_u[2, 0] = k[0] * w_v[4] + k[1] * 2 * w_v[5]
    critic = LinearApproximator(w_v, basis, Role.CRITIC, GroupId.EVADER)
    ctx = FeatureContext(np.array([0.7, -1.3]), np.array([0.2, 0.1]), np.array([-0.5, 0.4]))
    worst = 0.0
    W = w_u
    for _ in range(100):
        actor = LinearApproximator(W, basis, Role.ACTOR, GroupId.EVADER)
        e_u, phi_u = acm.control_residual(actor, critic, ctx, g, R)
        worst = max(worst, float(np.linalg.norm(e_u)))
        W = acm.normalized_update(W, phi_u, e_u, 1.0, 0.01)
    moved = float(np.max(np.abs(W - w_u)))
    return CheckResult("control fixed point", worst < 1e-12 and moved < 1e-12,
                       f"max |e_u| {worst:.1e}, weight drift {moved:.1e}")


ALL_CHECKS = (check_derivatives, check_heat_kernel, check_update_bound, check_control_fixed_point)


def run_checks() -> list[CheckResult]:
    out = []
    for fn in ALL_CHECKS:
        t0 = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
