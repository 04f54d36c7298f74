"""Mean-field coupling costs and running-cost bookkeeping.

A pursuer pays ``x'Qx + u'Ru + Phi_own - Phi_other`` per unit time; an
evader pays the same expression from its own point of view, so the
coupling part of one group is the negative of the other's under a role
swap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.errors import DimensionMismatch, EmptyTrajectory


@dataclass(frozen=True)
class CouplingCost:
    own_attraction: float
    other_repulsion: float


@dataclass(frozen=True)
class RunningCost:
    state_cost: np.ndarray
    control_cost: np.ndarray
    coupling_net: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.state_cost + self.control_cost + self.coupling_net


def coupling_phi(x, mu) -> np.ndarray:
    """Squared distance ``|x - mu|^2`` to a group's expected position."""
    d = np.asarray(x, dtype=float) - np.asarray(mu, dtype=float)
    return np.sum(d * d, axis=-1)


def coupling_cost(x, mu_own, mu_other) -> CouplingCost:
    return CouplingCost(coupling_phi(x, mu_own), coupling_phi(x, mu_other))


def quad_form(v, M) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.einsum("...i,ij,...j->...", v, M, v)


def running_cost(x, u, Q, R, phi_own, phi_other) -> RunningCost:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (x.shape[-1], x.shape[-1]) or R.shape != (u.shape[-1], u.shape[-1]):
        raise DimensionMismatch(f"Q {Q.shape} / R {R.shape} incompatible with x {x.shape} / u {u.shape}")
    return RunningCost(quad_form(x, Q), quad_form(u, R),
                       np.asarray(phi_own, dtype=float) - np.asarray(phi_other, dtype=float))


def trajectory_cost(records, dt: float, rule: str = "left") -> float:
    """Integral of the running cost over a trajectory sampled every ``dt``.

    ``rule="left"`` is the left Riemann sum ``sum(L_k) dt``; ``"trapezoid"``
    treats the samples as the endpoints of ``len(records) - 1`` intervals.
    """
    records = list(records)
    if not records:
        raise EmptyTrajectory("no running-cost samples")
    totals = np.array([np.sum(r.total) if not isinstance(r, (int, float)) else r for r in records], dtype=float)
    if rule == "left":
        return float(np.sum(totals) * dt)
    if rule == "trapezoid":
        if totals.size == 1:
            return 0.0
        return float((np.sum(totals) - 0.5 * (totals[0] + totals[-1])) * dt)
    raise ValueError(f"unknown rule {rule!r}")
