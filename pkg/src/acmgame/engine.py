"""Two-group experiment orchestration.

One call to :func:`step` advances both groups by ``dt``:

1. ground-truth group means (the physical coupling),
2. each agent's mass normalizers and expectations (cached from the end of
   the previous step),
3. actor control, with exploration noise while ``t < t_explore``,
4. all residuals, from the pre-step snapshot,
5. the Euler-Maruyama state update,
6. normalized-gradient updates of all five approximators,
7. renormalization of the updated mass fields,
8. one :class:`SimRecord`.

Every agent reads only the snapshot taken at the start of the step, so the
outcome does not depend on the order in which agents are processed. Groups
are stored as stacked arrays (one row per agent) and processed together.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import solve_continuous_are

from . import acm
from .basis import BasisSet, FeatureContext, make_basis
from .core.config import SimConfig
from .core.errors import NumericalAbort, ValidationError
from .core.rng import StreamBank
from .core.types import GroupId, Grid
from .dynamics import GroupModel, build_model, linearize, empirical_group_mean, euler_maruyama_step
from .estimators import DEGENERATE_MASS, LinearApproximator, MassQuadrature, Role
from .meanfield import coupling_phi, running_cost

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "group", "agent", "x1", "x2", "e_hji", "e_fpk", "e_u_norm", "w_v_norm",
               "w_m_norm", "w_u_norm", "w_v2_norm", "w_m2_norm", "xi1", "xi2", "cost")
WEIGHT_KEYS = ("w_v", "w_m", "w_u", "w_v2", "w_m2")
# slots used to draw independent initial weights per approximator
_WEIGHT_SLOTS = {"w_v": 0, "w_u": 1, "w_m": 2, "w_v2": 3, "w_m2": 4}


# ------------------------------------------------------------------ setup

@dataclass(frozen=True, eq=False)
class Components:
    """Everything derived from a config that does not change during a run."""

    grid: Grid
    models: dict
    critic_basis: BasisSet
    actor_basis: BasisSet
    mass_basis: BasisSet
    mass_quad: MassQuadrature


@lru_cache(maxsize=8)
def _components_cached(canonical: str, cfg_ref: tuple) -> Components:
    cfg = cfg_ref[0]
    grid = cfg.grid
    b = cfg.basis_spec
    mass_basis = make_basis(b.mass_kind, grid, b.rbf_centers_per_axis, b.rbf_bandwidth)
    return Components(
        grid=grid,
        models={g: build_model(cfg, g) for g in GroupId},
        critic_basis=make_basis(b.critic_kind, grid, b.rbf_centers_per_axis, b.rbf_bandwidth),
        actor_basis=make_basis(b.actor_kind, grid, b.rbf_centers_per_axis, b.rbf_bandwidth),
        mass_basis=mass_basis,
        mass_quad=MassQuadrature(mass_basis, grid),
    )


class _Ref(tuple):
    # hashes by the canonical string only; carries the config along
    def __hash__(self):
        return 0

    def __eq__(self, other):
        return True


def components(cfg: SimConfig) -> Components:
    return _components_cached(cfg.canonical(), _Ref((cfg,)))


# ------------------------------------------------------------------ state

@dataclass
class AgentState:
    """One agent's view: position plus its five approximators."""

    group: GroupId
    index: int
    x: np.ndarray
    critic: LinearApproximator
    actor: LinearApproximator
    mass: LinearApproximator
    other_critic: LinearApproximator
    other_mass: LinearApproximator


@dataclass
class GroupState:
    group: GroupId
    x: np.ndarray          # (N, 2)
    w_v: np.ndarray        # (N, dV) own critic
    w_u: np.ndarray        # (N, dU, m) actor
    w_m: np.ndarray        # (N, dM) own mass
    w_v2: np.ndarray       # (N, dV) opposing-group critic
    w_m2: np.ndarray       # (N, dM) opposing-group mass
    z_m: np.ndarray        # (N,) normalizers
    z_m2: np.ndarray
    mu_own: np.ndarray     # (N, 2) expectation of the own-mass estimate
    mu_other: np.ndarray   # (N, 2) expectation of the opposing-mass estimate
    cost: np.ndarray       # (N,) accumulated running cost
    last_running: np.ndarray
    streams: StreamBank

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "GroupState":
        out = dataclasses.replace(self, **{f.name: getattr(self, f.name).copy()
                                           for f in dataclasses.fields(self)
                                           if isinstance(getattr(self, f.name), np.ndarray)})
        out.streams = self.streams.take(np.arange(self.n))
        return out

    def take(self, order: np.ndarray) -> "GroupState":
        """Rows reordered by ``order`` (each agent keeps its own stream)."""
        kw = {f.name: getattr(self, f.name)[order] for f in dataclasses.fields(self)
              if isinstance(getattr(self, f.name), np.ndarray)}
        return dataclasses.replace(self, streams=self.streams.take(order), **kw)

    def weight_norms(self) -> dict[str, np.ndarray]:
        return {k: np.sqrt(np.sum(getattr(self, k).reshape(self.n, -1) ** 2, axis=1)) for k in WEIGHT_KEYS}


@dataclass
class SimState:
    step_index: int
    dt: float
    pursuers: GroupState
    evaders: GroupState
    ground_truth_means: dict

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    def group(self, g: GroupId) -> GroupState:
        return self.pursuers if g is GroupId.PURSUER else self.evaders

    def agents(self, g: GroupId, cfg: SimConfig) -> list[AgentState]:
        comp = components(cfg)
        gs = self.group(g)
        out = []
        for i in range(gs.n):
            out.append(AgentState(
                g, int(gs.streams.indices[i]), gs.x[i],
                LinearApproximator(gs.w_v[i], comp.critic_basis, Role.CRITIC, g),
                LinearApproximator(gs.w_u[i], comp.actor_basis, Role.ACTOR, g),
                LinearApproximator(gs.w_m[i], comp.mass_basis, Role.MASS, g),
                LinearApproximator(gs.w_v2[i], comp.critic_basis, Role.CRITIC, g.other),
                LinearApproximator(gs.w_m2[i], comp.mass_basis, Role.MASS, g.other),
            ))
        return out

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(str(self.step_index).encode())
        for gs in (self.pursuers, self.evaders):
            for f in dataclasses.fields(gs):
                v = getattr(gs, f.name)
                if isinstance(v, np.ndarray):
                    h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


@dataclass
class GroupRecord:
    x: np.ndarray
    u: np.ndarray
    noise: np.ndarray
    e_hji: np.ndarray
    e_fpk: np.ndarray
    e_u_norm: np.ndarray
    e_hji_other: np.ndarray
    e_fpk_other: np.ndarray
    weight_norms: dict
    cost: np.ndarray
    mass_integral: np.ndarray   # (N, 2) integrals of the own and opposing mass after renormalization
    mass_min_density: np.ndarray
    mu_own: np.ndarray
    mu_other: np.ndarray
    fpk_clamped: int


@dataclass
class SimRecord:
    t: float
    step_index: int
    pursuers: GroupRecord
    evaders: GroupRecord
    xi: np.ndarray        # (N, 2) pursuer i minus evader i
    xi_bar: np.ndarray    # (2,)
    means: dict

    def group(self, g: GroupId) -> GroupRecord:
        return self.pursuers if g is GroupId.PURSUER else self.evaders


# ----------------------------------------------------------- initialization

def _cov_sqrt(cov) -> np.ndarray:
    lam, vec = np.linalg.eigh(np.asarray(cov, dtype=float))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _fit_weights(features: np.ndarray, target: np.ndarray) -> np.ndarray:
    sol, *_ = np.linalg.lstsq(features, target, rcond=None)
    return sol


def _warm_start(cfg: SimConfig, comp: Components, g: GroupId) -> tuple[np.ndarray, np.ndarray]:
    """Critic fit to the LQR value ``x'Px`` of the linearized group and the actor implied by it.

    The contexts pair every grid node with shifted group expectations so
    that features depending on the expectations receive zero weight.
    """
    model = comp.models[g]
    A, B = linearize(model)
    try:
        P = solve_continuous_are(A, B, model.Q, model.R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValidationError(f"no LQR warm start for {g.value}: {exc}") from None
    nodes = comp.grid.nodes
    ctx = FeatureContext(nodes, np.roll(nodes, 7, axis=0), np.roll(nodes, -13, axis=0))
    w_v = _fit_weights(comp.critic_basis.eval(ctx), np.einsum("ni,ij,nj->n", nodes, P, nodes))
    grad = np.einsum("ndk,d->nk", comp.critic_basis.grad_x(ctx), w_v)
    u = acm.optimal_control(grad, model.g(nodes), model.R)
    w_u = _fit_weights(comp.actor_basis.eval(ctx), u)
    return w_v, w_u


def _init_group(cfg: SimConfig, comp: Components, g: GroupId) -> GroupState:
    n = cfg.n_agents_per_group
    bank = StreamBank(cfg.master_seed, g, np.arange(n))
    mean = np.asarray(cfg.init_state_mean[g], dtype=float)
    x = mean + bank.initial_normals() @ _cov_sqrt(cfg.init_state_cov[g]).T
    m = comp.models[g].control_dim
    dV, dU, dM = comp.critic_basis.dim, comp.actor_basis.dim, comp.mass_basis.dim
    s = cfg.init_weight_scale
    shapes = {"w_v": (dV,), "w_u": (dU, m), "w_m": (dM,), "w_v2": (dV,), "w_m2": (dM,)}
    w = {}
    for key, shape in shapes.items():
        size = int(np.prod(shape))
        if s > 0:
            w[key] = bank.init_weights(_WEIGHT_SLOTS[key], size, s).reshape((n,) + shape)
        else:
            w[key] = np.zeros((n,) + shape)
    if cfg.warm_start == "lqr":
        wv, wu = _warm_start(cfg, comp, g)
        wv2, _ = _warm_start(cfg, comp, g.other)
        w["w_v"] += wv
        w["w_u"] += wu
        w["w_v2"] += wv2
    if not _acm_enabled(cfg, g):
        w["w_u"][:] = 0.0
    stats = {}
    for key in ("w_m", "w_m2"):
        z = comp.mass_quad.clipped(w[key]) @ comp.mass_quad.weights
        dead = ~(z > DEGENERATE_MASS)
        w[key][dead] = 1.0
        stats[key] = comp.mass_quad.normalize(w[key])
    return GroupState(
        group=g, x=x, w_v=w["w_v"], w_u=w["w_u"], w_m=w["w_m"], w_v2=w["w_v2"], w_m2=w["w_m2"],
        z_m=stats["w_m"]["normalizer"], z_m2=stats["w_m2"]["normalizer"],
        mu_own=stats["w_m"]["expectation"], mu_other=stats["w_m2"]["expectation"],
        cost=np.zeros(n), last_running=np.zeros(n), streams=bank,
    )


def initialize(cfg: SimConfig) -> SimState:
    comp = components(cfg)
    p = _init_group(cfg, comp, GroupId.PURSUER)
    e = _init_group(cfg, comp, GroupId.EVADER)
    means = {GroupId.PURSUER: empirical_group_mean(p.x).value, GroupId.EVADER: empirical_group_mean(e.x).value}
    return SimState(0, cfg.dt, p, e, means)


# --------------------------------------------------------------------- step

def _acm_enabled(cfg: SimConfig, g: GroupId) -> bool:
    return g is GroupId.PURSUER or cfg.evader_uses_acm


def _critic(w, basis, g):
    return LinearApproximator(w, basis, Role.CRITIC, g)


def _group_terms(cfg: SimConfig, comp: Components, gs: GroupState, step_index: int, t: float,
                 true_means: dict) -> dict:
    """Control, residuals and regressors of one group from the pre-step snapshot."""
    g = gs.group
    model: GroupModel = comp.models[g]
    opp: GroupModel = comp.models[g.other]
    gain = cfg.coupling_gain
    x, mo, mt = gs.x, gs.mu_own, gs.mu_other
    ctx = FeatureContext(x, mo, mt)
    critic = _critic(gs.w_v, comp.critic_basis, g)
    actor = LinearApproximator(gs.w_u, comp.actor_basis, Role.ACTOR, g)
    uses_actor = _acm_enabled(cfg, g)
    g_x = model.g(x)

    if t < cfg.t_explore and cfg.explore_amplitude > 0:
        noise = gs.streams.explore(step_index, model.control_dim, cfg.explore_amplitude)
    else:
        noise = np.zeros((gs.n, model.control_dim))

    grad_v = np.einsum("ndk,nd->nk", comp.critic_basis.grad_x(ctx), gs.w_v)
    if uses_actor:
        u_policy = np.einsum("nd,ndm->nm", comp.actor_basis.eval(ctx), gs.w_u)
        e_u, phi_u = acm.control_residual(actor, critic, ctx, g_x, model.R)
    else:
        u_policy = acm.optimal_control(grad_v, g_x, model.R)
        e_u, phi_u = np.zeros_like(u_policy), None
    u = u_policy + noise

    # own critic: the agent models the coupling with its opposing-mass expectation
    believed_drift = model.f(x) + np.einsum("nim,nm->ni", g_x, u) + gain * mt
    e_hji, psi_v = acm.hji_residual(critic, ctx, believed_drift, u, model.sigma, model.Q, model.R,
                                    coupling_phi(x, mo), coupling_phi(x, mt))

    def own_field(y):
        cy = FeatureContext(y, mo, mt)
        if uses_actor:
            uy = np.einsum("nd,ndm->nm", comp.actor_basis.eval(cy), gs.w_u)
        else:
            gv = np.einsum("ndk,nd->nk", comp.critic_basis.grad_x(cy), gs.w_v)
            uy = acm.optimal_control(gv, model.g(y), model.R)
        return model.f(y) + np.einsum("nim,nm->ni", model.g(y), uy) + gain * mt

    mass = LinearApproximator(gs.w_m, comp.mass_basis, Role.MASS, g)
    e_fpk, psi_m, clamp1 = acm.fpk_residual(mass, x, own_field, model.sigma, cfg.fd_step, comp.grid)

    # opposing group, seen through this agent's estimates: its expected
    # position is mt, and its coupling is this group's expectation mo
    ctx2 = FeatureContext(mt, mt, mo)
    critic2 = _critic(gs.w_v2, comp.critic_basis, g.other)
    grad_v2 = np.einsum("ndk,nd->nk", comp.critic_basis.grad_x(ctx2), gs.w_v2)
    u2 = acm.optimal_control(grad_v2, opp.g(mt), opp.R)
    drift2 = opp.f(mt) + np.einsum("nim,nm->ni", opp.g(mt), u2) + gain * mo
    e_hji2, psi_v2 = acm.hji_residual(critic2, ctx2, drift2, u2, opp.sigma, opp.Q, opp.R,
                                      np.zeros(gs.n), coupling_phi(mt, mo))

    def opp_field(y):
        cy = FeatureContext(y, mt, mo)
        gv = np.einsum("ndk,nd->nk", comp.critic_basis.grad_x(cy), gs.w_v2)
        gy = opp.g(y)
        return opp.f(y) + np.einsum("nim,nm->ni", gy, acm.optimal_control(gv, gy, opp.R)) + gain * mo

    mass2 = LinearApproximator(gs.w_m2, comp.mass_basis, Role.MASS, g.other)
    e_fpk2, psi_m2, clamp2 = acm.fpk_residual(mass2, mt, opp_field, opp.sigma, cfg.fd_step, comp.grid)

    # bookkeeping cost uses the true group means
    rc = running_cost(x, u, model.Q, model.R, coupling_phi(x, true_means[g]), coupling_phi(x, true_means[g.other]))
    return dict(noise=noise, u=u, e_u=e_u, phi_u=phi_u, e_hji=e_hji, psi_v=psi_v, e_fpk=e_fpk, psi_m=psi_m,
                e_hji2=e_hji2, psi_v2=psi_v2, e_fpk2=e_fpk2, psi_m2=psi_m2, running=rc.total,
                clamped=int(np.sum(clamp1) + np.sum(clamp2)))


def _advance_group(cfg: SimConfig, comp: Components, gs: GroupState, terms: dict, coupling: np.ndarray,
                   step_index: int) -> tuple[GroupState, dict]:
    model = comp.models[gs.group]
    dt = cfg.dt
    drift = model.f(gs.x) + np.einsum("nim,nm->ni", model.g(gs.x), terms["u"]) + coupling
    dw = gs.streams.wiener(dt)
    x_new = euler_maruyama_step(gs.x, drift, model.sigma, dt, dw, cfg.blowup_guard)

    upd = lambda W, psi, e, a: acm.normalized_update(W, psi, e, a, dt, cfg.w_max)  # noqa: E731
    w_v = upd(gs.w_v, terms["psi_v"], terms["e_hji"], cfg.alpha_h)
    w_u = upd(gs.w_u, terms["phi_u"], terms["e_u"], cfg.alpha_u) if terms["phi_u"] is not None else gs.w_u
    w_m = upd(gs.w_m, terms["psi_m"], terms["e_fpk"], cfg.alpha_m)
    w_v2 = upd(gs.w_v2, terms["psi_v2"], terms["e_hji2"], cfg.alpha_h)
    w_m2 = upd(gs.w_m2, terms["psi_m2"], terms["e_fpk2"], cfg.alpha_m)

    s_m = comp.mass_quad.normalize(w_m)
    s_m2 = comp.mass_quad.normalize(w_m2)

    running = terms["running"]
    if cfg.cost_rule == "trapezoid" and step_index > 0:
        cost = gs.cost + 0.5 * (gs.last_running + running) * dt
    elif cfg.cost_rule == "trapezoid":
        cost = gs.cost.copy()
    else:
        cost = gs.cost + running * dt

    new = GroupState(group=gs.group, x=x_new, w_v=w_v, w_u=w_u, w_m=w_m, w_v2=w_v2, w_m2=w_m2,
                     z_m=s_m["normalizer"], z_m2=s_m2["normalizer"],
                     mu_own=s_m["expectation"], mu_other=s_m2["expectation"],
                     cost=cost, last_running=running, streams=gs.streams)
    diag = dict(cost=cost,
                mass_integral=np.stack([s_m["integral"], s_m2["integral"]], axis=-1),
                mass_min_density=np.stack([s_m["min_density"], s_m2["min_density"]], axis=-1))
    return new, diag


def step(state: SimState, cfg: SimConfig, order: dict | None = None) -> tuple[SimState, SimRecord]:
    """Advance both groups by one ``dt`` and return the new state and the step's record.

    ``order`` optionally maps a group to a permutation of its agents; the
    agents are then processed in that order. Results are reported in agent
    index order either way.
    """
    comp = components(cfg)
    t = state.t
    k = state.step_index
    order = order or {}
    groups = {}
    inverse = {}
    for g in GroupId:
        gs = state.group(g).copy()
        if g in order:
            perm = np.asarray(order[g])
            gs = gs.take(perm)
            inverse[g] = np.argsort(perm)
        groups[g] = gs

    means = {g: empirical_group_mean(groups[g].x).value for g in GroupId}
    terms = {g: _group_terms(cfg, comp, groups[g], k, t, means) for g in GroupId}
    new_groups, records = {}, {}
    for g in GroupId:
        gs = groups[g]
        norms = gs.weight_norms()
        new_gs, diag = _advance_group(cfg, comp, gs, terms[g], cfg.coupling_gain * means[g.other], k)
        tm = terms[g]
        records[g] = GroupRecord(
            x=gs.x, u=tm["u"], noise=tm["noise"], e_hji=tm["e_hji"], e_fpk=tm["e_fpk"],
            e_u_norm=np.linalg.norm(tm["e_u"], axis=-1), e_hji_other=tm["e_hji2"], e_fpk_other=tm["e_fpk2"],
            weight_norms=norms, cost=diag["cost"], mass_integral=diag["mass_integral"],
            mass_min_density=diag["mass_min_density"], mu_own=gs.mu_own, mu_other=gs.mu_other,
            fpk_clamped=tm["clamped"])
        if g in inverse:
            inv = inverse[g]
            new_gs = new_gs.take(inv)
            rec = records[g]
            records[g] = dataclasses.replace(
                rec, **{f.name: getattr(rec, f.name)[inv] for f in dataclasses.fields(rec)
                        if isinstance(getattr(rec, f.name), np.ndarray)},
                weight_norms={kk: v[inv] for kk, v in rec.weight_norms.items()})
        new_groups[g] = new_gs

    p, e = records[GroupId.PURSUER], records[GroupId.EVADER]
    record = SimRecord(t=t, step_index=k, pursuers=p, evaders=e, xi=p.x - e.x,
                       xi_bar=means[GroupId.PURSUER] - means[GroupId.EVADER], means=means)
    new_means = {g: empirical_group_mean(new_groups[g].x).value for g in GroupId}
    new_state = SimState(k + 1, state.dt, new_groups[GroupId.PURSUER], new_groups[GroupId.EVADER], new_means)
    return new_state, record


# -------------------------------------------------------------------- sinks

def _fmt(v: float) -> str:
    return "%.17g" % v


def record_rows(rec: SimRecord) -> Iterable[list[str]]:
    for g in GroupId:
        gr = rec.group(g)
        wn = gr.weight_norms
        cols = np.column_stack([gr.x, gr.e_hji, gr.e_fpk, gr.e_u_norm, wn["w_v"], wn["w_m"], wn["w_u"],
                                wn["w_v2"], wn["w_m2"], rec.xi, gr.cost])
        t = _fmt(rec.t)
        for i, row in enumerate(cols.tolist()):
            yield [t, g.value, str(i)] + [_fmt(v) for v in row]


class CsvSink:
    """Per-agent metrics, one row per record per agent."""

    def __init__(self, path, every: int = 1):
        self.path = Path(path)
        self.every = every
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)
        self.rows = 0

    def write(self, rec: SimRecord):
        if rec.step_index % self.every:
            return
        for row in record_rows(rec):
            self._w.writerow(row)
            self.rows += 1

    def close(self):
        self._fh.close()


class JsonlSink:
    """Per-step group summary mirrored as JSON lines."""

    def __init__(self, path, every: int = 1):
        self._fh = open(path, "w")
        self.every = every

    def write(self, rec: SimRecord):
        if rec.step_index % self.every:
            return
        doc = {"t": rec.t, "xi_bar": rec.xi_bar.tolist(),
               "means": {g.value: v.tolist() for g, v in rec.means.items()}}
        for g in GroupId:
            gr = rec.group(g)
            doc[g.value] = {
                "x": gr.x.tolist(), "e_hji": gr.e_hji.tolist(), "e_fpk": gr.e_fpk.tolist(),
                "e_u_norm": gr.e_u_norm.tolist(), "cost": gr.cost.tolist(),
                "weight_norms": {k: v.tolist() for k, v in gr.weight_norms.items()},
            }
        self._fh.write(json.dumps(doc) + "\n")

    def close(self):
        self._fh.close()


class WeightSink:
    """Weight snapshots, one CSV per agent: ``t, role, target_group, w_0 ...``."""

    def __init__(self, directory, cfg: SimConfig, every: int = 100):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.every = every
        self.cfg = cfg
        self._state: SimState | None = None

    def observe(self, state: SimState):
        if state.step_index % self.every:
            return
        comp = components(self.cfg)
        width = max(comp.critic_basis.dim, comp.mass_basis.dim,
                    comp.actor_basis.dim * max(m.control_dim for m in comp.models.values()))
        for g in GroupId:
            gs = state.group(g)
            for i in range(gs.n):
                path = self.dir / f"{g.value}_{int(gs.streams.indices[i]):04d}.csv"
                new = not path.exists()
                with open(path, "a", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    if new:
                        w.writerow(["t", "role", "target_group"] + [f"w_{j}" for j in range(width)])
                    for key, role, target in (("w_v", "critic", g), ("w_u", "actor", g), ("w_m", "mass", g),
                                              ("w_v2", "critic", g.other), ("w_m2", "mass", g.other)):
                        vals = getattr(gs, key)[i].ravel()
                        w.writerow([_fmt(state.t), role, target.value] + [_fmt(v) for v in vals]
                                   + [""] * (width - vals.size))

    def write(self, rec):
        pass

    def close(self):
        pass


def export_csv(records: Iterable[SimRecord], path) -> int:
    """Write records to ``path`` in the fixed CSV schema; return the data-row count."""
    sink = CsvSink(path)
    try:
        for rec in records:
            sink.write(rec)
    finally:
        sink.close()
    return sink.rows


# ---------------------------------------------------------------------- run

@dataclass(frozen=True)
class InterceptionEvent:
    """First step at which the two group centers came within the capture radius."""

    t_hit: float | None = None

    @property
    def occurred(self) -> bool:
        return self.t_hit is not None


@dataclass
class Summary:
    final_t: float
    n_records: int
    interception: InterceptionEvent
    final_residual_rms: dict
    max_weight_norms: dict
    wall_time_s: float
    fpk_clamped: int = 0
    aborted: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run(cfg: SimConfig, sinks: Iterable = (), state: SimState | None = None) -> Summary:
    """Initialize and step to ``t_final``, streaming records into ``sinks``.

    On a numerical abort the sinks are flushed, the summary is attached to
    the exception as ``exc.summary`` and the exception is re-raised.
    """
    from .core.config import validate_config

    validate_config(cfg)
    sinks = list(sinks)
    t0 = time.perf_counter()
    state = state or initialize(cfg)
    n_steps = cfg.n_steps
    hit = None
    max_norms = {g.value: {k: 0.0 for k in WEIGHT_KEYS} for g in GroupId}
    clamped = 0
    rec = None
    n_rec = 0

    def summary(aborted=None):
        rms = {}
        if rec is not None:
            for g in GroupId:
                gr = rec.group(g)
                rms[g.value] = {"e_hji": float(np.sqrt(np.mean(gr.e_hji ** 2))),
                                "e_fpk": float(np.sqrt(np.mean(gr.e_fpk ** 2))),
                                "e_u": float(np.sqrt(np.mean(gr.e_u_norm ** 2)))}
        return Summary(final_t=state.t, n_records=n_rec, interception=InterceptionEvent(hit), final_residual_rms=rms,
                       max_weight_norms=max_norms, wall_time_s=time.perf_counter() - t0,
                       fpk_clamped=clamped, aborted=aborted)

    for s in sinks:
        if hasattr(s, "observe"):
            s.observe(state)
    try:
        while state.step_index < n_steps:
            state, rec = step(state, cfg)
            n_rec += 1
            for g in GroupId:
                gr = rec.group(g)
                for k, v in gr.weight_norms.items():
                    max_norms[g.value][k] = max(max_norms[g.value][k], float(v.max()))
                clamped += gr.fpk_clamped
            if hit is None and float(np.linalg.norm(rec.xi_bar)) <= cfg.capture_radius:
                hit = rec.t
            for s in sinks:
                s.write(rec)
                if hasattr(s, "observe"):
                    s.observe(state)
    except NumericalAbort as exc:
        log.error("run aborted at t=%.4f: %s", state.t, exc)
        for s in sinks:
            s.close()
        exc.summary = summary(aborted=f"{type(exc).__name__}: {exc}")
        exc.state = state
        raise
    for s in sinks:
        s.close()
    return summary()
