"""Experiment configuration: schema, defaults, validation and TOML loading.

The file is TOML with sections ``[sim]``, ``[group.pursuer]``,
``[group.evader]``, ``[learning]``, ``[grid]`` and ``[basis]``. Keys are the
:class:`SimConfig` field names; matrices and vectors are row-major comma
lists, either as a string (``"2,0,0,2"``) or a TOML array.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .types import GroupId, Grid

BASIS_KINDS = ("polynomial_quadratic", "gaussian_rbf_grid")
COST_RULES = ("left", "trapezoid")
WARM_STARTS = ("none", "lqr")


@dataclass(frozen=True)
class BasisSpec:
    critic_kind: str = "polynomial_quadratic"
    actor_kind: str = "polynomial_quadratic"
    mass_kind: str = "gaussian_rbf_grid"
    rbf_centers_per_axis: int = 7
    rbf_bandwidth: float = 1.25


@dataclass(frozen=True)
class SimConfig:
    n_agents_per_group: int = 100
    dt: float = 0.01
    t_final: float = 100.0
    t_explore: float = 50.0
    explore_amplitude: float = 0.5
    sigma_1: float = 0.02
    sigma_2: float = 0.02
    alpha_h: float = 1.0
    alpha_m: float = 1.0
    alpha_u: float = 1.0
    Q1: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(2))
    Q2: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(2))
    R1: np.ndarray = field(default_factory=lambda: np.array([[2.0]]))
    R2: np.ndarray = field(default_factory=lambda: np.array([[2.0]]))
    grid_bounds: tuple = (-4.0, 4.0, -4.0, 4.0)
    grid_resolution: tuple = (33, 33)
    fd_step: float = 1e-3
    master_seed: int = 0
    basis_spec: BasisSpec = field(default_factory=BasisSpec)
    init_weight_scale: float = 0.0
    init_state_mean: dict = field(default_factory=lambda: {
        GroupId.PURSUER: np.zeros(2), GroupId.EVADER: np.zeros(2)})
    init_state_cov: dict = field(default_factory=lambda: {
        GroupId.PURSUER: np.eye(2), GroupId.EVADER: np.eye(2)})
    # Settings below are not part of the algorithm itself but control the
    # experiment harness.
    pursuer_model: str = "benchmark_pursuer"
    evader_model: str = "benchmark_evader"
    model_tables: dict = field(default_factory=dict)
    coupling_gain: float = 1.0
    capture_radius: float = 0.05
    blowup_guard: float = 1e6
    w_max: float = 1e4
    evader_uses_acm: bool = True
    warm_start: str = "none"
    record_every: int = 1
    cost_rule: str = "left"

    @property
    def grid(self) -> Grid:
        return Grid(tuple(self.grid_bounds), tuple(self.grid_resolution))

    @property
    def n_steps(self) -> int:
        # tolerate t_final/dt landing a hair below an integer
        return int(math.floor(self.t_final / self.dt + 1e-9))

    def sigma(self, group: GroupId) -> float:
        return self.sigma_1 if group is GroupId.PURSUER else self.sigma_2

    def Q(self, group: GroupId) -> np.ndarray:
        return self.Q1 if group is GroupId.PURSUER else self.Q2

    def R(self, group: GroupId) -> np.ndarray:
        return self.R1 if group is GroupId.PURSUER else self.R2

    def model_name(self, group: GroupId) -> str:
        return self.pursuer_model if group is GroupId.PURSUER else self.evader_model

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain JSON-compatible representation, stable across reloads."""
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            out[f.name] = _plain(getattr(self, f.name))
        return out

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, BasisSpec):
        return dataclasses.asdict(value)
    if isinstance(value, dict):
        return {(k.value if isinstance(k, GroupId) else str(k)): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, float):
        return float(repr(value)) if math.isfinite(value) else repr(value)
    return value


# ---------------------------------------------------------------- validation

def _check_symmetric(name: str, m: np.ndarray):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValidationError(f"{name} not symmetric")


def check_psd(name: str, m: np.ndarray):
    _check_symmetric(name, m)
    lam = np.linalg.eigvalsh(m)
    if lam.min() < -1e-12 * max(1.0, np.abs(lam).max()):
        raise ValidationError(f"{name} not positive semi-definite")


def check_pd(name: str, m: np.ndarray):
    _check_symmetric(name, m)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValidationError(f"{name} not positive definite") from None


def validate_config(cfg: SimConfig) -> SimConfig:
    """Check every invariant of ``cfg``; return it unchanged or raise ValidationError."""
    if not (isinstance(cfg.n_agents_per_group, int) and cfg.n_agents_per_group > 0):
        raise ValidationError("n_agents_per_group must be a positive integer")
    if not cfg.dt > 0:
        raise ValidationError("dt must be > 0")
    if not cfg.t_final > 0:
        raise ValidationError("t_final must be > 0")
    if not cfg.dt < cfg.t_final:
        raise ValidationError("dt must be < t_final")
    if not (0 <= cfg.t_explore <= cfg.t_final):
        raise ValidationError("t_explore must satisfy 0 <= t_explore <= t_final")
    for name in ("sigma_1", "sigma_2", "init_weight_scale",
                 "explore_amplitude", "coupling_gain"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{name} must be finite and >= 0")
    for name in ("alpha_h", "alpha_m", "alpha_u", "fd_step", "capture_radius", "blowup_guard", "w_max"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be finite and > 0")
    check_psd("Q1", cfg.Q1)
    check_psd("Q2", cfg.Q2)
    check_pd("R1", cfg.R1)
    check_pd("R2", cfg.R2)
    for m in (cfg.Q1, cfg.Q2):
        if m.shape != (2, 2):
            raise ValidationError("Q matrices must be 2x2")
    if len(cfg.grid_bounds) != 4 or len(cfg.grid_resolution) != 2:
        raise ValidationError("grid_bounds needs 4 numbers and grid_resolution 2 integers")
    cfg.grid  # Grid validates area and resolution
    b = cfg.basis_spec
    for kind in (b.critic_kind, b.actor_kind, b.mass_kind):
        if kind not in BASIS_KINDS:
            raise ValidationError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    if b.rbf_centers_per_axis < 1 or not b.rbf_bandwidth > 0:
        raise ValidationError("rbf_centers_per_axis must be >= 1 and rbf_bandwidth > 0")
    if cfg.record_every < 1:
        raise ValidationError("record_every must be >= 1")
    if cfg.cost_rule not in COST_RULES:
        raise ValidationError(f"cost_rule must be one of {COST_RULES}")
    if cfg.warm_start not in WARM_STARTS:
        raise ValidationError(f"warm_start must be one of {WARM_STARTS}")
    for g in GroupId:
        mean = np.asarray(cfg.init_state_mean[g], dtype=float)
        if mean.shape != (2,) or not np.all(np.isfinite(mean)):
            raise ValidationError(f"init_state_mean for {g.value} must be 2 finite numbers")
        check_psd(f"init_state_cov ({g.value})", np.asarray(cfg.init_state_cov[g], dtype=float))
    return cfg


# ------------------------------------------------------------------- loading

_SECTION_KEYS = {
    "sim": {"n_agents_per_group", "dt", "t_final", "t_explore", "explore_amplitude", "master_seed",
            "capture_radius", "blowup_guard", "coupling_gain", "record_every", "cost_rule"},
    "learning": {"alpha_h", "alpha_m", "alpha_u", "init_weight_scale", "warm_start",
                 "w_max", "evader_uses_acm"},
    "grid": {"grid_bounds", "grid_resolution", "fd_step"},
    "basis": {"critic_kind", "actor_kind", "mass_kind", "rbf_centers_per_axis", "rbf_bandwidth"},
}
_GROUP_KEYS = {
    GroupId.PURSUER: {"model", "sigma_1", "Q1", "R1", "init_state_mean", "init_state_cov",
                      "f_coeffs", "g_coeffs"},
    GroupId.EVADER: {"model", "sigma_2", "Q2", "R2", "init_state_mean", "init_state_cov",
                     "f_coeffs", "g_coeffs"},
}
_INT_KEYS = {"n_agents_per_group", "master_seed", "record_every", "rbf_centers_per_axis"}


def _numbers(value, key: str) -> np.ndarray:
    if isinstance(value, str):
        try:
            vals = [float(tok) for tok in value.replace(";", ",").split(",") if tok.strip()]
        except ValueError:
            raise ParseError(f"{key}: expected a comma list of numbers, got {value!r}") from None
        return np.array(vals, dtype=float)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.array([float(value)])
    if isinstance(value, list):
        try:
            return np.array(value, dtype=float).ravel()
        except (TypeError, ValueError):
            raise ParseError(f"{key}: expected numbers, got {value!r}") from None
    raise ParseError(f"{key}: expected a number list, got {type(value).__name__}")


def _matrix(value, key: str) -> np.ndarray:
    flat = _numbers(value, key)
    n = int(round(math.sqrt(flat.size)))
    if n * n != flat.size or n == 0:
        raise ValidationError(f"{key}: {flat.size} entries do not form a square matrix")
    return flat.reshape(n, n)


def _scalar(value, key: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(f"{key} must be an integer")
        return int(value)
    return float(value)


def config_from_dict(doc: dict) -> SimConfig:
    """Build and validate a :class:`SimConfig` from a parsed TOML document."""
    known = set(_SECTION_KEYS) | {"group"}
    extra = set(doc) - known
    if extra:
        raise ValidationError(f"unknown section(s): {sorted(extra)}")
    kw: dict[str, Any] = {}
    for section, keys in _SECTION_KEYS.items():
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise ParseError(f"[{section}] must be a table")
        bad = set(body) - keys
        if bad:
            raise ValidationError(f"unknown key(s) in [{section}]: {sorted(bad)}")
        for key, value in body.items():
            if key in ("grid_bounds",):
                kw[key] = tuple(float(v) for v in _numbers(value, key))
            elif key == "grid_resolution":
                res = _numbers(value, key)
                if not np.all(res == np.round(res)):
                    raise ValidationError("grid_resolution must be integers")
                kw[key] = tuple(int(v) for v in res)
            elif key in ("cost_rule", "warm_start", "critic_kind", "actor_kind", "mass_kind"):
                if not isinstance(value, str):
                    raise ParseError(f"{key} must be a string")
                kw[key] = value
            elif key == "evader_uses_acm":
                if not isinstance(value, bool):
                    raise ParseError("evader_uses_acm must be true or false")
                kw[key] = value
            else:
                kw[key] = _scalar(value, key, int if key in _INT_KEYS else float)
    basis_kw = {k: kw.pop(k) for k in list(kw) if k in _SECTION_KEYS["basis"]}
    kw["basis_spec"] = BasisSpec(**basis_kw)

    groups = doc.get("group", {})
    if not isinstance(groups, dict):
        raise ParseError("[group] must be a table")
    bad = set(groups) - {g.value for g in GroupId}
    if bad:
        raise ValidationError(f"unknown group(s): {sorted(bad)}")
    defaults = SimConfig()
    means = dict(defaults.init_state_mean)
    covs = dict(defaults.init_state_cov)
    tables = {}
    for g in GroupId:
        body = groups.get(g.value, {})
        bad = set(body) - _GROUP_KEYS[g]
        if bad:
            raise ValidationError(f"unknown key(s) in [group.{g.value}]: {sorted(bad)}")
        suffix = "1" if g is GroupId.PURSUER else "2"
        for key, value in body.items():
            if key == "model":
                kw[f"{g.value}_model"] = str(value)
            elif key.startswith("sigma"):
                kw[key] = _scalar(value, key)
            elif key in (f"Q{suffix}", f"R{suffix}"):
                kw[key] = _matrix(value, key)
            elif key == "init_state_mean":
                means[g] = _numbers(value, key)
            elif key == "init_state_cov":
                covs[g] = _matrix(value, key)
        if "f_coeffs" in body or "g_coeffs" in body:
            tables[g.value] = {"f_coeffs": body.get("f_coeffs"), "g_coeffs": body.get("g_coeffs")}
    kw["init_state_mean"] = means
    kw["init_state_cov"] = covs
    kw["model_tables"] = tables
    try:
        cfg = SimConfig(**kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return validate_config(cfg)


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return loads_config(text)


def loads_config(text: str) -> SimConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None
    return config_from_dict(doc)
