import csv
import dataclasses
import json

import numpy as np
import pytest

from acmgame import engine
from acmgame.cli import main
from acmgame.core import GroupId, SimConfig
from acmgame.core.config import BasisSpec

P, E = GroupId.PURSUER, GroupId.EVADER
ZERO_F = [[0] * 6, [0] * 6]
ZERO_G = [[[0] * 6], [[0] * 6]]
DECAY_F = [[0, -1, 0, 0, 0, 0], [0, 0, -1, 0, 0, 0]]

SMALL = SimConfig(n_agents_per_group=4, t_final=0.5, t_explore=0.2, grid_resolution=(17, 17),
                  basis_spec=BasisSpec(rbf_centers_per_axis=5), master_seed=7, warm_start="lqr")


def polynomial(cfg, f, g=ZERO_G, **kw):
    return cfg.replace(pursuer_model="polynomial", evader_model="polynomial",
                       model_tables={"pursuer": {"f_coeffs": f, "g_coeffs": g},
                                     "evader": {"f_coeffs": f, "g_coeffs": g}}, **kw)


def run_records(cfg):
    out = []

    class Keep:
        def write(self, rec):
            out.append(rec)

        def close(self):
            pass

    summary = engine.run(cfg, [Keep()])
    return out, summary


# ------------------------------------------------------------ initialize

def test_initialize_is_deterministic():
    assert engine.initialize(SMALL).digest() == engine.initialize(SMALL).digest()
    assert engine.initialize(SMALL).digest() != engine.initialize(SMALL.replace(master_seed=8)).digest()


def test_full_population_size():
    s = engine.initialize(SimConfig(grid_resolution=(9, 9), basis_spec=BasisSpec(rbf_centers_per_axis=3)))
    assert s.pursuers.n + s.evaders.n == 200


def test_zero_scale_gives_zero_weights():
    s = engine.initialize(SimConfig(n_agents_per_group=3, grid_resolution=(9, 9), basis_spec=BasisSpec(rbf_centers_per_axis=3)))
    for gs in (s.pursuers, s.evaders):
        for key in ("w_v", "w_u", "w_v2"):
            assert not np.any(getattr(gs, key))
        # the degenerate zero mass is seeded flat so that it can be normalized
        assert np.all(gs.w_m > 0) and np.all(gs.z_m > 0)


def test_mass_seed_is_normalized():
    s = engine.initialize(SMALL)
    stats = engine.components(SMALL).mass_quad.normalize(s.pursuers.w_m)
    np.testing.assert_allclose(stats["integral"], 1.0, atol=1e-12)


def test_lqr_warm_start_stabilizes_each_group():
    from scipy.linalg import solve_continuous_are

    from acmgame.dynamics import build_model, linearize

    s = engine.initialize(SMALL)
    for g, gs in ((P, s.pursuers), (E, s.evaders)):
        model = build_model(SMALL, g)
        A, B = linearize(model)
        K = np.linalg.solve(model.R, B.T @ solve_continuous_are(A, B, model.Q, model.R))
        # actor gains on x1, x2 reproduce -K (the relative-position features carry no weight)
        np.testing.assert_allclose(gs.w_u[0, 1:3, 0], -K[0], atol=1e-8)
        assert np.all(np.linalg.eigvals(A - B @ K).real < 0)


# ------------------------------------------------------------------ step

def test_frozen_system_is_unchanged():
    # learning rates of zero are outside the validated range, so this drives step() directly
    cfg = polynomial(SMALL, ZERO_F, sigma_1=0.0, sigma_2=0.0, explore_amplitude=0.0,
                     alpha_h=0.0, alpha_m=0.0, alpha_u=0.0, init_weight_scale=0.3, warm_start="none",
                     coupling_gain=0.0)
    s0 = engine.initialize(cfg)
    s1, _ = engine.step(s0, cfg)
    for g in GroupId:
        a, b = s0.group(g), s1.group(g)
        for key in ("x", "w_v", "w_u", "w_m", "w_v2", "w_m2"):
            np.testing.assert_array_equal(getattr(a, key), getattr(b, key))


def test_single_pursuer_decays_like_the_oracle():
    cfg = polynomial(SMALL, DECAY_F, n_agents_per_group=1, sigma_1=0.0, sigma_2=0.0, coupling_gain=0.0,
                     dt=1e-3, t_final=1.0, t_explore=0.0, warm_start="none",
                     init_state_mean={P: np.array([1.0, 1.0]), E: np.zeros(2)},
                     init_state_cov={P: np.zeros((2, 2)), E: np.zeros((2, 2))})
    s = engine.initialize(cfg)
    np.testing.assert_array_equal(s.pursuers.x[0], [1, 1])
    for _ in range(cfg.n_steps):
        s, _ = engine.step(s, cfg)
    np.testing.assert_allclose(s.pursuers.x[0], np.exp(-1.0) * np.ones(2), atol=1e-2)


def test_record_count_and_final_time():
    cfg = SMALL.replace(t_final=1.0, dt=0.1, t_explore=0.5)
    recs, summary = run_records(cfg)
    assert len(recs) == 10 and summary.n_records == 10
    assert summary.final_t == pytest.approx(1.0, abs=1e-12)
    assert [r.step_index for r in recs] == list(range(10))


def test_reversed_processing_order_is_identical():
    s = engine.initialize(SMALL)
    for _ in range(3):
        s, _ = engine.step(s, SMALL)
    rev = {g: np.arange(SMALL.n_agents_per_group)[::-1] for g in GroupId}
    a, ra = engine.step(s, SMALL)
    b, rb = engine.step(s, SMALL, order=rev)
    assert a.digest() == b.digest()
    np.testing.assert_array_equal(ra.pursuers.e_hji, rb.pursuers.e_hji)
    np.testing.assert_array_equal(ra.evaders.e_fpk, rb.evaders.e_fpk)


def test_xi_bar_definition_and_permutation_invariance():
    s = engine.initialize(SMALL.replace(n_agents_per_group=9))
    _, r = engine.step(s, SMALL.replace(n_agents_per_group=9))
    from acmgame.dynamics import empirical_group_mean

    np.testing.assert_array_equal(r.xi_bar, empirical_group_mean(r.pursuers.x).value
                                  - empirical_group_mean(r.evaders.x).value)
    perm = np.random.default_rng(0).permutation(9)
    np.testing.assert_array_equal(
        empirical_group_mean(r.pursuers.x[perm]).value - empirical_group_mean(r.evaders.x[::-1]).value, r.xi_bar)
    np.testing.assert_array_equal(r.xi, r.pursuers.x - r.evaders.x)


def test_exploration_stops_on_schedule():
    recs, _ = run_records(SMALL.replace(explore_amplitude=1.0))
    for r in recs:
        for gr in (r.pursuers, r.evaders):
            if r.t >= SMALL.t_explore:
                assert not np.any(gr.noise)
            else:
                assert np.all(np.abs(gr.noise) <= 1.0) and np.any(gr.noise)


def test_records_are_finite_and_masses_valid():
    recs, _ = run_records(SMALL)
    for r in recs:
        for gr in (r.pursuers, r.evaders):
            for f in dataclasses.fields(gr):
                v = getattr(gr, f.name)
                if isinstance(v, np.ndarray):
                    assert np.all(np.isfinite(v)), f.name
            np.testing.assert_allclose(gr.mass_integral, 1.0, atol=1e-6)
            assert np.all(gr.mass_min_density >= 0)


def test_interception_and_summary():
    recs, summary = run_records(SMALL.replace(capture_radius=1e6))
    assert summary.interception.occurred and summary.interception.t_hit == 0.0
    recs, summary = run_records(SMALL.replace(capture_radius=1e-12))
    assert not summary.interception.occurred
    assert set(summary.max_weight_norms) == {"pursuer", "evader"}
    json.dumps(summary.to_dict())


# ------------------------------------------------------------------- csv

def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_empty_stream_writes_header_only(tmp_path):
    assert engine.export_csv([], tmp_path / "m.csv") == 0
    rows = _read(tmp_path / "m.csv")
    assert rows == [list(engine.CSV_COLUMNS)]


def test_row_count_and_bit_exact_round_trip(tmp_path):
    # one agent per group: two agents in all
    cfg = SMALL.replace(n_agents_per_group=1, t_final=0.03, t_explore=0.02)
    recs, _ = run_records(cfg)
    assert len(recs) == 3
    assert engine.export_csv(recs, tmp_path / "m.csv") == 6
    header, *rows = _read(tmp_path / "m.csv")
    assert header == ["t", "group", "agent", "x1", "x2", "e_hji", "e_fpk", "e_u_norm", "w_v_norm", "w_m_norm",
                      "w_u_norm", "w_v2_norm", "w_m2_norm", "xi1", "xi2", "cost"]
    col = {name: i for i, name in enumerate(header)}
    by_key = {(float(r[col["t"]]), r[col["group"]], r[col["agent"]]): r for r in rows}
    for rec in recs:
        for g, gr in ((P, rec.pursuers), (E, rec.evaders)):
            row = by_key[(rec.t, g.value, "0")]
            assert float(row[col["x1"]]) == gr.x[0, 0]
            assert float(row[col["e_hji"]]) == gr.e_hji[0]
            assert float(row[col["w_m_norm"]]) == gr.weight_norms["w_m"][0]
            assert float(row[col["cost"]]) == gr.cost[0]
            assert float(row[col["xi1"]]) == rec.xi[0, 0]


def test_same_seed_same_bytes(tmp_path):
    for name in ("a.csv", "b.csv"):
        sink = engine.CsvSink(tmp_path / name)
        engine.run(SMALL, [sink])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# ------------------------------------------------------------------- cli

def _write_config(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


SMALL_TOML = """
[sim]
n_agents_per_group = 3
t_final = 0.2
t_explore = 0.1
[grid]
grid_resolution = [17, 17]
[basis]
rbf_centers_per_axis = 5
[learning]
warm_start = "lqr"
"""


def test_cli_simulate_writes_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path, SMALL_TOML)
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(cfg), "--seed", "3", "--out-dir", str(out), "--dump-weights", "--jsonl"])
    assert code == 0
    for name in ("config.json", "metrics.csv", "metrics.jsonl", "summary.json"):
        assert (out / name).exists()
    assert json.loads((out / "config.json").read_text())["master_seed"] == 3
    assert len(_read(out / "metrics.csv")) == 1 + 20 * 6
    weights = sorted((out / "weights").iterdir())
    assert len(weights) == 6
    header, *rows = _read(weights[0])
    assert header[:3] == ["t", "role", "target_group"] and len(rows) % 5 == 0
    assert "records=20" in capsys.readouterr().out


def test_cli_overrides(tmp_path):
    cfg = _write_config(tmp_path, SMALL_TOML)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--duration", "0.05", "--dt", "0.025"]) == 0
    assert json.loads((out / "summary.json").read_text())["n_records"] == 2


@pytest.mark.parametrize("extra, text", [
    ([], "[sim]\ndt = 0\n"),
    ([], "[sim\n"),
    (["--seed", "-1"], SMALL_TOML),
    ([], SMALL_TOML + '[group.pursuer]\nR1 = "2, 0, 0, 2"\n'),
])
def test_cli_validation_exit_code(tmp_path, extra, text):
    cfg = _write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "o")] + extra) == 2


def test_cli_numerical_abort_exit_code(tmp_path):
    text = SMALL_TOML.replace("t_final = 0.2", "t_final = 5.0").replace('"lqr"', '"none"') + """
[group.pursuer]
model = "polynomial"
f_coeffs = [[0, 50, 0, 0, 0, 0], [0, 0, 50, 0, 0, 0]]
g_coeffs = [[[0, 0, 0, 0, 0, 0]], [[0, 0, 0, 0, 0, 0]]]
"""
    cfg = _write_config(tmp_path, text)
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(out)]) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["aborted"] and summary["final_t"] < 5.0


def test_cli_check(capsys):
    assert main(["check"]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 4
