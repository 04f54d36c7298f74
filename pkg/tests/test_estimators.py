import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acmgame.basis import FeatureContext, fd_grad_x, polynomial_quadratic, rbf, rbf_lattice
from acmgame.core import DegenerateDensity, DimensionMismatch, GroupId, Grid, OutOfGridWarning, RoleMismatch
from acmgame.estimators import (
    LinearApproximator,
    MassField,
    MassQuadrature,
    Role,
    actor_eval,
    mass_density,
    mass_expectation,
    value_eval,
    value_grad_x,
)

POLY = polynomial_quadratic()
P = GroupId.PURSUER


def critic(w):
    return LinearApproximator(np.asarray(w, dtype=float), POLY, Role.CRITIC, P)


def unit(k, d=10):
    w = np.zeros(d)
    w[k] = 1.0
    return w


def test_value_examples():
    c = FeatureContext(np.array([3.0, 0.0]))
    assert value_eval(critic(np.zeros(10)), c) == 0
    assert value_eval(critic(unit(0)), c) == 1
    assert value_eval(critic(unit(3)), c) == 9
    np.testing.assert_array_equal(value_grad_x(critic(np.zeros(10)), c), [0, 0])
    np.testing.assert_array_equal(value_grad_x(critic(unit(3)), c), [6, 0])


def test_value_gradient_matches_fd():
    rng = np.random.default_rng(3)
    w = rng.normal(size=10)
    a = critic(w)
    x = rng.uniform(-3, 3, (100, 2))
    mo, mt = rng.uniform(-3, 3, (2, 100, 2))
    c = FeatureContext(x, mo, mt)
    fd = np.einsum("ndk,d->nk", fd_grad_x(POLY, FeatureContext(*(v.astype(np.longdouble) for v in (x, mo, mt)))).astype(float), w)
    g = value_grad_x(a, c)
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-5


@given(st.floats(-1e3, 1e3))
def test_critic_is_homogeneous_in_weights(s):
    rng = np.random.default_rng(0)
    w = rng.normal(size=10)
    c = FeatureContext(rng.normal(size=(5, 2)), rng.normal(size=2), rng.normal(size=2))
    np.testing.assert_allclose(value_eval(critic(s * w), c), s * value_eval(critic(w), c), rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(value_grad_x(critic(s * w), c), s * value_grad_x(critic(w), c), rtol=1e-12, atol=1e-9)


def test_actor_examples():
    c = FeatureContext(np.array([0.4, -2.0]))
    zero = LinearApproximator(np.zeros((10, 1)), POLY, Role.ACTOR, P)
    np.testing.assert_array_equal(actor_eval(zero, c, [0.0]), [0])
    const = LinearApproximator(0.7 * unit(0)[:, None], POLY, Role.ACTOR, P)
    np.testing.assert_allclose(actor_eval(const, c, [0.1]), [0.8], rtol=1e-15)
    w = np.random.default_rng(1).normal(size=(10, 1))
    one = actor_eval(LinearApproximator(w, POLY, Role.ACTOR, P), c)
    two = actor_eval(LinearApproximator(2 * w, POLY, Role.ACTOR, P), c)
    np.testing.assert_array_equal(two, 2 * one)


def test_role_and_dimension_errors():
    c = FeatureContext(np.zeros(2))
    actor = LinearApproximator(np.zeros((10, 1)), POLY, Role.ACTOR, P)
    with pytest.raises(RoleMismatch):
        value_eval(actor, c)
    with pytest.raises(RoleMismatch):
        actor_eval(critic(np.zeros(10)), c)
    with pytest.raises(DimensionMismatch):
        actor_eval(actor, c, [0.1, 0.2])
    with pytest.raises(DimensionMismatch):
        critic(np.zeros(9))


# --------------------------------------------------------------------- mass

SQUARE = Grid((-4.0, 4.0, -4.0, 4.0), (81, 81))


def field(centers, w, b=0.5, grid=SQUARE):
    basis = rbf(centers, b)
    return MassField(LinearApproximator(np.asarray(w, dtype=float), basis, Role.MASS, P), grid)


def test_single_bump_integrates_to_one():
    f = field([[0, 0]], [1.0])
    assert abs(f.integral() - 1) < 1e-12
    assert f.density_on_grid().min() >= 0


def test_zero_field_is_degenerate():
    with pytest.raises(DegenerateDensity):
        field([[0, 0]], [0.0])
    with pytest.raises(DegenerateDensity):
        field([[0, 0]], [-1.0])


def test_two_bumps_symmetric_density():
    f = field([[1, 0], [-1, 0]], [1.0, 1.0])
    x = np.random.default_rng(5).uniform(-3, 3, (200, 2))
    mirrored = x * [-1, 1]
    np.testing.assert_allclose(mass_density(f, x), mass_density(f, mirrored), rtol=0, atol=1e-12)


def test_expectation_of_offset_bump():
    grid = Grid((-2.0, 6.0, -5.0, 3.0), (81, 81))
    f = field([[2, -1]], [1.0], grid=grid)
    np.testing.assert_allclose(mass_expectation(f), [2, -1], atol=1e-3)


def test_expectation_of_symmetric_fields():
    f = field([[1.5, 0.5], [-1.5, -0.5]], [1.0, 1.0])
    np.testing.assert_allclose(mass_expectation(f), [0, 0], atol=1e-10)
    flat = MassField(LinearApproximator([1.0], rbf([[0, 0]], 1e6), Role.MASS, P), Grid((-1.0, 1.0, -1.0, 1.0), (21, 21)))
    np.testing.assert_allclose(mass_expectation(flat), [0, 0], atol=1e-10)


def test_expectation_converges_under_refinement():
    w = [1.0, 0.6, 0.3]
    centers = [[0.5, -0.3], [-1.0, 1.2], [1.4, 1.0]]
    coarse = field(centers, w, b=0.8, grid=Grid((-4.0, 4.0, -4.0, 4.0), (41, 41)))
    fine = field(centers, w, b=0.8, grid=Grid((-4.0, 4.0, -4.0, 4.0), (81, 81)))
    assert np.max(np.abs(mass_expectation(coarse) - mass_expectation(fine))) < 1e-3


def test_expectation_inside_bounds():
    rng = np.random.default_rng(8)
    basis = rbf_lattice(SQUARE, 5, 1.25)
    quad = MassQuadrature(basis, SQUARE)
    stats = quad.normalize(rng.uniform(-0.5, 1.0, (50, 25)))
    assert np.all(np.abs(stats["expectation"]) <= 4.0)
    np.testing.assert_allclose(stats["integral"], 1.0, atol=1e-12)
    assert np.all(stats["min_density"] >= 0)


def test_out_of_grid_query_is_clamped_and_flagged():
    f = field([[0, 0]], [1.0])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        edge = mass_density(f, [10.0, 0.0])
    assert any(issubclass(w.category, OutOfGridWarning) for w in caught)
    assert edge == pytest.approx(float(mass_density(f, [4.0, 0.0])))
