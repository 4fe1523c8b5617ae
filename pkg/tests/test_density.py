import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coupled_doubling import density as dens
from coupled_doubling.circle import ArcInterval, reduce, torus_distance
from coupled_doubling.density import GridDensity

M = 2**14


@pytest.fixture(scope="module")
def bump():
    return GridDensity.bump(0.3, 0.4, M)


# ---------------------------------------------------------------- the grid type

def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        GridDensity(np.ones(100))
    with pytest.raises(ValueError, match="negative"):
        GridDensity(np.r_[2.0, -0.0001, np.ones(6)])
    with pytest.raises(ValueError, match="normalised"):
        GridDensity(np.full(8, 2.0))
    with pytest.raises(ValueError, match="vanish"):
        GridDensity(np.ones(8), ArcInterval(0.0, 0.5))


def test_builders_are_normalised(bump):
    for f in (bump, GridDensity.uniform(M), GridDensity.sine(0.3, M), GridDensity.bump(0.95, 0.2, 1024)):
        assert f.mass() == pytest.approx(1.0, abs=1e-12)
        assert np.all(f.values >= 0)


def test_bump_support_and_hull(bump):
    assert bump.support.start == pytest.approx(0.1)
    assert bump.support.length == pytest.approx(0.4)
    hull = bump.hull()
    assert abs(hull.length - 0.4) <= 2 * bump.h


def test_interpolation_is_cyclic_and_linear():
    f = GridDensity.from_values(np.array([1.0, 3.0, 1.0, 3.0]))
    assert f(0.125) == pytest.approx(1.0)  # values 0.5, 1.5 after normalisation
    assert f(1.125) == pytest.approx(f(0.125))
    assert f(0.875) == pytest.approx(0.5 * (f.values[3] + f.values[0]))


# ---------------------------------------------------------------- the map F_f

@pytest.mark.parametrize("eps", [0.2, 0.6])
def test_uniform_density_gives_doubling_map(eps):
    f = GridDensity.uniform(M)
    fmap = dens.build_map(f, eps)
    x = f.grid
    assert np.max(torus_distance(fmap(x), reduce(2 * x))) < 1e-14
    np.testing.assert_array_equal(fmap.derivative(x), 2.0)


def test_plateau_formula(bump):
    eps = 0.75
    fmap = dens.build_map(bump, eps)
    b1, b2 = 0.1, 0.5
    x = np.linspace(b2 - 0.5 + 1e-9, b1 + 0.5 - 1e-9, 101)
    centre = dens.center_of_mass(bump)
    np.testing.assert_allclose(fmap.lift(x), 2 * (1 - eps) * x + 2 * eps * centre, atol=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.3, 0.75])
def test_degree_two_lift(eps, bump):
    fmap = dens.build_map(bump, eps)
    # exact up to the rounding of adding 2 to lift(0)
    assert abs(fmap.lift(1.0) - fmap.lift(0.0) - 2.0) <= 4e-16
    y = np.linspace(0, 1, 257)
    np.testing.assert_allclose(fmap.lift(y + 1) - fmap.lift(y), 2.0, atol=1e-12)
    assert np.all(np.diff(fmap.lift(y)) > 0)


@pytest.mark.parametrize("f", [GridDensity.sine(0.4, M), GridDensity.bump(0.7, 0.3, M)])
def test_derivative_matches_finite_differences(f):
    fmap = dens.build_map(f, 0.6)
    y = np.linspace(0.01, 0.99, 400)
    h = 1e-6
    fd = (fmap.lift(y + h) - fmap.lift(y - h)) / (2 * h)
    np.testing.assert_allclose(fd, fmap.derivative(y), atol=1e-4)


@pytest.mark.parametrize("eps", [0.2, 0.75])
def test_preimages_invert_the_map(eps, bump):
    fmap = dens.build_map(bump, eps)
    x = np.linspace(0, 1, 50, endpoint=False)
    y1, y2 = fmap.preimages(x)
    assert np.max(torus_distance(fmap(y1), x)) < 1e-11
    assert np.max(torus_distance(fmap(y2), x)) < 1e-11
    assert np.all(torus_distance(y1, y2) > 1e-3)


# ---------------------------------------------------------------- transfer operator

@pytest.mark.parametrize("eps", [0.2, 0.6])
def test_uniform_is_exact_fixed_point(eps):
    f1 = dens.transfer_step(GridDensity.uniform(M), eps)
    np.testing.assert_array_equal(f1.values, 1.0)


@given(st.floats(0.0, 0.95), st.floats(0.0, 0.99), st.floats(0.05, 0.5), st.floats(0.0, 0.9))
def test_transfer_preserves_mass_and_positivity(eps, c, w, a):
    for f in (GridDensity.bump(c, w, 1024), GridDensity.sine(a, 1024)):
        g = dens.transfer_step(f, eps)
        assert abs(g.mass() - 1.0) < 1e-9
        assert np.all(g.values >= 0)


def test_raw_mass_defect_small_when_resolved(bump):
    for f, eps in ((bump, 0.75), (GridDensity.sine(0.3, M), 0.4)):
        assert abs(dens.transfer_step(f, eps).raw_mass_defect) < 1e-9


def test_bump_contracts_by_half(bump):
    g = dens.transfer_step(bump, 0.75)
    assert abs(g.support.length - 0.2) <= 2 * bump.h
    assert g.sup() / bump.sup() == pytest.approx(2.0, rel=1e-2)
    assert torus_distance(dens.center_of_mass(g), 2 * dens.center_of_mass(bump)) < 1e-3


def test_half_coupling_translates(bump):
    g = dens.transfer_step(bump, 0.5)
    shift = float(dens.build_map(bump, 0.5)(0.0))
    assert abs(g.support.length - bump.support.length) <= 2 * bump.h
    np.testing.assert_allclose(g.values, bump(reduce(bump.grid - shift)), atol=1e-9)


def test_total_variation_examples():
    assert dens.total_variation(GridDensity.uniform(M)) == 0.0
    assert dens.total_variation(GridDensity.sine(0.025, M)) == pytest.approx(0.1, rel=1e-6)


def test_one_step_tv_ratio():
    f0 = GridDensity.sine(0.025, M)
    c = dens.contraction_factor(0.5, 0.1)
    assert c == pytest.approx(0.8310, abs=1e-4)
    f1 = dens.transfer_step(f0, 0.5)
    assert dens.total_variation(f1) / dens.total_variation(f0) <= c + 0.01


def test_verify_contraction():
    assert dens.epsilon_tv_bound(0.1) == pytest.approx(1 / 1.4)
    with pytest.raises(ValueError):
        dens.verify_contraction(GridDensity.sine(0.025, 1024), 0.72, 5)
    rep = dens.verify_contraction(GridDensity.uniform(1024), 0.6, 5)
    assert rep.tv == [0.0] * 6 and rep.holds
    rep = dens.verify_contraction(GridDensity.sine(0.025, M), 0.5, 20)
    assert rep.holds and rep.tv[-1] <= 0.1 * 0.8415**20 * 1.05


# ---------------------------------------------------------------- center of mass and collapse

def test_center_of_mass_examples():
    assert dens.center_of_mass(GridDensity.bump(0.3, 0.2, M)) == pytest.approx(0.3, abs=1e-9)
    wrapped = GridDensity.bump(0.0, 0.2, M)
    assert torus_distance(dens.center_of_mass(wrapped), 0.0) < 1e-9
    with pytest.raises(dens.SupportTooWideError, match="support too wide"):
        dens.center_of_mass(GridDensity.bump(0.5, 0.7, M))


def test_midpoint_offset_is_zero_for_symmetric_bump(bump):
    assert dens.support_midpoint_offset(bump) == pytest.approx(0.0, abs=1e-9)


def test_collapse_examples():
    assert dens.collapse_threshold(0.7, 0.1) == pytest.approx(0.75)
    assert dens.collapsed_length(0.7, 0.1, 0.8) == pytest.approx(0.44)
    assert dens.collapsed_length(0.4, 0.0, 0.75) == pytest.approx(2 * 0.25 * 0.4)
    f = GridDensity.wing_density(0.2, 0.9, 0.1, M)
    assert dens.wing_mass(f) == pytest.approx(0.1, abs=1e-9)
    g = dens.one_step_collapse(f, 0.8)
    assert abs(g.support.length - 0.44) <= 2 * f.h
    with pytest.raises(dens.CollapsePreconditionError, match="collapse preconditions unmet"):
        dens.one_step_collapse(f, 0.7)


# ---------------------------------------------------------------- Monte Carlo

def test_monte_carlo_uniform():
    h = dens.monte_carlo_pushforward(GridDensity.uniform(1024), 0.4, 200_000, seed=1, bin_count=64)
    assert np.max(np.abs(h.probabilities() - 1 / 64)) < 5 * np.sqrt(1 / 64 / 200_000)


def test_monte_carlo_sample_count_validated():
    with pytest.raises(ValueError):
        dens.monte_carlo_pushforward(GridDensity.uniform(1024), 0.4, 0, seed=1)


def test_sampler_matches_density(bump):
    rng = np.random.default_rng(5)
    from coupled_doubling.stats import EmpiricalHistogram

    h = EmpiricalHistogram.from_samples(dens.sample_density(bump, 400_000, rng), 128)
    assert np.sum(np.abs(h.probabilities() - dens.bin_masses(bump, 128))) < 0.01


def test_operator_agrees_with_monte_carlo(bump):
    op = dens.bin_masses(dens.transfer_step(bump, 0.75), 256)
    mc = dens.monte_carlo_pushforward(bump, 0.75, 10**6, seed=12, bin_count=256)
    assert np.sum(np.abs(op - mc.probabilities())) <= 0.01


# ---------------------------------------------------------------- serialisation

def test_csv_round_trip(bump):
    g = dens.transfer_step(bump, 0.75)
    text = dens.density_to_csv(g)
    hdr = json.dumps(dens.density_header(g, 0.75, 1))
    back = dens.density_from_csv(text, hdr)
    np.testing.assert_array_equal(back.values, g.values)
    assert back.support == g.support
    assert text.splitlines()[0] == "grid_point,value"
