import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coupled_doubling.circle import reduce, torus_distance
from coupled_doubling.ensemble import (
    MAX_TRAJECTORY_POINTS,
    ObserverError,
    ScanSpec,
    cyclic_period,
    epsilon_scan,
    initial_conditions,
    make_rng,
    merge_histograms,
    simulate_ensemble,
    simulate_orbit,
    time_average,
)
from coupled_doubling.finite import CouplingParams, renormalization_depth
from coupled_doubling.stats import EmpiricalHistogram, ks_distance_to_uniform, l1_distance


# ---------------------------------------------------------------- generators

def test_seeded_generators_are_reproducible_and_distinct():
    a = make_rng(7, 3).random(5)
    np.testing.assert_array_equal(a, make_rng(7, 3).random(5))
    assert not np.array_equal(a, make_rng(7, 4).random(5))
    assert not np.array_equal(a, make_rng(7, 3, purpose="limit").random(5))


def test_initial_conditions_do_not_depend_on_batching():
    full = initial_conditions(5, 10, 3)
    np.testing.assert_array_equal(full[4:], initial_conditions(5, 6, 3, start=4))


# ---------------------------------------------------------------- orbits

def test_uncoupled_orbit_is_independent_doubling():
    x0 = np.array([0.123, 0.456, 0.789])
    rec = simulate_orbit(x0, CouplingParams(0.0, 3), 30, record_trajectory=True)
    x = x0.copy()
    for t in range(30):
        np.testing.assert_array_equal(rec.trajectory[t], x)
        x = reduce(2 * x)


@pytest.mark.parametrize("eps", [0.2, 0.6])
def test_diagonal_orbit_stays_diagonal(eps):
    rec = simulate_orbit(np.full(4, 0.3141), CouplingParams(eps, 4), 40, record_trajectory=True)
    traj = rec.trajectory
    assert np.all(traj == traj[:, :1])
    np.testing.assert_array_equal(traj[1:, 0], reduce(2 * traj[:-1, 0]))


def test_difference_halves_in_contracting_two_site_system():
    rec = simulate_orbit(np.array([0.6, 0.2]), CouplingParams(0.75, 2), 12, ["v"])
    v = rec.observables["v"]
    assert v[0] == pytest.approx(0.4)
    np.testing.assert_allclose(v[1:] / v[:-1], 0.5, rtol=1e-9)


def test_conserved_sum_along_orbit():
    params = CouplingParams(0.42, 3)
    rec = simulate_orbit(None, params, 10_000, ["sum"], seed=1, record_trajectory=True)
    s = rec.observables["sum"]
    idx = np.arange(0, 9_999, 1_000)
    assert np.max(torus_distance(s[idx + 1], 2 * s[idx])) < 1e-12


def test_record_values_start_after_burn_in():
    params = CouplingParams(0.3, 2)
    x0 = np.array([0.1, 0.7])
    a = simulate_orbit(x0, params, 5, ["v"], burn_in=10, record_trajectory=True)
    b = simulate_orbit(x0, params, 15, ["v"], record_trajectory=True)
    np.testing.assert_array_equal(a.trajectory, b.trajectory[10:])
    np.testing.assert_array_equal(a.observables["v"], b.observables["v"][10:])


def test_observer_validation():
    with pytest.raises(ValueError):
        simulate_orbit(np.array([0.1, 0.2]), CouplingParams(0.3, 2), 5, ["label"])
    with pytest.raises(ValueError):
        simulate_orbit(np.array([0.1, 0.2, 0.3]), CouplingParams(0.3, 3), 5, ["v"])
    with pytest.raises(ValueError):
        simulate_orbit(np.array([0.1, 0.2]), CouplingParams(0.3, 2), 5, ["nope"])


def test_observer_failure_carries_context():
    def broken(x, params):
        raise RuntimeError("boom")

    with pytest.raises(ObserverError, match="boom") as err:
        simulate_orbit(np.array([0.1, 0.2]), CouplingParams(0.3, 2), 5, [broken])
    assert "eps=0.3" in str(err.value)


def test_trajectory_cap_needs_opt_in():
    params = CouplingParams(0.3, 2)
    steps = MAX_TRAJECTORY_POINTS // 2 + 1
    with pytest.raises(ValueError, match="allow_large"):
        simulate_orbit(np.array([0.1, 0.2]), params, steps, record_trajectory=True)


def test_ensemble_is_independent_of_worker_count():
    params = CouplingParams(0.42, 3)
    kw = dict(observables=["label", "min_gap"], burn_in=100, histogram_bins=64)
    one = simulate_ensemble(3, 7, params, 2_000, workers=1, **kw)
    three = simulate_ensemble(3, 7, params, 2_000, workers=3, **kw)
    assert len(one) == len(three) == 7
    assert all(a.equals(b) for a, b in zip(one, three))


def test_ensemble_member_equals_single_orbit():
    params = CouplingParams(0.3, 3)
    ens = simulate_ensemble(9, 4, params, 500, ["diameter"])
    x0 = initial_conditions(9, 4, 3)[2]
    single = simulate_orbit(x0, params, 500, ["diameter"], seed=9)
    np.testing.assert_array_equal(ens[2].observables["diameter"], single.observables["diameter"])
    np.testing.assert_array_equal(ens[2].final, single.final)


# ---------------------------------------------------------------- statistics

def test_time_average_of_fixed_point():
    rec = simulate_orbit(np.zeros(3), CouplingParams(0.0, 3), 100, histogram_bins=32)
    h = time_average(rec, 32)
    assert h.counts[0] == h.total == 300


def test_time_average_converges_to_uniform():
    rec = simulate_orbit(None, CouplingParams(0.3, 3), 100_000, seed=7, histogram_bins=1024)
    assert ks_distance_to_uniform(time_average(rec)) <= 0.02


def test_histogram_merge_is_weighted_average(rng):
    x = rng.random(1000)
    a = EmpiricalHistogram.from_samples(x[:300], 16)
    b = EmpiricalHistogram.from_samples(x[300:], 16)
    m = merge_histograms([a, b])
    np.testing.assert_allclose(m.probabilities(), 0.3 * a.probabilities() + 0.7 * b.probabilities())
    np.testing.assert_array_equal(m.counts, EmpiricalHistogram.from_samples(x, 16).counts)


@given(st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=1, max_size=200),
       st.integers(1, 64))
def test_histogram_counts_every_sample(samples, bins):
    h = EmpiricalHistogram.from_samples(samples, bins)
    assert h.total == len(samples) == h.counts.sum()
    assert 0.0 <= ks_distance_to_uniform(h) <= 1.0


def test_ks_examples(rng):
    flat = EmpiricalHistogram(100, np.full(100, 7))
    assert ks_distance_to_uniform(flat) <= 1 / 100
    spike = EmpiricalHistogram(100, np.eye(100, dtype=int)[0] * 50)
    assert ks_distance_to_uniform(spike) == pytest.approx(1 - 1 / 100)
    h = EmpiricalHistogram.from_samples(rng.random(10**6), 1000)
    assert ks_distance_to_uniform(h) <= 0.005


def test_empty_histogram_errors():
    with pytest.raises(ValueError):
        ks_distance_to_uniform(EmpiricalHistogram(8))
    with pytest.raises(ValueError):
        EmpiricalHistogram(8, np.ones(4))


def test_l1_distance():
    assert l1_distance([0.5, 0.5], [1.0, 0.0]) == pytest.approx(1.0)


# ---------------------------------------------------------------- periods and scans

def test_cyclic_period_of_synthetic_orbit():
    t = np.arange(4000)
    vals = (t % 4) / 4 + 0.1 * np.random.default_rng(0).random(4000)
    assert cyclic_period(vals, max_period=16, bin_count=64) == 4


def test_two_site_period_two_at_one_third():
    rec = simulate_orbit(None, CouplingParams(1 / 3, 2), 100_000, ["v"], burn_in=1_000, seed=3)
    assert cyclic_period(rec.observables["v"], max_period=16) == 2


def test_two_site_period_matches_depth_at_045():
    rec = simulate_orbit(None, CouplingParams(0.45, 2), 100_000, ["v"], burn_in=1_000, seed=3)
    assert cyclic_period(rec.observables["v"], max_period=16) == renormalization_depth(0.45)[1]


def test_scan_examples():
    spec = ScanSpec(n_sites=3, steps=100_000, burn_in=1_000, orbits=4, observables=("labels_visited",))
    rows = epsilon_scan([0.2, 0.42], spec)
    assert rows[0]["labels_visited_min"] == 6
    assert rows[1]["labels_visited_max"] == 1
    assert epsilon_scan([1 / 3], ScanSpec(observables=("K",)))[0]["K"] == 2
    assert epsilon_scan([], spec) == []


def test_scan_records_errors_per_value():
    rows = epsilon_scan([1.5, 0.2], ScanSpec(steps=100, orbits=1, observables=("K",)))
    assert "epsilon out of range" in rows[0]["error"]
    assert rows[1]["K"] == 1
    with pytest.raises(ValueError):
        epsilon_scan([0.3], ScanSpec(observables=("bogus",)))
