import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from isotns.dynamics import (
    CorrelationEstimate,
    brickwork_network,
    bulk_window,
    correlate,
    correlation_pairs,
    estimates_to_csv,
    family_z_threshold,
    fit_exponential,
    fit_power_law,
    norm_via_transfer,
    perron_eigenvalue,
    sample_configurations,
    sample_trajectory,
    torus_partition_sum,
    trajectory_distribution,
)
from isotns.errors import DomainError, ResourceError, ValidationError
from isotns.tensors import WeightMatrix, w_set_path

W0 = w_set_path(0.0)


def vertex_parities(net, conf):
    return (conf[..., net.in0] + conf[..., net.in1] + conf[..., net.out0] + conf[..., net.out1]) % 2


def test_empty_boundary_stays_empty():
    rec = sample_trajectory(W0, 16, 12, "0" * 16, seed=3)
    assert not rec.config.any()
    assert rec.config.shape == (13, 16)


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.integers(0, 2**31))
def test_vertex_parity_even(g, seed):
    net = brickwork_network(8, 8)
    conf = sample_configurations(w_set_path(g), net, "plus", 64, seed)
    assert not vertex_parities(net, conf).any()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_particle_number_conserved_at_six_vertex_point(seed):
    rec = sample_trajectory(W0, 12, 10, "plus", seed)
    n = rec.particle_numbers()
    assert np.all(n == n[0])


def test_particle_parity_conserved_off_critical():
    rec = sample_trajectory(w_set_path(0.7), 12, 30, "plus", 5)
    n = rec.particle_numbers()
    assert np.all(n % 2 == n[0] % 2)
    assert len(set(n.tolist())) > 1


def test_single_particle_random_walk():
    L_x, L_t, runs = 64, 20, 100_000
    bits = np.zeros(L_x, dtype=int)
    bits[32] = 1
    conf = sample_configurations(W0, brickwork_network(L_x, L_t), bits, runs, seed=5)
    conf = conf.reshape(runs, L_t + 1, L_x)
    slot = conf.argmax(axis=2)
    t = np.arange(L_t + 1)
    pos = slot - (slot - t) % 2
    steps = np.diff(pos[:, :L_t], axis=1)
    assert set(np.unique(steps)) == {-1, 1}

    T = L_t - 1
    d = pos[:, T] - pos[:, 0]
    assert abs(d.mean()) < 3 * np.sqrt(T / runs)
    var_err = d.var(ddof=1) * np.sqrt(2 / (runs - 1))
    assert abs(d.var(ddof=1) - T) < 3 * var_err


def test_vertex_positions_agree_with_slot_map():
    bits = "0" * 10 + "1" + "0" * 9
    rec = sample_trajectory(W0, 20, 6, bits, seed=2)
    for t in range(6):
        (p,) = rec.vertex_positions(t)
        (s,) = np.flatnonzero(rec.config[t])
        assert p in (s, s - 1) and (p - t) % 2 == 0


def test_adjacent_particles_never_cross():
    L_x, L_t = 32, 30
    bits = np.zeros(L_x, dtype=int)
    bits[16] = bits[17] = 1
    conf = sample_configurations(W0, brickwork_network(L_x, L_t), bits, 5000, seed=8)
    conf = conf.reshape(-1, L_t + 1, L_x)
    assert np.all(conf.sum(axis=2) == 2)
    # neighbouring particles can only meet at a vertex, where R(0) maps 11 -> 11
    for t in range(L_t + 1):
        left = conf[:, t].argmax(axis=1)
        right = L_x - 1 - conf[:, t, ::-1].argmax(axis=1)
        assert np.all(left < right)


def test_sampling_matches_exact_distribution():
    net = brickwork_network(4, 2)
    w = w_set_path(0.4)
    exact = np.mean(
        [trajectory_distribution(w, net, b) for b in itertools.product((0, 1), repeat=4)], axis=0
    )
    n = 1_000_000
    conf = sample_configurations(w, net, "plus", n, seed=17)
    idx = (conf.astype(np.int64) << np.arange(net.n_edges)).sum(axis=1)
    counts = np.bincount(idx, minlength=exact.size)
    support = exact > 0
    assert counts[~support].sum() == 0
    _, p = chisquare(counts[support], n * exact[support])
    assert p > 0.01


def test_results_independent_of_chunking():
    net = brickwork_network(6, 5)
    whole = sample_configurations(W0, net, "plus", 100, seed=4)
    parts = np.vstack(
        [sample_configurations(W0, net, "plus", 37, seed=4), sample_configurations(W0, net, "plus", 63, seed=4, start=37)]
    )
    np.testing.assert_array_equal(whole, parts)


def test_correlate_worker_invariance():
    a = correlate(W0, 16, 16, "plus", "t", 6000, seed=3, r_max=5, workers=1)
    b = correlate(W0, 16, 16, "plus", "t", 6000, seed=3, r_max=5, workers=3)
    assert a == b


def test_x_correlator_vanishes():
    est = correlate(W0, 32, 32, "plus", "x", 20000, seed=6, r_max=6)
    z = max(abs(e.mean) / e.stderr for e in est)
    assert z <= family_z_threshold(len(est))


def test_t_correlator_positive_and_decaying():
    est = correlate(W0, 24, 24, "plus", "t", 20000, seed=1, r_max=6)
    means = [e.mean for e in est]
    assert all(m > 0 for m in means)
    assert means[0] > means[-1]


def test_bulk_window():
    assert bulk_window(64) == (16, 48)
    assert bulk_window(3) == (0, 3)
    with pytest.raises(DomainError):
        bulk_window(10, 0.5)


def test_correlation_pairs_reject_long_range():
    with pytest.raises(DomainError):
        correlation_pairs(8, 8, "t", 10)
    with pytest.raises(DomainError):
        correlation_pairs(8, 8, "sideways", 1)


def test_power_law_fit_recovers_exponent():
    est = [CorrelationEstimate("t", r, 0.3 * r**-0.5, 1e-4, 1000) for r in range(1, 20)]
    fit = fit_power_law(est, 4, 16)
    assert fit.slope == pytest.approx(-0.5, abs=1e-9)
    assert fit.r_values == tuple(range(4, 17))


def test_exponential_fit_recovers_slope_and_drops_noise():
    est = [CorrelationEstimate("diag45", r, np.exp(-0.68 * r), 1e-4, 1000) for r in range(1, 15)]
    fit = fit_exponential(est)
    assert fit.slope == pytest.approx(-0.68, abs=1e-9)
    assert max(fit.r_values) < 12


def test_family_threshold():
    assert family_z_threshold(1) == pytest.approx(3.0, abs=1e-4)
    assert family_z_threshold(10) > family_z_threshold(1)


def test_csv_columns():
    text = estimates_to_csv([CorrelationEstimate("t", 1, 0.5, 0.01, 10)])
    assert text.splitlines()[0] == "direction,r,C,stderr,samples"


@pytest.mark.parametrize("g", [-1.0, -0.5, 0.0, 0.3, 1.0])
def test_perron_eigenvalue_is_one(g):
    assert perron_eigenvalue(w_set_path(g), 3) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("L", [1, 2, 3])
@pytest.mark.parametrize("g", [-1.0, -0.2, 0.0, 0.6, 1.0])
def test_transfer_trace_matches_enumeration(g, L):
    w = w_set_path(g)
    assert norm_via_transfer(w, L) == pytest.approx(torus_partition_sum(w, L), abs=1e-10)


@pytest.mark.parametrize("perm", [[0, 1, 2, 3], [0, 2, 1, 3], [3, 2, 1, 0], [1, 3, 0, 2]])
@pytest.mark.parametrize("L", [1, 2, 3])
def test_permutation_weights(perm, L):
    r = WeightMatrix(np.eye(4)[perm])
    count = norm_via_transfer(r, L)
    assert count == pytest.approx(torus_partition_sum(r, L), abs=1e-10)
    assert count == round(count)


def test_transfer_budget():
    with pytest.raises(ResourceError):
        norm_via_transfer(W0, 40)


def test_brickwork_needs_even_width():
    with pytest.raises(DomainError):
        brickwork_network(5, 4)


def test_boundary_length_checked():
    with pytest.raises(ValidationError):
        sample_trajectory(W0, 8, 4, "101", 0)
