import itertools
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isotns.circuit import sequential_program
from isotns.dynamics import square_network, trajectory_distribution
from isotns.errors import UnsupportedObservableError
from isotns.holographic import (
    empirical_distribution,
    holo_distribution,
    holo_expect,
    holo_sample,
    records_to_csv,
    records_to_jsonl,
    total_variation,
)
from isotns.lattice import BoundaryState, build_lattice
from isotns.pauli import PauliString
from isotns.statevector import expect_real, rotated_probabilities, run
from isotns.tensors import w_set_path

LAT22 = build_lattice(2, 2)


@settings(max_examples=12, deadline=None)
@given(st.floats(-1, 1), st.sampled_from(["Z", "X", "Y", "ZXYZXYZXYZXY"]))
def test_exact_distribution_matches_born(g, bases):
    bd = BoundaryState.plus()
    p = holo_distribution(LAT22, g, bd, bases)
    q = rotated_probabilities(run(sequential_program(LAT22, g, bd)), bases)
    assert total_variation(p, q) < 1e-10


def test_empirical_distribution_converges():
    bd = BoundaryState.plus()
    recs = holo_sample(LAT22, 0.6, bd, "Z", shots=20000, seed=4)
    exact = holo_distribution(LAT22, 0.6, bd, "Z")
    emp = empirical_distribution(recs, LAT22.n_qubits)
    # expected TVD for n shots over k outcomes is about sqrt(k / n) / 2
    assert total_variation(emp, exact) < 2 * np.sqrt(np.count_nonzero(exact) / 20000)


def test_six_vertex_point_matches_worldlines():
    bd = BoundaryState.from_bits(LAT22, (1, 0, 1, 1))
    p = holo_distribution(LAT22, 0.0, bd, "Z")
    q = trajectory_distribution(w_set_path(0.0), square_network(LAT22), (1, 0, 1, 1))
    assert total_variation(p, q) < 1e-10


def test_six_vertex_plus_boundary_matches_worldlines():
    net = square_network(LAT22)
    p = holo_distribution(LAT22, 0.0, BoundaryState.plus(), "Z")
    q = np.mean(
        [trajectory_distribution(w_set_path(0.0), net, b) for b in itertools.product((0, 1), repeat=net.boundary.size)],
        axis=0,
    )
    assert total_variation(p, q) < 1e-10


def test_toric_code_x_samples_satisfy_plaquettes():
    lat = build_lattice(3, 3)
    for rec in holo_sample(lat, 1.0, None, "X", shots=200, seed=9):
        bits = rec.bits()
        for x, y in lat.plaquettes():
            assert sum(bits[q] for q in lat.plaquette_edges(x, y)) % 2 == 0


def test_plaquette_expectation_at_fixed_point():
    lat = build_lattice(3, 3)
    op = PauliString.product("X", lat.plaquette_edges(1, 1))
    mean, err = holo_expect(lat, 1.0, None, op, shots=100, seed=0)
    assert mean == 1.0 and err == 0.0


def test_identity_observable():
    assert holo_expect(LAT22, 0.3, None, PauliString(), shots=10, seed=0) == (1.0, 0.0)


def test_zz_matches_statevector():
    lat = build_lattice(3, 3)
    bd = BoundaryState.plus()
    a, b = lat.h(0, 1), lat.h(2, 1)
    op = PauliString({a: "Z", b: "Z"})
    mean, err = holo_expect(lat, 0.5, bd, op, shots=4000, seed=12)
    ref = expect_real(run(sequential_program(lat, 0.5, bd)), op)
    assert abs(mean - ref) < 3 * err


def test_non_pauli_observable_rejected():
    with pytest.raises(UnsupportedObservableError):
        holo_expect(LAT22, 0.3, None, {0: np.eye(2) * 2}, shots=10, seed=0)


def test_mps_mode_exact_when_chi_large():
    lat = build_lattice(3, 3)
    bd = BoundaryState.plus()
    dense = holo_sample(lat, 0.5, bd, "X", shots=300, seed=21)
    mps = holo_sample(lat, 0.5, bd, "X", shots=300, seed=21, mode="mps", chi=16)
    assert all(r.discarded_weight < 1e-12 for r in mps)
    # same random stream and exact conditionals give identical shots
    assert [r.row_bits for r in mps] == [r.row_bits for r in dense]
    for r, s in zip(mps, dense):
        assert r.log_probability == pytest.approx(s.log_probability, abs=1e-9)


def test_chi_one_exact_at_six_vertex_point():
    lat = build_lattice(3, 3)
    recs = holo_sample(lat, 0.0, BoundaryState.zeros(), "Z", shots=30, seed=2, mode="mps", chi=1)
    assert max(r.discarded_weight for r in recs) == 0.0


def test_truncation_decreases_with_chi():
    lat = build_lattice(4, 4)
    weights = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for chi in (1, 2, 4, 8):
            recs = holo_sample(lat, 0.5, BoundaryState.plus(), "X", shots=40, seed=1, mode="mps", chi=chi)
            weights.append(np.mean([r.discarded_weight for r in recs]))
    assert all(a >= b for a, b in zip(weights, weights[1:]))
    assert weights[0] > 1e-3 and weights[-1] < 1e-12


def test_records_serialize():
    recs = holo_sample(LAT22, 0.2, None, "Z", shots=3, seed=1)
    lines = records_to_jsonl(recs).strip().splitlines()
    assert len(lines) == 3
    first = json.loads(lines[0])
    assert first["seed"] == 1 and first["shot"] == 0
    csv = records_to_csv(recs, LAT22.n_qubits).splitlines()
    assert len(csv) == 4


def test_sampling_is_reproducible_across_batches():
    a = holo_sample(LAT22, -0.4, BoundaryState.plus(), "Z", shots=50, seed=8, batch_size=7)
    b = holo_sample(LAT22, -0.4, BoundaryState.plus(), "Z", shots=50, seed=8, batch_size=50)
    assert [r.row_bits for r in a] == [r.row_bits for r in b]
