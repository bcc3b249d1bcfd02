import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from isotns.errors import DomainError, ShapeError
from isotns.tensors import (
    WMatrix,
    check_isometry,
    doubleline_path,
    mps_w_path_1d,
    plumb,
    w_set_path,
    w_toric_code,
    weight_matrix,
)

H = 1 / np.sqrt(2)
g_values = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def test_toric_code_is_isometric():
    ok, dev = check_isometry(w_toric_code())
    assert ok and dev < 1e-15


def test_row_with_norm_two_is_rejected():
    m = np.eye(4, dtype=complex)
    m[0] = [1, 1, 0, 0]
    ok, dev = check_isometry(m)
    assert not ok
    assert dev == pytest.approx(1.0)


def test_check_isometry_rejects_non_square():
    with pytest.raises(ShapeError):
        check_isometry(np.ones((2, 3)))


def test_set_path_at_g03_is_isometric():
    assert check_isometry(w_set_path(0.3)).ok


def test_set_path_endpoints():
    tc = w_set_path(1.0).entries
    expected = np.zeros((4, 4))
    for r, c in [(0, 0), (0, 3), (1, 1), (1, 2), (2, 1), (2, 2), (3, 0), (3, 3)]:
        expected[r, c] = H
    np.testing.assert_allclose(tc, expected, atol=1e-15)

    flipped = expected.copy()
    flipped[0, 3] = -H
    np.testing.assert_allclose(w_set_path(-1.0).entries, flipped, atol=1e-15)


def test_set_path_at_g0_is_six_vertex():
    w = w_set_path(0.0).entries
    np.testing.assert_allclose(w[0], [1, 0, 0, 0])
    np.testing.assert_allclose(w[1], [0, H, H, 0])
    np.testing.assert_allclose(w[2], [0, H, H, 0])
    np.testing.assert_allclose(w[3], [0, 0, 0, 1])
    assert np.count_nonzero(np.abs(w) > 1e-12) == 6


@pytest.mark.parametrize("g", [1.5, -1.01, float("nan")])
def test_set_path_rejects_out_of_range(g):
    with pytest.raises(DomainError):
        w_set_path(g)


@given(g_values)
def test_set_path_isometric_everywhere(g):
    assert check_isometry(w_set_path(g), 1e-12).ok


@given(g_values)
def test_weights_stochastic_and_support(g):
    r = weight_matrix(w_set_path(g))
    assert r.is_stochastic(1e-12)
    # pair-creation weight is about |g|; stay clear of the support tolerance
    assume(g == 0 or abs(g) > 1e-9)
    assert r.support_count() == (6 if g == 0 else 8)


def test_toric_code_weights():
    r = weight_matrix(w_toric_code()).entries
    assert np.count_nonzero(np.isclose(r, 0.5)) == 8
    assert np.count_nonzero(r) == 8


def test_six_vertex_weights():
    r = weight_matrix(w_set_path(0.0)).entries
    assert sorted(r[r > 0].round(12).tolist()) == [0.5, 0.5, 0.5, 0.5, 1.0, 1.0]


def test_unit_row_w_gives_permutation_weights():
    perm = np.eye(4)[[2, 0, 3, 1]]
    r = weight_matrix(perm).entries
    np.testing.assert_array_equal(r, perm)


def test_mps_path_points():
    np.testing.assert_allclose(mps_w_path_1d(1.0).entries, [[H, H], [H, H]])
    np.testing.assert_allclose(mps_w_path_1d(0.0).entries, np.eye(2))
    np.testing.assert_allclose(mps_w_path_1d(-1.0).entries, [[H, -H], [H, H]])


@given(g_values)
def test_mps_path_rows_normalized(g):
    assert check_isometry(mps_w_path_1d(g).entries).ok


def test_doubleline_endpoints():
    np.testing.assert_allclose(doubleline_path(1.0).a, np.full((2, 2, 2, 2), H))
    a = doubleline_path(-1.0).a
    neg = {(0, 0, 1, 1), (0, 1, 1, 0)}
    for idx in np.ndindex(2, 2, 2, 2):
        assert a[idx] == pytest.approx(-H if idx in neg else H)


def test_doubleline_at_g0():
    a = doubleline_path(0.0).a
    for key in ("0010", "0111", "1101", "1000"):
        assert a[tuple(int(c) for c in key)] == pytest.approx(1.0)
    for key in ("0011", "0110", "1100", "1001"):
        assert a[tuple(int(c) for c in key)] == pytest.approx(0.0)


@given(g_values)
def test_doubleline_sum_rule_and_isometry(g):
    t = doubleline_path(g)
    assert t.sum_rule_deviation() < 1e-12
    assert t.isometry_residual() < 1e-12


def test_plumbing_locks_physical_to_virtual():
    t = plumb(w_toric_code()).array
    assert t[0, 0, 0, 0, 0, 0] == pytest.approx(H)
    assert np.all(t[0, 1, 0, 0] == 0)
    for s, r, i, j in np.ndindex(2, 2, 2, 2):
        if (s, r) != (i, j):
            assert not np.any(t[s, r, i, j])


@given(g_values)
def test_plumbed_tensor_is_isometric(g):
    assert plumb(w_set_path(g)).isometry_residual() < 1e-12


def test_plumbed_permutation_is_isometric():
    t = plumb(WMatrix(np.eye(4)[[1, 0, 3, 2]]))
    assert t.isometry_residual() == 0.0


def test_wmatrix_json_round_trip():
    w = w_set_path(-0.37)
    back = WMatrix.from_json(w.to_json())
    np.testing.assert_array_equal(back.entries, w.entries)


def test_wmatrix_is_read_only():
    w = w_set_path(0.2)
    with pytest.raises(ValueError):
        w.entries[0, 0] = 2.0
