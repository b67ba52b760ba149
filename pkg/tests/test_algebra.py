"""Groups, factor systems, right quasigroups, and the approximation certificate."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import random_right_quasigroup
from fastcu import algebra, qsim
from fastcu.errors import (
    DimensionMismatch,
    NoIdentity,
    NoInverse,
    NotAssociative,
    NotProjectiveRep,
    NotRightQuasigroup,
)


def test_klein_four_valid():
    group = algebra.klein_four_group()
    assert group.order == 4
    assert group.identity == 0
    assert np.array_equal(group.inverse, [0, 1, 2, 3])


def test_trivial_group():
    group = algebra.group_from_cayley([[0]])
    assert group.order == 1
    assert group.identity == 0


def test_no_inverse_error():
    with pytest.raises(NoInverse):
        algebra.group_from_cayley([[0, 1], [1, 1]])


def test_no_identity_error():
    # rows and columns are permutations but no two-sided identity exists
    with pytest.raises(NoIdentity):
        algebra.group_from_cayley([[1, 2, 0], [0, 1, 2], [2, 0, 1]])


def test_not_associative_error():
    # identity and self-inverses present, but (1*1)*2 != 1*(1*2)
    table = [[0, 1, 2, 3, 4],
             [1, 0, 3, 2, 4],
             [2, 4, 0, 1, 3],
             [3, 2, 4, 0, 1],
             [4, 3, 1, 2, 0]]
    with pytest.raises((NotAssociative, NoInverse)):
        algebra.group_from_cayley(table)


def test_rows_and_columns_are_permutations():
    for group in (algebra.klein_four_group(), algebra.cyclic_group(6)):
        idx = np.arange(group.order)
        for a in range(group.order):
            assert np.array_equal(np.sort(group.cayley[a]), idx)
            assert np.array_equal(np.sort(group.cayley[:, a]), idx)


def test_pauli_factor_system_values(klein_pauli):
    group, rep = klein_pauli
    lam = rep.factor_system.lam
    # direct product oracle: X Z = lam(1,3) * V_{1*3}
    x, z = rep.matrices[1], rep.matrices[3]
    j = group.cayley[1, 3]
    prod = x @ z
    ratio = np.trace(rep.matrices[j].conj().T @ prod) / 2
    assert lam[1, 3] == pytest.approx(ratio)
    assert lam[1, 3] == pytest.approx(-1j)
    assert np.allclose(lam[group.identity, :], 1.0)
    assert np.allclose(lam[:, group.identity], 1.0)


def test_cocycle_identity_all_triples(klein_pauli, c3_diag):
    for group, rep in (klein_pauli, c3_diag):
        assert rep.factor_system.cocycle_residual(group) < 1e-9


def test_ordinary_rep_has_unit_factors(c3_diag):
    group, rep = c3_diag
    assert np.allclose(rep.factor_system.lam, 1.0, atol=1e-12)


def test_not_projective_rep_rejected():
    group = algebra.klein_four_group()
    rng = np.random.default_rng(0)
    mats = np.stack([np.eye(2)] + [qsim.haar_unitary(2, rng) for _ in range(3)])
    with pytest.raises(NotProjectiveRep):
        algebra.projective_rep(group, mats)


def test_identity_matrix_required_at_identity_label():
    group = algebra.klein_four_group()
    mats = np.stack([1j * np.eye(2), np.eye(2), np.eye(2), np.eye(2)])
    with pytest.raises(NotProjectiveRep):
        algebra.ProjectiveRep(group, mats)


def test_right_quasigroup_from_group_tables():
    for group in (algebra.klein_four_group(), algebra.cyclic_group(5)):
        q = group.to_right_quasigroup()
        assert q.order == group.order


def test_right_quasigroup_latin_square():
    latin = [[(i + j) % 5 for j in range(5)] for i in range(5)]
    q = algebra.right_quasigroup_from_table(latin)
    assert q.order == 5


def test_right_quasigroup_bad_column_named():
    table = [[0, 1, 2], [1, 0, 2], [2, 2, 1]]
    with pytest.raises(NotRightQuasigroup, match="column 2"):
        algebra.right_quasigroup_from_table(table)


def test_left_division_inverts_columns():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5, 9):
        q = random_right_quasigroup(n, rng)
        for a in range(n):
            for y in range(n):
                assert q.left_div[q.table[y, a], a] == y
                assert q.table[q.left_div[y, a], a] == y


def test_certify_exact_rep_zero_delta(c3_diag):
    group, rep = c3_diag
    q = group.to_right_quasigroup()
    cert = algebra.certify_approx_rep(rep.matrices, q, eta=1e-6)
    assert cert.delta_cert == 0.0
    assert cert.max_residual < 1e-12


def test_certify_all_identity_matrices():
    rng = np.random.default_rng(2)
    q = random_right_quasigroup(6, rng)
    mats = np.stack([np.eye(3)] * 6)
    cert = algebra.certify_approx_rep(mats, q, eta=0.1)
    assert cert.delta_cert == 0.0


def test_certify_matches_exhaustive_double_loop():
    rng = np.random.default_rng(3)
    n = 8
    q = random_right_quasigroup(n, rng)
    mats = np.stack([qsim.haar_unitary(2, rng) for _ in range(n)])
    eta = 0.9
    cert = algebra.certify_approx_rep(mats, q, eta)
    counts = np.zeros(n, dtype=int)
    worst = 0.0
    for k in range(n):
        for j in range(n):
            l = q.left_div[j, k]
            residual = np.linalg.svd(mats[l] @ mats[k] - mats[j], compute_uv=False)[0]
            worst = max(worst, residual)
            if residual >= eta:
                counts[k] += 1
    assert np.array_equal(cert.per_k_violation_count, counts)
    assert cert.delta_cert == pytest.approx(counts.max() / n)
    assert cert.max_residual == pytest.approx(worst, abs=1e-12)


def test_certify_monotone_in_eta():
    rng = np.random.default_rng(4)
    n = 7
    q = random_right_quasigroup(n, rng)
    mats = np.stack([qsim.haar_unitary(2, rng) for _ in range(n)])
    deltas = [algebra.certify_approx_rep(mats, q, eta).delta_cert
              for eta in (0.2, 0.5, 0.9, 1.4, 2.0)]
    assert all(a >= b for a, b in zip(deltas, deltas[1:]))


def test_certify_dimension_mismatch():
    rng = np.random.default_rng(5)
    q = random_right_quasigroup(4, rng)
    with pytest.raises(DimensionMismatch):
        algebra.certify_approx_rep(np.stack([np.eye(2)] * 3), q, eta=0.5)
