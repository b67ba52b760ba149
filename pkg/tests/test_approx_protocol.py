"""Right-quasigroup protocol: gates, branch runs, residuals, dilation, hidden variant."""

from __future__ import annotations

import numpy as np
import pytest

from fastcu import algebra, net, qgbuilder, qsim
from fastcu.algebra import certify_approx_rep, ordinary_rep
from fastcu.approx_protocol import (
    QuasigroupProtocolSpec,
    branch_family,
    build_hat_gates,
    correction_gate_for,
    dilation_error,
    dilation_pair,
    hidden_variant_choi,
    left_div_permutation,
    residual_table,
    run_hidden_variant,
    run_measured_variant,
    shift_register_check,
)
from fastcu.errors import UnsupportedInput
from fastcu.exact_protocol import ControlledGroupUnitary, shift_gate_for


def exact_spec(n: int = 4, terms=(0, 2)) -> QuasigroupProtocolSpec:
    group = algebra.cyclic_group(n)
    w = np.exp(2j * np.pi / n)
    mats = np.stack([np.diag([1.0, w ** k]).astype(complex) for k in range(n)])
    q = group.to_right_quasigroup()
    return QuasigroupProtocolSpec(q, ordinary_rep(q, mats), term_map=tuple(terms))


def perturbed_spec(rng, eps: float = 0.01, terms=(0, 2)) -> QuasigroupProtocolSpec:
    group = algebra.cyclic_group(4)
    w = np.exp(2j * np.pi / 4)
    mats = np.stack([np.diag([1.0, w ** k]).astype(complex) for k in range(4)])
    for k in range(1, 4):
        h = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        h = (h + h.conj().T) / 2
        vals, vecs = np.linalg.eigh(h)
        mats[k] = mats[k] @ (vecs * np.exp(1j * eps * vals)) @ vecs.conj().T
    q = group.to_right_quasigroup()
    return QuasigroupProtocolSpec(q, ordinary_rep(q, mats), term_map=tuple(terms))


def net_spec(m: int = 1, eta: float = 1.2, terms=(3, 7)) -> QuasigroupProtocolSpec:
    fam = net.build_net(2, m)
    built = qgbuilder.assemble_quasigroup(fam, eta)
    return QuasigroupProtocolSpec(built.quasigroup,
                                  ordinary_rep(built.quasigroup, fam.matrices),
                                  term_map=tuple(terms))


def _layout(spec):
    return qsim.RegisterLayout.of(("A", spec.d_a), ("B", spec.d_b))


def test_hat_gates_match_group_shift_gates():
    group = algebra.cyclic_group(5)
    w = np.exp(2j * np.pi / 5)
    mats = np.stack([np.diag([1.0, w ** k]).astype(complex) for k in range(5)])
    rep = algebra.projective_rep(group, mats)
    cgu = ControlledGroupUnitary.from_subset(group, rep, tuple(range(5)))
    q = group.to_right_quasigroup()
    for k in range(5):
        # for a group, left division is j * k^{-1}, so both constructions agree
        assert np.allclose(left_div_permutation(q, k), shift_gate_for(cgu, k))


def test_hat_gate_columns_are_left_division_rows():
    spec = net_spec()
    q = spec.quasigroup
    for k in spec.represented:
        gate = left_div_permutation(q, k)
        for j in range(q.order):
            col = np.flatnonzero(gate[:, j])
            assert np.array_equal(col, [q.left_div[j, k]])


def test_hat_gates_trivial_order_one():
    table = np.zeros((1, 1), dtype=int)
    q = algebra.right_quasigroup_from_table(table)
    spec = QuasigroupProtocolSpec(q, ordinary_rep(q, np.eye(2)[None]), term_map=(0,))
    gates = build_hat_gates(spec)
    assert np.allclose(gates.shift_gates[0], [[1.0]])
    assert np.allclose(gates.fourier, [[1.0]])


def test_measured_variant_exact_rep_equals_target():
    spec = exact_spec()
    rng = np.random.default_rng(40)
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_measured_variant(spec, state)
    target = qsim.apply_on(state, spec.target_matrix(), ("A", "B"))
    assert record.max_deviation <= 1e-9
    for *_ , post in record.branches:
        assert post.distance(target) <= 1e-9
    assert np.allclose(record.l_marginals, 1.0 / spec.order, atol=1e-10)


def test_measured_variant_perturbed_matches_branch_unitaries():
    rng = np.random.default_rng(41)
    spec = perturbed_spec(rng)
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_measured_variant(spec, state)
    assert record.max_deviation <= 1e-9
    fam = branch_family(spec)
    for l, m, prob, post in record.branches:
        want = qsim.apply_on(state, fam.unitaries[l], ("A", "B"))
        assert post.distance(want) <= 1e-9
    assert record.max_branch_distance >= 0.0


def test_measured_variant_single_term():
    rng = np.random.default_rng(42)
    spec = perturbed_spec(rng, terms=(1,))
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_measured_variant(spec, state)
    assert record.max_deviation <= 1e-9


def test_measured_variant_net_built_quasigroup():
    spec = net_spec()
    rng = np.random.default_rng(43)
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_measured_variant(spec, state)
    assert record.max_deviation <= 1e-9
    assert np.abs(record.l_marginals - 1 / 12).max() <= 1e-10


def test_unsupported_input_when_control_larger():
    group = algebra.cyclic_group(3)
    w = np.exp(2j * np.pi / 3)
    mats = np.stack([np.diag([1.0, w ** k]).astype(complex) for k in range(3)])
    q = group.to_right_quasigroup()
    spec = QuasigroupProtocolSpec(q, ordinary_rep(q, mats), term_map=(0, 1), d_a=3)
    layout = qsim.RegisterLayout.of(("A", 3), ("B", 2))
    amps = np.zeros(6, dtype=complex)
    amps[4] = 1.0   # control state 2 has no term
    with pytest.raises(UnsupportedInput):
        run_measured_variant(spec, qsim.PureState(layout, amps))


def test_redundant_terms_leave_dilation_unchanged():
    rng = np.random.default_rng(44)
    base = perturbed_spec(rng, terms=(0, 2))
    dup = QuasigroupProtocolSpec(base.quasigroup, base.rep, term_map=(0, 2, 2))
    cert = certify_approx_rep(base.rep.matrices, base.quasigroup, eta=0.5)
    a = dilation_error(base, 0.5, cert.delta_cert)
    b = dilation_error(dup, 0.5, cert.delta_cert)
    assert a.measured == pytest.approx(b.measured, abs=1e-14)
    assert a.per_k_measured == pytest.approx(b.per_k_measured)
    # the branch unitaries also respect the duplicated control state
    state = qsim.random_pure_state(qsim.RegisterLayout.of(("A", 3), ("B", 2)), rng)
    record = run_measured_variant(dup, state)
    assert record.max_deviation <= 1e-9


def test_residual_norms_capped_by_two():
    for spec in (exact_spec(), net_spec()):
        table = residual_table(spec)
        assert table.norms.max() <= 2.0 + 1e-9
        assert set(table.ks) == set(spec.represented)


def test_branch_family_unitary_and_exact_case():
    spec = exact_spec()
    fam = branch_family(spec)
    target = spec.target_matrix()
    for u in fam.unitaries:
        assert qsim.is_unitary(u)
        assert qsim.operator_norm(u - target) <= 1e-12


def test_dilation_exact_rep_is_zero():
    spec = exact_spec()
    report = dilation_error(spec, eta=0.3, delta_cert=0.0)
    assert report.measured == pytest.approx(0.0, abs=1e-12)
    assert report.diamond_bound_measured <= report.diamond_bound_certified


def test_dilation_all_identity_matrices():
    rng = np.random.default_rng(45)
    table = np.stack([rng.permutation(5) for _ in range(5)], axis=1)
    q = algebra.right_quasigroup_from_table(table)
    spec = QuasigroupProtocolSpec(q, ordinary_rep(q, np.stack([np.eye(2)] * 5)),
                                  term_map=(0, 3))
    report = dilation_error(spec, eta=0.1, delta_cert=0.0)
    assert report.measured == pytest.approx(0.0, abs=1e-12)


def test_dilation_measured_matches_dense_dilations_and_power_iteration():
    spec = net_spec(m=1, eta=0.9, terms=(2, 5, 9))
    cert = certify_approx_rep(spec.rep.matrices, spec.quasigroup, eta=0.9)
    report = dilation_error(spec, 0.9, cert.delta_cert)
    ideal, actual = dilation_pair(spec)
    dense_gap = qsim.operator_norm(ideal - actual)
    assert report.measured == pytest.approx(dense_gap, abs=1e-12)
    assert report.measured <= report.certified_gap_bound + 1e-12

    # power-iteration oracle for the worst represented label
    n = spec.order
    worst = 0.0
    for t, k in enumerate(residual_table(spec).ks):
        e = residual_table(spec).matrices[t]
        h = np.einsum("lab,lac->bc", e.conj(), e) / n
        v = np.ones(h.shape[0], dtype=complex)
        for _ in range(200):
            v = h @ v
            v /= np.linalg.norm(v)
        worst = max(worst, float(np.real(np.vdot(v, h @ v))))
    assert report.measured == pytest.approx(np.sqrt(worst), abs=1e-8)


def test_shift_register_relay_exact():
    for n in (1, 2, 5, 12):
        assert shift_register_check(n) == 0.0


def test_hidden_variant_exact_rep_unitary_channel():
    spec = exact_spec()
    rng = np.random.default_rng(46)
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_hidden_variant(spec, state)
    assert record.deviation <= 1e-10
    psi = qsim.apply_on(state, spec.target_matrix(), ("A", "B")).amps
    assert qsim.operator_norm(record.output_density - np.outer(psi, psi.conj())) <= 1e-10


def test_hidden_variant_matches_branch_mixture():
    rng = np.random.default_rng(47)
    spec = perturbed_spec(rng, eps=0.15)
    state = qsim.random_pure_state(_layout(spec), rng)
    record = run_hidden_variant(spec, state)
    assert record.deviation <= 1e-10
    total = sum(w for *_ , w, _ in [(r, m, s, w, st) for r, m, s, w, st in record.trajectories])
    assert total == pytest.approx(1.0, abs=1e-10)


def test_hidden_variant_choi_small_exact():
    spec = exact_spec()
    cmp = hidden_variant_choi(spec)
    assert cmp.distance <= 1e-10
    assert np.trace(cmp.choi_ensemble).real == pytest.approx(spec.d_a * spec.d_b)


def test_hidden_variant_choi_requires_full_support():
    group = algebra.cyclic_group(3)
    w = np.exp(2j * np.pi / 3)
    mats = np.stack([np.diag([1.0, w ** k]).astype(complex) for k in range(3)])
    q = group.to_right_quasigroup()
    spec = QuasigroupProtocolSpec(q, ordinary_rep(q, mats), term_map=(0, 1), d_a=3)
    with pytest.raises(UnsupportedInput):
        hidden_variant_choi(spec)


def test_correction_gate_phases():
    spec = exact_spec()
    n = spec.order
    for l in range(n):
        for m in range(n):
            gate = correction_gate_for(spec, l, m)
            for i, k in enumerate(spec.term_map):
                want = np.exp(-2j * np.pi * m * spec.quasigroup.table[l, k] / n)
                assert gate[i, i] == pytest.approx(want)
