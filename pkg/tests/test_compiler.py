"""Normalization, compilation pipeline, error budgets, block composition."""

from __future__ import annotations

import numpy as np
import pytest

from fastcu import algebra, demos, net, qsim
from fastcu.approx_protocol import dilation_pair
from fastcu.compiler import (
    BlockComponent,
    CompileTargets,
    block_diagonal_compose,
    compile_target,
    error_budget,
    lemma_advisory,
    normalize_su,
)
from fastcu.errors import BlockOverlap, BudgetExhausted, DimensionMismatch, NotUnitary


def test_normalize_su_already_special():
    rng = np.random.default_rng(50)
    w = qsim.haar_special_unitary(2, rng)
    target = normalize_su(w[None])
    assert np.allclose(target.blocks[0], w)
    assert target.phases[0] == pytest.approx(0.0, abs=1e-12)


def test_normalize_su_reconstructs_diag_example():
    w = np.diag([1.0, np.exp(2j * np.pi / 3)])
    target = normalize_su(w[None])
    assert abs(np.linalg.det(target.blocks[0]) - 1.0) <= 1e-12
    recon = np.exp(1j * target.phases[0]) * target.blocks[0]
    assert np.allclose(recon, w, atol=1e-12)


def test_normalize_su_scalar_phase_absorbed():
    w = np.exp(1j * np.pi / 3) * np.eye(2)
    target = normalize_su(w[None])
    assert np.allclose(target.blocks[0], np.eye(2), atol=1e-12)


def test_normalize_su_rejects_nonunitary():
    with pytest.raises(NotUnitary):
        normalize_su(np.ones((1, 2, 2)))


def test_compile_targets_validation():
    with pytest.raises(DimensionMismatch):
        CompileTargets(zeta=0.5, eta=None, delta=0.5)
    with pytest.raises(DimensionMismatch):
        CompileTargets(zeta=0.5, eta=0.5, delta=0.5, epsilon=0.5)
    CompileTargets(epsilon=1.0)
    CompileTargets(zeta=0.5, eta=0.5, delta=0.5)


def test_compile_exact_family_through_degenerate_net(regular_rep_net):
    group, fam = regular_rep_net
    target = normalize_su(fam.matrices[[0, 1]])
    # permutation matrices of the XOR group are already special unitaries
    result = compile_target(target, CompileTargets(zeta=1e-6, eta=0.5, delta=1e-9),
                            net_override=fam)
    assert result.plan.zeta == pytest.approx(0.0, abs=1e-12)
    assert result.plan.delta_cert == 0.0
    assert result.report.gap_target_actual == pytest.approx(0.0, abs=1e-10)
    assert result.report.certified_error_bound <= 2 * (1e-6 + np.sqrt(0.25 + 4e-9)) + 1e-12


def test_compile_identity_single_term():
    target = normalize_su(np.eye(2)[None])
    result = compile_target(target, CompileTargets(zeta=0.2, eta=1.2, delta=0.4))
    assert result.plan.zeta <= 1e-12   # identity is a word times its inverse
    assert result.report.gap_target_plan <= 1e-12
    assert result.report.diamond_bound_measured <= result.report.certified_error_bound


def test_compile_seeded_targets_loose():
    rng = np.random.default_rng(51)
    blocks = np.stack([qsim.haar_special_unitary(2, rng) for _ in range(3)])
    target = normalize_su(blocks)
    result = compile_target(target, CompileTargets(zeta=0.9, eta=1.4, delta=0.5))
    report = result.report
    assert result.plan.zeta <= 0.9
    assert result.plan.eta <= 1.4
    assert result.plan.delta_cert <= 0.5
    assert report.diamond_bound_measured <= report.certified_error_bound + 1e-9
    # triangle chain by independent dense recomputation
    ideal, actual = dilation_pair(result.spec)
    n = result.spec.order
    d = result.spec.d_a * result.spec.d_b
    requested = np.zeros_like(ideal)
    tmat = np.zeros((d, d), dtype=complex)
    for i, w in enumerate(target.blocks):
        tmat[i * 2:(i + 1) * 2, i * 2:(i + 1) * 2] = w
    for l in range(n):
        requested[l * d:(l + 1) * d] = tmat / np.sqrt(n)
    tv = qsim.operator_norm(requested - actual)
    tu = qsim.operator_norm(requested - ideal)
    uv = qsim.operator_norm(ideal - actual)
    assert report.gap_target_actual == pytest.approx(tv, abs=1e-10)
    assert report.gap_target_plan == pytest.approx(tu, abs=1e-10)
    assert report.gap_plan_actual == pytest.approx(uv, abs=1e-10)
    assert tv <= tu + uv + 1e-10


def test_compile_epsilon_mode():
    rng = np.random.default_rng(52)
    blocks = np.stack([qsim.haar_special_unitary(2, rng) for _ in range(2)])
    target = normalize_su(blocks)
    result = compile_target(target, CompileTargets(epsilon=3.9))
    assert result.report.certified_error_bound <= 3.9 + 1e-9
    assert result.report.diamond_bound_measured <= result.report.certified_error_bound


def test_compile_budget_exhausted_reports_best():
    rng = np.random.default_rng(53)
    blocks = np.stack([qsim.haar_special_unitary(2, rng)])
    target = normalize_su(blocks)
    with pytest.raises(BudgetExhausted) as err:
        compile_target(target, CompileTargets(zeta=1e-6, eta=1e-6, delta=1e-9), cap=100)
    assert err.value.best is not None


def test_compile_deterministic():
    rng = np.random.default_rng(54)
    blocks = np.stack([qsim.haar_special_unitary(2, rng) for _ in range(2)])
    target = normalize_su(blocks)
    targets = CompileTargets(zeta=0.9, eta=1.4, delta=0.5)
    a = compile_target(target, targets)
    b = compile_target(target, targets)
    assert a.plan.m == b.plan.m
    assert a.plan.eta == b.plan.eta
    assert a.plan.assignment == b.plan.assignment
    assert np.array_equal(a.plan.built.quasigroup.table, b.plan.built.quasigroup.table)
    assert a.report.gap_target_actual == b.report.gap_target_actual


def test_cost_identity_on_reports():
    rng = np.random.default_rng(55)
    blocks = np.stack([qsim.haar_special_unitary(2, rng)])
    target = normalize_su(blocks)
    result = compile_target(target, CompileTargets(zeta=1.2, eta=1.6, delta=0.6))
    m, d = result.plan.m, 2
    want = 1.0 + m * (d * (d - 1) // 2) * np.log2(6.0)
    assert result.report.cost_ebits == pytest.approx(want, abs=1e-12)


def test_lemma_advisory_positive_and_monotone():
    assert lemma_advisory(2, 0.5) >= 1
    assert lemma_advisory(2, 0.1) >= lemma_advisory(2, 0.4)


def test_block_compose_example_shape():
    # first block: a net-built quasigroup family on one qubit block
    fam = net.build_net(2, 1)
    from fastcu import qgbuilder
    built = qgbuilder.assemble_quasigroup(fam, eta=1.2)
    c2 = algebra.cyclic_group(2)
    z_family = np.stack([np.eye(2), np.diag([1.0, -1.0])]).astype(complex)
    composed = block_diagonal_compose([
        BlockComponent(built.quasigroup, fam.matrices,
                       eta=1.2, delta=built.certificate.delta_cert),
        BlockComponent(c2, z_family, eta=1.2, delta=0.0),
    ])
    assert composed.quasigroup.order == 2 * fam.size
    assert composed.matrices.shape == (24, 4, 4)
    assert composed.eta == 1.2
    assert composed.certificate.delta_cert <= composed.delta_bound + 1e-12
    assert composed.cost_ebits == pytest.approx(np.log2(12) + 1.0)
    # direct sums land on the advertised coordinates
    lbl = 5
    k1, k2 = composed.index_map[lbl]
    assert np.allclose(composed.matrices[lbl][:2, :2], fam.matrices[k1])
    assert np.allclose(composed.matrices[lbl][2:, 2:], z_family[k2])
    assert np.allclose(composed.matrices[lbl][:2, 2:], 0)


def test_block_compose_exact_blocks_zero_delta():
    c2 = algebra.cyclic_group(2)
    z_family = np.stack([np.eye(2), np.diag([1.0, -1.0])]).astype(complex)
    x_family = np.stack([np.eye(2), np.array([[0, 1], [1, 0]])]).astype(complex)
    composed = block_diagonal_compose([
        BlockComponent(c2, z_family, eta=0.5, delta=0.0),
        BlockComponent(c2, x_family, eta=0.5, delta=0.0),
    ])
    assert composed.certificate.delta_cert == 0.0
    assert composed.delta_bound == 0.0


def test_block_compose_overlap_rejected():
    c2 = algebra.cyclic_group(2)
    fam = np.stack([np.eye(2), np.diag([1.0, -1.0])]).astype(complex)
    with pytest.raises(BlockOverlap):
        block_diagonal_compose([
            BlockComponent(c2, fam, eta=0.5, delta=0.0, coords=(0, 1)),
            BlockComponent(c2, fam, eta=0.5, delta=0.0, coords=(1, 2)),
        ], ambient_dim=4)
    with pytest.raises(BlockOverlap):
        block_diagonal_compose([BlockComponent(c2, fam, eta=0.5, delta=0.0)],
                               ambient_dim=3)


def test_error_budget_exact_plan_is_zero(regular_rep_net):
    group, fam = regular_rep_net
    target = normalize_su(fam.matrices[[1, 2]])
    result = compile_target(target, CompileTargets(zeta=1e-6, eta=0.5, delta=1e-9),
                            net_override=fam)
    report = result.report
    assert report.gap_target_plan == pytest.approx(0.0, abs=1e-12)
    assert report.gap_plan_actual == pytest.approx(0.0, abs=1e-12)
    assert report.gap_target_actual == pytest.approx(0.0, abs=1e-10)


def test_block_diagonal_demo_targets_are_unitary():
    for w in demos.block_diagonal_target():
        assert qsim.is_unitary(w)
