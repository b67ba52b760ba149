"""One-round approximate protocol over a right quasigroup, with error machinery.

The measured variant implements a branch unitary that depends on one party's
outcome; the hidden variant consumes shared classical randomness so neither
party learns which branch occurred, and the induced channel is the uniform
mixture of the branch unitaries.  The dilation machinery turns a certified
(eta, delta) pair into an exact operator-norm gap and a diamond-norm bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import ProjectiveRep, RightQuasigroup
from .errors import DimensionMismatch, UnsupportedInput
from .qsim import (
    PureState,
    RegisterLayout,
    UnitaryEnsembleChannel,
    apply_on,
    basis_state,
    choi_matrix,
    controlled_gate,
    fourier_gate,
    max_hermitian_eigenvalue,
    maximally_entangled,
    measure_registers,
    operator_norm,
    partial_trace,
    product_state,
    shift_gate,
)

SUPPORT_TOL = 1e-12
RESIDUAL_CAP = 2.0 + 1e-9


@dataclass(frozen=True, eq=False)
class QuasigroupProtocolSpec:
    """Controlled unitary whose blocks come from a family over a right quasigroup.

    ``term_map[i]`` is the family label controlled by basis state ``|i>`` of the
    control register; repeats are allowed (redundant terms).  ``d_a`` may exceed
    the number of terms, in which case the extra basis states are unsupported.
    """

    quasigroup: RightQuasigroup
    rep: ProjectiveRep
    term_map: tuple[int, ...]
    d_a: int = 0

    def __post_init__(self):
        if self.rep.structure is not self.quasigroup:
            raise DimensionMismatch("representation must be defined over the given quasigroup")
        if not self.term_map:
            raise DimensionMismatch("need at least one term")
        n = self.quasigroup.order
        if any(not 0 <= k < n for k in self.term_map):
            raise DimensionMismatch("term labels must be valid quasigroup elements")
        if self.d_a == 0:
            object.__setattr__(self, "d_a", len(self.term_map))
        if self.d_a < len(self.term_map):
            raise DimensionMismatch("control dimension smaller than the number of terms")

    @property
    def n_terms(self) -> int:
        return len(self.term_map)

    @property
    def represented(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.term_map)))

    @property
    def order(self) -> int:
        return self.quasigroup.order

    @property
    def d_b(self) -> int:
        return self.rep.dim

    def target_matrix(self) -> np.ndarray:
        """Dense control (x) target matrix, identity blocks past the last term."""
        blocks = {i: self.rep.matrices[k] for i, k in enumerate(self.term_map)}
        return controlled_gate(self.d_a, blocks, self.d_b)

    def branch_matrix(self, outcome_l: int) -> np.ndarray:
        """Unitary actually implemented when the ancilla outcome is l."""
        mats = self.rep.matrices
        vl_dag = mats[outcome_l].conj().T
        blocks = {i: vl_dag @ mats[self.quasigroup.table[outcome_l, k]]
                  for i, k in enumerate(self.term_map)}
        return controlled_gate(self.d_a, blocks, self.d_b)

    def cost_ebits(self) -> float:
        return math.log2(self.order)


@dataclass(frozen=True, eq=False)
class BranchFamily:
    """All branch unitaries with their uniform weight."""

    unitaries: np.ndarray     # (N, d_a*d_b, d_a*d_b)
    weight: float

    def channel(self) -> UnitaryEnsembleChannel:
        return UnitaryEnsembleChannel(tuple((self.weight, u) for u in self.unitaries))


def branch_family(spec: QuasigroupProtocolSpec) -> BranchFamily:
    n = spec.order
    unitaries = np.stack([spec.branch_matrix(l) for l in range(n)])
    residual = max(operator_norm(u.conj().T @ u - np.eye(u.shape[0])) for u in unitaries)
    if residual > 1e-10:
        raise DimensionMismatch(f"branch unitary residual {residual:.2e}")
    return BranchFamily(unitaries=unitaries, weight=1.0 / n)


def left_div_permutation(quasigroup: RightQuasigroup, k: int) -> np.ndarray:
    """Permutation gate |j> -> |l(j,k)| on the ancilla; columns are left-division rows."""
    n = quasigroup.order
    out = np.zeros((n, n), dtype=complex)
    out[quasigroup.left_div[:, k], np.arange(n)] = 1.0
    return out


def correction_gate_for(spec: QuasigroupProtocolSpec, outcome_l: int, outcome_m: int) -> np.ndarray:
    """Diagonal control-register phase gate for branch (l, m), with term relabeling."""
    n = spec.order
    diag = np.ones(spec.d_a, dtype=complex)
    for i, k in enumerate(spec.term_map):
        prod = spec.quasigroup.table[outcome_l, k]
        diag[i] = np.exp(-2j * np.pi * ((outcome_m * prod) % n) / n)
    return np.diag(diag)


@dataclass(frozen=True, eq=False)
class HatGateSet:
    shift_gates: dict[int, np.ndarray]
    fourier: np.ndarray
    corrections: dict[tuple[int, int], np.ndarray]


def build_hat_gates(spec: QuasigroupProtocolSpec) -> HatGateSet:
    n = spec.order
    shifts = {k: left_div_permutation(spec.quasigroup, k) for k in spec.represented}
    corrections = {(l, m): correction_gate_for(spec, l, m) for l in range(n) for m in range(n)}
    return HatGateSet(shift_gates=shifts, fourier=fourier_gate(n), corrections=corrections)


def _check_support(state: PureState, control: str, n_terms: int, d_a: int) -> None:
    if d_a == n_terms:
        return
    layout = state.layout
    axis = layout.axis(control)
    t = np.moveaxis(state.tensor(), axis, 0).reshape(d_a, -1)
    mass = float(np.sum(np.abs(t[n_terms:]) ** 2))
    if mass > SUPPORT_TOL:
        raise UnsupportedInput(
            f"input has probability {mass:.3e} on control states without a term")


@dataclass(frozen=True, eq=False)
class MeasuredRunRecord:
    """Per-branch results of the measured variant against the branch unitaries."""

    branches: list                     # (outcome_l, outcome_m, probability, PureState)
    branch_states: dict                # l -> expected PureState
    max_deviation: float
    l_marginals: np.ndarray
    max_branch_distance: float         # diagnostic: worst || target - branch ||_inf
    cost_ebits: float


def run_measured_variant(spec: QuasigroupProtocolSpec, state: PureState,
                         control: str = "A", target: str = "B",
                         ancilla_names: tuple[str, str] = ("a", "b")) -> MeasuredRunRecord:
    """Simulate every branch; branch (l, m) must equal the l-th branch unitary's action."""
    n = spec.order
    layout = state.layout
    if layout.dim_of(control) != spec.d_a or layout.dim_of(target) != spec.d_b:
        raise DimensionMismatch("input registers do not match the protocol spec")
    for name in ancilla_names:
        if name in layout.names:
            raise DimensionMismatch(f"ancilla name {name!r} collides with an input register")
    _check_support(state, control, spec.n_terms, spec.d_a)

    anc_a, anc_b = ancilla_names
    full = product_state(state, maximally_entangled(n, names=(anc_a, anc_b)))
    shift_blocks = {i: left_div_permutation(spec.quasigroup, k)
                    for i, k in enumerate(spec.term_map)}
    full = apply_on(full, controlled_gate(spec.d_a, shift_blocks, n), (control, anc_a))
    rep_blocks = {j: spec.rep.matrices[j] for j in range(n)}
    full = apply_on(full, controlled_gate(n, rep_blocks, spec.d_b), (anc_b, target))
    full = apply_on(full, fourier_gate(n), anc_b)

    target_mat = spec.target_matrix()
    expected = {l: apply_on(state, spec.branch_matrix(l), (control, target))
                for l in range(n)}
    max_branch_distance = max(operator_norm(target_mat - spec.branch_matrix(l))
                              for l in range(n))

    branches = []
    max_dev = 0.0
    l_marginals = np.zeros(n)
    for branch in measure_registers(full, (anc_a, anc_b)):
        l, m = branch.outcome[anc_a], branch.outcome[anc_b]
        post = apply_on(branch.post_state, correction_gate_for(spec, l, m), control)
        post = apply_on(post, spec.rep.matrices[l].conj().T, target)
        max_dev = max(max_dev, post.distance(expected[l]))
        l_marginals[l] += branch.probability
        branches.append((l, m, branch.probability, post))
    return MeasuredRunRecord(branches=branches, branch_states=expected,
                             max_deviation=max_dev, l_marginals=l_marginals,
                             max_branch_distance=max_branch_distance,
                             cost_ebits=spec.cost_ebits())


@dataclass(frozen=True, eq=False)
class ResidualTable:
    """Residuals between shifted-conjugated blocks and the bare blocks.

    ``matrices[t, l]`` is ``V_l^dag V_{l*k} - V_k`` for the t-th represented
    label k; every operator norm is at most 2.
    """

    ks: tuple[int, ...]
    matrices: np.ndarray      # (len(ks), N, d_b, d_b)
    norms: np.ndarray         # (len(ks), N)


def residual_table(spec: QuasigroupProtocolSpec) -> ResidualTable:
    mats = spec.rep.matrices
    n = spec.order
    ks = spec.represented
    out = np.empty((len(ks), n, spec.d_b, spec.d_b), dtype=complex)
    norms = np.empty((len(ks), n))
    for t, k in enumerate(ks):
        prods = np.einsum("lab,lbc->lac", mats.conj().transpose(0, 2, 1),
                          mats[spec.quasigroup.table[:, k]])
        out[t] = prods - mats[k]
        norms[t] = _op_norms(out[t])
    if norms.max() > RESIDUAL_CAP:
        raise DimensionMismatch(f"residual norm {norms.max():.3f} exceeds the cap of 2")
    return ResidualTable(ks=ks, matrices=out, norms=norms)


def _op_norms(stack: np.ndarray) -> np.ndarray:
    from .qsim import operator_norms
    return operator_norms(stack)


@dataclass(frozen=True)
class DilationErrorReport:
    """Exact dilation gap of the protocol channel next to its certified bounds.

    ``measured`` is the exact operator-norm distance between the two isometric
    dilations (block structure makes it the worst represented label's averaged
    residual spectrum); the certified bound is sqrt(eta^2 + 4*delta).  Doubling
    either side bounds the diamond-norm distance between the implemented and
    ideal channels.
    """

    measured: float
    certified_gap_bound: float
    diamond_bound_measured: float
    diamond_bound_certified: float
    eta: float
    delta_cert: float
    max_branch_distance: float
    per_k_measured: dict[int, float]


def dilation_error(spec: QuasigroupProtocolSpec, eta: float, delta_cert: float) -> DilationErrorReport:
    """Exact ||U' - V'||_inf from the residual table, with the (eta, delta) bound."""
    table = residual_table(spec)
    n = spec.order
    per_k = {}
    for t, k in enumerate(table.ks):
        e = table.matrices[t]
        h = np.einsum("lab,lac->bc", e.conj(), e) / n
        per_k[k] = math.sqrt(max(0.0, max_hermitian_eigenvalue(h)))
    measured = max(per_k.values())
    bound = math.sqrt(eta * eta + 4.0 * delta_cert)
    target = spec.target_matrix()
    max_branch = max(operator_norm(target - spec.branch_matrix(l)) for l in range(n))
    return DilationErrorReport(
        measured=measured,
        certified_gap_bound=bound,
        diamond_bound_measured=2.0 * measured,
        diamond_bound_certified=2.0 * bound,
        eta=float(eta),
        delta_cert=float(delta_cert),
        max_branch_distance=max_branch,
        per_k_measured=per_k,
    )


def dilation_pair(spec: QuasigroupProtocolSpec) -> tuple[np.ndarray, np.ndarray]:
    """Dense isometric dilations (ideal, implemented) on system (x) outcome space.

    Columns are indexed by the system space tensored with the first outcome
    ket; rows run over the full outcome register.  Used as an independent
    route to the dilation gap in tests.
    """
    n = spec.order
    d = spec.d_a * spec.d_b
    ideal = np.zeros((d * n, d), dtype=complex)
    actual = np.zeros((d * n, d), dtype=complex)
    target = spec.target_matrix()
    for l in range(n):
        ideal[l * d:(l + 1) * d] = target / math.sqrt(n)
        actual[l * d:(l + 1) * d] = spec.branch_matrix(l) / math.sqrt(n)
    return ideal, actual


# --------------------------------------------------------------------------- #
#                         hidden-outcome variant                              #
# --------------------------------------------------------------------------- #


def shift_register_check(n: int) -> float:
    """Worst-case deviation of the shared-randomness relay from the ideal pointer.

    For every hypothetical outcome l and every seed r the relay must leave the
    receiving register in exactly ``|l>``: shift the sender's register down by
    l, measure it (outcome s), shift the receiver's register down by s.
    """
    worst = 0.0
    layout = RegisterLayout.of(("x", n), ("y", n))
    for l in range(n):
        for r in range(n):
            state = basis_state(layout, {"x": r, "y": r})
            state = apply_on(state, np.linalg.matrix_power(shift_gate(n), l), "x")
            branches = measure_registers(state, "x")
            if len(branches) != 1:
                return 2.0
            s = branches[0].outcome["x"]
            if s != (r - l) % n:
                return 2.0
            post = apply_on(branches[0].post_state,
                            np.linalg.matrix_power(shift_gate(n), s), "y")
            ideal = basis_state(RegisterLayout.of(("y", n)), {"y": l})
            worst = max(worst, post.distance(ideal))
    return worst


@dataclass(frozen=True, eq=False)
class HiddenRunRecord:
    """Trajectory ensemble of the hidden-outcome circuit on one input state."""

    trajectories: list                # (seed_r, outcome_m, outcome_s, weight, PureState)
    output_density: np.ndarray        # induced state on (control, target)
    expected_density: np.ndarray      # uniform branch mixture applied to the input
    deviation: float
    ensemble: UnitaryEnsembleChannel


def run_hidden_variant(spec: QuasigroupProtocolSpec, state: PureState,
                       control: str = "A", target: str = "B") -> HiddenRunRecord:
    """Simulate the hidden-outcome circuit as pure trajectories over the shared seed.

    The two ancillas of the basic protocol are joined by a classically
    correlated pair (x, y); the branch pointer never gets measured, and the
    corrections are quantum-controlled off the unmeasured registers, which are
    discarded at the end.
    """
    n = spec.order
    layout = state.layout
    if set(layout.names) != {control, target}:
        raise DimensionMismatch("hidden variant expects a bare (control, target) input")
    if layout.dim_of(control) != spec.d_a or layout.dim_of(target) != spec.d_b:
        raise DimensionMismatch("input registers do not match the protocol spec")
    _check_support(state, control, spec.n_terms, spec.d_a)

    d = spec.d_a * spec.d_b
    fam = branch_family(spec)
    rho_out = np.zeros((d, d), dtype=complex)
    trajectories = []
    for r in range(n):
        final_states = _hidden_trajectories(spec, state, control, target, r)
        for m, s, prob, st in final_states:
            weight = prob / n
            rho = partial_trace(st, (control, target))
            rho_out += weight * rho
            trajectories.append((r, m, s, weight, st))
    psi = state.amps
    expected = fam.channel().apply(np.outer(psi, psi.conj()))
    deviation = operator_norm(rho_out - expected)
    return HiddenRunRecord(trajectories=trajectories, output_density=rho_out,
                           expected_density=expected, deviation=deviation,
                           ensemble=fam.channel())


def _hidden_trajectories(spec: QuasigroupProtocolSpec, state: PureState,
                         control: str, target: str, seed_r: int):
    """Pure-state branches of the hidden circuit for one shared-randomness seed."""
    n = spec.order
    x_layout = RegisterLayout.of(("x", n), ("y", n))
    seed = basis_state(x_layout, {"x": seed_r, "y": seed_r})
    full = product_state(state, maximally_entangled(n, names=("a", "b")), seed)

    shift_blocks = {i: left_div_permutation(spec.quasigroup, k)
                    for i, k in enumerate(spec.term_map)}
    full = apply_on(full, controlled_gate(spec.d_a, shift_blocks, n), (control, "a"))
    rep_blocks = {j: spec.rep.matrices[j] for j in range(n)}
    full = apply_on(full, controlled_gate(n, rep_blocks, spec.d_b), ("b", target))
    full = apply_on(full, fourier_gate(n), "b")
    # branch pointer drives the sender's shared register down by l
    x_shift = shift_gate(n)
    shift_powers = {l: np.linalg.matrix_power(x_shift, l) for l in range(n)}
    full = apply_on(full, controlled_gate(n, shift_powers, n), ("a", "x"))

    out = []
    for b_branch in measure_registers(full, "b"):
        m = b_branch.outcome["b"]
        for x_branch in measure_registers(b_branch.post_state, "x"):
            s = x_branch.outcome["x"]
            st = apply_on(x_branch.post_state, shift_powers[s], "y")
            corr = {l: correction_gate_for(spec, l, m) for l in range(n)}
            st = apply_on(st, controlled_gate(n, corr, spec.d_a), ("a", control))
            vdag = {l: spec.rep.matrices[l].conj().T for l in range(n)}
            st = apply_on(st, controlled_gate(n, vdag, spec.d_b), ("y", target))
            out.append((m, s, b_branch.probability * x_branch.probability, st))
    return out


@dataclass(frozen=True)
class ChannelComparison:
    choi_circuit: np.ndarray
    choi_ensemble: np.ndarray
    distance: float


def hidden_variant_choi(spec: QuasigroupProtocolSpec) -> ChannelComparison:
    """Choi matrix of the hidden circuit versus the uniform branch mixture.

    Feeds half of a maximally entangled pair through the circuit; the input
    control dimension must equal the number of terms so the channel and the
    mixture share one domain.
    """
    if spec.d_a != spec.n_terms:
        raise UnsupportedInput("channel comparison needs every control state to carry a term")
    n = spec.order
    d = spec.d_a * spec.d_b
    layout = RegisterLayout.of(("A", spec.d_a), ("B", spec.d_b),
                               ("Ar", spec.d_a), ("Br", spec.d_b))
    amps = np.zeros((spec.d_a, spec.d_b, spec.d_a, spec.d_b), dtype=complex)
    for i in range(spec.d_a):
        for t in range(spec.d_b):
            amps[i, t, i, t] = 1.0 / math.sqrt(d)
    entangled = PureState(layout, amps.reshape(-1))

    choi_circ = np.zeros((d * d, d * d), dtype=complex)
    for r in range(n):
        for m, s, prob, st in _hidden_trajectories(spec, entangled, "A", "B", r):
            rho = partial_trace(st, ("A", "B", "Ar", "Br"))
            choi_circ += (prob / n) * rho
    choi_circ *= d   # rescale to the unnormalized pair-state convention

    choi_ens = choi_matrix(branch_family(spec).channel())
    distance = operator_norm(choi_circ - choi_ens)
    return ChannelComparison(choi_circuit=choi_circ, choi_ensemble=choi_ens,
                             distance=distance)
