"""Dense statevector simulation over named registers, plus channel helpers.

States live on a :class:`RegisterLayout`, an ordered list of named registers of
arbitrary dimension.  Amplitudes are stored flat in row-major register order,
so the basis index of the joint ket ``|i_0, i_1, ...>`` is obtained by mixed
radix encoding with the first register most significant.  Gates are applied on
any subset of registers with identity elsewhere; measurements enumerate every
outcome branch exactly instead of sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

ZERO_TOL = 1e-10
BRANCH_PROB_FLOOR = 1e-12


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value of a matrix."""
    m = np.asarray(matrix, dtype=complex)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[0])


def operator_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a (..., n, n) stack.

    Batched LAPACK keeps full precision; closed-form 2x2 shortcuts lose half
    the digits exactly when the two singular values coincide, which is the
    generic case for differences of special unitaries.
    """
    stack = np.asarray(stack, dtype=complex)
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


def max_hermitian_eigenvalue(matrix: np.ndarray) -> float:
    """Largest eigenvalue of a Hermitian matrix."""
    return float(np.linalg.eigvalsh(np.asarray(matrix, dtype=complex))[-1])


def is_unitary(matrix: np.ndarray, tol: float = ZERO_TOL) -> bool:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return operator_norm(m.conj().T @ m - np.eye(m.shape[0])) <= tol


def dagger(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=complex).conj().T


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered named registers; total dimension is the product of the parts."""

    names: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.dims):
            raise DimensionMismatch("layout names and dims differ in length")
        if len(set(self.names)) != len(self.names):
            raise DimensionMismatch(f"duplicate register names in {self.names}")
        if any(d < 1 for d in self.dims):
            raise DimensionMismatch(f"register dimensions must be >= 1, got {self.dims}")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(str(n) for n, _ in pairs), tuple(int(d) for _, d in pairs))

    @property
    def dim(self) -> int:
        return int(math.prod(self.dims))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DimensionMismatch(f"no register named {name!r} in {self.names}") from None

    def dim_of(self, name: str) -> int:
        return self.dims[self.axis(name)]

    def without(self, names) -> "RegisterLayout":
        drop = set(names)
        keep = [(n, d) for n, d in zip(self.names, self.dims) if n not in drop]
        return RegisterLayout(tuple(n for n, _ in keep), tuple(d for _, d in keep))

    def extended(self, *pairs: tuple[str, int]) -> "RegisterLayout":
        return RegisterLayout(self.names + tuple(n for n, _ in pairs),
                              self.dims + tuple(int(d) for _, d in pairs))


@dataclass(frozen=True)
class PureState:
    """Normalized pure state on a layout; set ``normalized=False`` for raw intermediates."""

    layout: RegisterLayout
    amps: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        object.__setattr__(self, "amps", amps)
        if amps.size != self.layout.dim:
            raise DimensionMismatch(
                f"amplitude vector of length {amps.size} does not fit layout of dim {self.layout.dim}")
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > ZERO_TOL:
            raise DimensionMismatch(
                f"state norm {np.linalg.norm(amps):.3e} is not 1 within {ZERO_TOL}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.layout.dims)

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amps, other.amps))

    def distance(self, other: "PureState") -> float:
        """Euclidean distance between amplitude vectors, no phase alignment."""
        return float(np.linalg.norm(self.amps - other.amps))


def basis_state(layout: RegisterLayout, indices: dict[str, int]) -> PureState:
    """Computational basis ket with the given index on each register."""
    idx = 0
    for name, d in zip(layout.names, layout.dims):
        k = int(indices.get(name, 0))
        if not 0 <= k < d:
            raise DimensionMismatch(f"index {k} out of range for register {name} of dim {d}")
        idx = idx * d + k
    amps = np.zeros(layout.dim, dtype=complex)
    amps[idx] = 1.0
    return PureState(layout, amps)


def product_state(*parts: PureState) -> PureState:
    """Tensor product of states on disjoint layouts, in the given order."""
    layout = parts[0].layout
    amps = parts[0].amps
    for p in parts[1:]:
        layout = layout.extended(*zip(p.layout.names, p.layout.dims))
        amps = np.kron(amps, p.amps)
    return PureState(layout, amps, normalized=all(p.normalized for p in parts))


def maximally_entangled(n: int, names: tuple[str, str] = ("a", "b")) -> PureState:
    """Rank-n maximally entangled pair of n-dimensional registers."""
    if n < 1:
        raise DimensionMismatch(f"Schmidt rank must be >= 1, got {n}")
    layout = RegisterLayout.of((names[0], n), (names[1], n))
    amps = np.zeros((n, n), dtype=complex)
    amps[np.arange(n), np.arange(n)] = 1.0 / math.sqrt(n)
    return PureState(layout, amps.reshape(-1))


def apply_on(state: PureState, gate: np.ndarray, registers) -> PureState:
    """Apply a gate on the named registers (in the given order), identity elsewhere."""
    registers = [registers] if isinstance(registers, str) else list(registers)
    layout = state.layout
    axes = [layout.axis(r) for r in registers]
    dims = [layout.dims[a] for a in axes]
    dg = math.prod(dims)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (dg, dg):
        raise DimensionMismatch(
            f"gate shape {gate.shape} does not act on registers {registers} of joint dim {dg}")
    t = state.tensor()
    t = np.moveaxis(t, axes, range(len(axes)))
    moved_shape = t.shape
    t = gate @ t.reshape(dg, -1)
    t = np.moveaxis(t.reshape(moved_shape), range(len(axes)), axes)
    return PureState(layout, t.reshape(-1), normalized=state.normalized)


def controlled_gate(control_dim: int, targets: dict[int, np.ndarray],
                    target_dim: int) -> np.ndarray:
    """Block-diagonal gate applying ``targets[c]`` when the control register is ``|c>``.

    Controls without an entry act as identity on the target.
    """
    out = np.zeros((control_dim * target_dim, control_dim * target_dim), dtype=complex)
    eye = np.eye(target_dim, dtype=complex)
    for c in range(control_dim):
        block = np.asarray(targets.get(c, eye), dtype=complex)
        if block.shape != (target_dim, target_dim):
            raise DimensionMismatch(
                f"controlled block for c={c} has shape {block.shape}, expected {(target_dim,)*2}")
        out[c * target_dim:(c + 1) * target_dim, c * target_dim:(c + 1) * target_dim] = block
    return out


def fourier_gate(n: int) -> np.ndarray:
    """Discrete Fourier transform with entries exp(2*pi*i*m*j/n)/sqrt(n)."""
    idx = np.arange(n)
    # integer products reduced mod n before exponentiating; phases are 2*pi periodic
    return np.exp(2j * np.pi * (np.outer(idx, idx) % n) / n) / math.sqrt(n)


def shift_gate(n: int, step: int = 1) -> np.ndarray:
    """Cyclic shift mapping ``|j>`` to ``|j - step mod n>``."""
    out = np.zeros((n, n), dtype=complex)
    out[(np.arange(n) - step) % n, np.arange(n)] = 1.0
    return out


@dataclass(frozen=True)
class BranchOutcome:
    """One measurement branch: outcome per register, its probability, post state."""

    outcome: dict[str, int]
    probability: float
    post_state: PureState


def measure_registers(state: PureState, registers) -> list[BranchOutcome]:
    """Measure the named registers in the computational basis, enumerating all branches.

    Branches with probability below ``BRANCH_PROB_FLOOR`` are dropped.  Post states
    live on the layout with the measured registers removed.
    """
    registers = [registers] if isinstance(registers, str) else list(registers)
    layout = state.layout
    axes = [layout.axis(r) for r in registers]
    dims = [layout.dims[a] for a in axes]
    dm = math.prod(dims)
    t = np.moveaxis(state.tensor(), axes, range(len(axes))).reshape(dm, -1)
    probs = np.sum(np.abs(t) ** 2, axis=1)
    total = float(probs.sum())
    if abs(total - 1.0) > ZERO_TOL:
        raise DimensionMismatch(f"measurement on non-normalized state, total prob {total:.3e}")
    reduced = layout.without(registers)
    branches = []
    for flat in np.flatnonzero(probs > BRANCH_PROB_FLOOR):
        values = np.unravel_index(int(flat), dims)
        outcome = {r: int(v) for r, v in zip(registers, values)}
        post = t[flat] / math.sqrt(probs[flat])
        branches.append(BranchOutcome(outcome, float(probs[flat]),
                                      PureState(reduced, post)))
    return branches


def partial_trace(state: PureState, keep) -> np.ndarray:
    """Density matrix on the named registers after tracing out everything else."""
    keep = [keep] if isinstance(keep, str) else list(keep)
    layout = state.layout
    axes = [layout.axis(r) for r in keep]
    dk = math.prod(layout.dims[a] for a in axes)
    t = np.moveaxis(state.tensor(), axes, range(len(axes))).reshape(dk, -1)
    return t @ t.conj().T


@dataclass(frozen=True)
class UnitaryEnsembleChannel:
    """Mixed-unitary channel given as (probability, unitary) pairs on one space."""

    terms: tuple[tuple[float, np.ndarray], ...]

    def __post_init__(self):
        terms = tuple((float(p), np.asarray(u, dtype=complex)) for p, u in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise DimensionMismatch("channel needs at least one term")
        d = terms[0][1].shape[0]
        for p, u in terms:
            if p < -ZERO_TOL:
                raise DimensionMismatch(f"negative probability {p}")
            if u.shape != (d, d):
                raise DimensionMismatch("ensemble unitaries have mismatched shapes")
            if not is_unitary(u, tol=1e-9):
                raise DimensionMismatch("ensemble contains a non-unitary operator")
        if abs(sum(p for p, _ in terms) - 1.0) > ZERO_TOL:
            raise DimensionMismatch("ensemble probabilities do not sum to 1")

    @property
    def dim(self) -> int:
        return self.terms[0][1].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return sum(p * (u @ rho @ u.conj().T) for p, u in self.terms)


def choi_matrix(channel: UnitaryEnsembleChannel) -> np.ndarray:
    """Choi matrix sum_l p_l vec(U_l) vec(U_l)^dag with the unnormalized pair state.

    Row-major vec: the (s, t) entry of U sits at index s*d + t, so the Choi matrix
    acts on system (x) reference ordered indices.  Its trace equals the system dim.
    """
    d = channel.dim
    out = np.zeros((d * d, d * d), dtype=complex)
    for p, u in channel.terms:
        v = u.reshape(-1)
        out += p * np.outer(v, v.conj())
    return out


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a Ginibre matrix."""
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def haar_special_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary rescaled to determinant one."""
    u = haar_unitary(d, rng)
    det = np.linalg.det(u)
    return u * np.exp(-1j * np.angle(det) / d)


def random_pure_state(layout: RegisterLayout, rng: np.random.Generator) -> PureState:
    amps = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return PureState(layout, amps / np.linalg.norm(amps))
