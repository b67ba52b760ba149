"""Finite groups, projective representations, and right quasigroups.

All structures are index based: elements are the integers 0..N-1 and products
are table lookups.  Construction validates the defining axioms and derives the
auxiliary tables (identity, inverses, left division) so downstream code never
re-checks them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoIdentity,
    NoInverse,
    NotAssociative,
    NotProjectiveRep,
    NotRightQuasigroup,
)
from .qsim import operator_norm, operator_norms

UNIT_MODULUS_TOL = 1e-10
REP_RESIDUAL_TOL = 1e-9
IDENTITY_TOL = 1e-12


def _as_index_table(table, *, copy: bool = True) -> np.ndarray:
    t = np.asarray(table)
    if not np.issubdtype(t.dtype, np.integer):
        t = t.astype(np.int64)
        copy = False
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DimensionMismatch(f"expected a square table, got shape {t.shape}")
    n = t.shape[0]
    if n == 0:
        raise DimensionMismatch("empty table")
    if t.min() < 0 or t.max() >= n:
        raise DimensionMismatch(f"table entries must lie in 0..{n - 1}")
    # large tables stay compact; int16 covers every order this package builds
    dtype = np.int16 if n < 2 ** 15 else np.int32
    if t.dtype != dtype:
        return t.astype(dtype)
    return t.copy() if copy else t


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    """Finite group of order N given by its Cayley table (row*column product)."""

    order: int
    cayley: np.ndarray
    identity: int
    inverse: np.ndarray

    def mul(self, a: int, b: int) -> int:
        return int(self.cayley[a, b])

    def inv(self, a: int) -> int:
        return int(self.inverse[a])

    def to_right_quasigroup(self) -> "RightQuasigroup":
        return right_quasigroup_from_table(self.cayley)


def group_from_cayley(table) -> FiniteGroup:
    """Validate a Cayley table and derive identity and inverses."""
    cayley = _as_index_table(table)
    n = cayley.shape[0]
    idx = np.arange(n)

    identity = None
    for e in range(n):
        if np.array_equal(cayley[e], idx) and np.array_equal(cayley[:, e], idx):
            identity = e
            break
    if identity is None:
        raise NoIdentity("no two-sided identity element in the table")

    inverse = np.full(n, -1, dtype=np.int64)
    for a in range(n):
        right = np.flatnonzero(cayley[a] == identity)
        left = np.flatnonzero(cayley[:, a] == identity)
        both = np.intersect1d(right, left)
        if both.size == 0:
            raise NoInverse(f"element {a} has no two-sided inverse")
        inverse[a] = both[0]

    # (a*b)*c vs a*(b*c) on all triples at once; identity, inverses and
    # associativity together force every row and column to be a permutation
    lhs = cayley[cayley]      # lhs[a,b,c] = (a*b)*c
    rhs = cayley[:, cayley]   # rhs[a,b,c] = a*(b*c)
    bad = np.argwhere(lhs != rhs)
    if bad.size:
        a, b, c = (int(x) for x in bad[0])
        raise NotAssociative(f"({a}*{b})*{c} != {a}*({b}*{c})")

    cayley.setflags(write=False)
    inverse.setflags(write=False)
    return FiniteGroup(order=n, cayley=cayley, identity=identity, inverse=inverse)


def cyclic_group(n: int) -> FiniteGroup:
    idx = np.arange(n)
    return group_from_cayley((idx[:, None] + idx[None, :]) % n)


def klein_four_group() -> FiniteGroup:
    idx = np.arange(4)
    return group_from_cayley(idx[:, None] ^ idx[None, :])


def direct_product_table(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Componentwise product table with pairs packed as a*n2 + b."""
    n1, n2 = t1.shape[0], t2.shape[0]
    a1, b1 = np.divmod(np.arange(n1 * n2), n2)
    left = t1[np.ix_(a1, a1)]
    right = t2[np.ix_(b1, b1)]
    return left * n2 + right


@dataclass(frozen=True, eq=False)
class RightQuasigroup:
    """Structure where y -> y*a is a bijection for every fixed a.

    ``table[y, a]`` is the product y*a and ``left_div[j, k]`` is the unique l
    with l*k = j.
    """

    order: int
    table: np.ndarray
    left_div: np.ndarray

    def mul(self, y: int, a: int) -> int:
        return int(self.table[y, a])

    def ldiv(self, j: int, k: int) -> int:
        return int(self.left_div[j, k])


def right_quasigroup_from_table(table) -> RightQuasigroup:
    """Validate per-column bijectivity and compute the left-division table."""
    return quasigroup_from_transposed(np.ascontiguousarray(np.asarray(table).T))


def quasigroup_from_transposed(table_t: np.ndarray) -> RightQuasigroup:
    """Build from the transposed table (row a holds the products y*a).

    The left-division scatter plus a round-trip gather proves each column of
    the table is a permutation: a value missing from column a leaves its
    left_div slot at the zero initialization and the gathered product cannot
    reproduce it.  Working row-wise on the transposed array keeps the scatter
    and gather cache friendly for large orders.
    """
    table_t = _as_index_table(table_t, copy=False)
    n = table_t.shape[0]
    row = np.arange(n, dtype=table_t.dtype)[None, :]
    left_div_t = np.zeros_like(table_t)
    np.put_along_axis(left_div_t, table_t, np.broadcast_to(row, (n, n)), axis=1)
    ok = np.take_along_axis(table_t, left_div_t, axis=1) == row
    if not ok.all():
        bad = int(np.argwhere(~ok)[0][0])
        raise NotRightQuasigroup(f"column {bad} is not a permutation of 0..{n - 1}")
    table_t.setflags(write=False)
    left_div_t.setflags(write=False)
    return RightQuasigroup(order=n, table=table_t.T, left_div=left_div_t.T)


@dataclass(frozen=True, eq=False)
class FactorSystem:
    """Unit-modulus scalars lam[g, h] relating pair products to single elements."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=complex)
        object.__setattr__(self, "lam", lam)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise DimensionMismatch(f"factor table must be square, got {lam.shape}")
        if np.max(np.abs(np.abs(lam) - 1.0)) > UNIT_MODULUS_TOL:
            raise NotProjectiveRep("factor system entries are not unit modulus")

    def cocycle_residual(self, group: FiniteGroup) -> float:
        """Max violation of lam(g,h)*lam(g*h,k) = lam(g,h*k)*lam(h,k) over all triples."""
        lam, cay = self.lam, group.cayley
        lhs = lam[:, :, None] * lam[cay, :]
        rhs = lam[:, cay] * lam[None, :, :]
        return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True, eq=False)
class ProjectiveRep:
    """Family of unitaries indexed by a group or right quasigroup.

    When ``factor_system`` is present the family multiplies as a projective
    representation of the group; a plain (ordinary) family over a right
    quasigroup carries no factors.
    """

    structure: FiniteGroup | RightQuasigroup
    matrices: np.ndarray
    factor_system: FactorSystem | None = None

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=complex)
        object.__setattr__(self, "matrices", mats)
        n = self.structure.order
        if mats.ndim != 3 or mats.shape[0] != n or mats.shape[1] != mats.shape[2]:
            raise DimensionMismatch(
                f"expected {n} square matrices, got array of shape {mats.shape}")
        d = mats.shape[1]
        eye = np.eye(d)
        residual = operator_norms(np.einsum("kab,kac->kbc", mats.conj(), mats) - eye)
        if residual.max() > UNIT_MODULUS_TOL:
            k = int(np.argmax(residual))
            raise NotProjectiveRep(f"matrix {k} is not unitary (residual {residual[k]:.2e})")
        if isinstance(self.structure, FiniteGroup):
            e = self.structure.identity
            if operator_norm(mats[e] - eye) > IDENTITY_TOL:
                raise NotProjectiveRep(f"matrix at the identity label {e} is not the identity")
        if self.factor_system is not None:
            res = rep_product_residual(self.structure, mats, self.factor_system)
            if res > REP_RESIDUAL_TOL:
                raise NotProjectiveRep(f"factor system residual {res:.2e} exceeds tolerance")

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]


def rep_product_residual(group: FiniteGroup, matrices: np.ndarray,
                         factors: FactorSystem) -> float:
    """Max over pairs of || V_g V_h - lam(g,h) V_{g*h} ||_inf."""
    n = group.order
    prods = np.einsum("gab,hbc->ghac", matrices, matrices)
    expected = factors.lam[:, :, None, None] * matrices[group.cayley]
    return float(operator_norms((prods - expected).reshape(n * n, *matrices.shape[1:])).max())


def derive_factor_system(rep: ProjectiveRep) -> FactorSystem:
    """Extract the pair factors of a projective representation from its matrices.

    Uses lam(g,h) = tr(V_{g*h}^dag V_g V_h)/d and verifies the residual, so the
    caller only ever supplies matrices.
    """
    if not isinstance(rep.structure, FiniteGroup):
        raise NotProjectiveRep("factor systems are defined over groups only")
    group = rep.structure
    mats = rep.matrices
    d = rep.dim
    prods = np.einsum("gab,hbc->ghac", mats, mats)
    lam = np.einsum("ghab,ghab->gh", mats[group.cayley].conj(), prods) / d
    if np.max(np.abs(np.abs(lam) - 1.0)) > UNIT_MODULUS_TOL:
        g, h = np.unravel_index(int(np.argmax(np.abs(np.abs(lam) - 1.0))), lam.shape)
        raise NotProjectiveRep(
            f"pair ({g},{h}) yields |lam| = {abs(lam[g, h]):.6f}, not a projective rep")
    factors = FactorSystem(lam)
    res = rep_product_residual(group, mats, factors)
    if res > REP_RESIDUAL_TOL:
        raise NotProjectiveRep(f"product residual {res:.2e}: not a projective rep of this group")
    return factors


def projective_rep(group: FiniteGroup, matrices) -> ProjectiveRep:
    """Build a ProjectiveRep with its factor system derived and validated."""
    bare = ProjectiveRep(group, np.asarray(matrices, dtype=complex))
    factors = derive_factor_system(bare)
    return ProjectiveRep(group, bare.matrices, factors)


def ordinary_rep(structure: FiniteGroup | RightQuasigroup, matrices) -> ProjectiveRep:
    """Representation without factors (the right-quasigroup and lam==1 cases)."""
    return ProjectiveRep(structure, np.asarray(matrices, dtype=complex))


@dataclass(frozen=True)
class ApproxRepCertificate:
    """Counted violations of the approximate-representation condition at level eta.

    For each k, ``per_k_violation_count[k]`` counts the j with
    ``|| V_{l(j,k)} V_k - V_j ||_inf >= eta``; ``delta_cert`` is the worst
    fraction over k, so the family is an (eta, delta_cert) approximate
    representation of the quasigroup.
    """

    eta: float
    delta_cert: float
    per_k_violation_count: np.ndarray
    max_residual: float


def certify_approx_rep(matrices, quasigroup: RightQuasigroup, eta: float) -> ApproxRepCertificate:
    """Exhaustively recount the approximation condition over every (j, k) pair.

    Families of 2x2 special unitaries use their unit-quaternion coordinates,
    where the operator-norm residual is a Euclidean distance; everything else
    goes through singular values.  Both routes evaluate all n^2 residuals.
    """
    mats = np.asarray(matrices, dtype=complex)
    n = quasigroup.order
    if mats.ndim != 3 or mats.shape[0] != n or mats.shape[1] != mats.shape[2]:
        raise DimensionMismatch(
            f"need {n} square matrices for a quasigroup of order {n}, got {mats.shape}")
    if eta <= 0:
        raise DimensionMismatch(f"eta must be positive, got {eta}")
    counts = np.zeros(n, dtype=np.int64)
    max_residual = 0.0
    from .qgbuilder import quaternion_product, su2_quaternions

    quats = su2_quaternions(mats) if mats.shape[1] == 2 else None
    if quats is not None:
        # labels with bitwise-equal matrices and left-division columns have
        # equal counts; recount one representative per exact duplicate group
        ld_t = np.ascontiguousarray(quasigroup.left_div.T)
        groups: dict[tuple[bytes, bytes], int] = {}
        rep_for = np.empty(n, dtype=np.int64)
        for k in range(n):
            rep_for[k] = groups.setdefault((ld_t[k].tobytes(), mats[k].tobytes()), k)
        reps = np.unique(rep_for)
        eta_sq = eta * eta
        max_sq = 0.0
        rep_counts = np.zeros(len(reps), dtype=np.int64)
        chunk = max(1, min(len(reps), (1 << 20) // max(n, 1)))
        for k0 in range(0, len(reps), chunk):
            sel = reps[k0:k0 + chunk]
            diff = quaternion_product(quats[ld_t[sel]], quats[sel, None, :])
            diff -= quats[None, :, :]
            sq = np.einsum("kjc,kjc->kj", diff, diff)
            rep_counts[k0:k0 + chunk] = np.count_nonzero(sq >= eta_sq, axis=1)
            max_sq = max(max_sq, float(sq.max()))
        max_residual = math.sqrt(max_sq)
        lookup = {int(r): int(c) for r, c in zip(reps, rep_counts)}
        counts[:] = [lookup[int(r)] for r in rep_for]
    else:
        for k in range(n):
            lefts = mats[quasigroup.left_div[:, k]]
            residual = operator_norms(lefts @ mats[k] - mats)
            counts[k] = int(np.count_nonzero(residual >= eta))
            max_residual = max(max_residual, float(residual.max()))
    counts.setflags(write=False)
    return ApproxRepCertificate(
        eta=float(eta),
        delta_cert=float(counts.max()) / n,
        per_k_violation_count=counts,
        max_residual=max_residual,
    )
