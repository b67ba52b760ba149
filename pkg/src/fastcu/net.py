"""Word-built families of special unitaries that approximate all of SU(d).

The base alphabet is a fixed triple of SU(2) matrices (plus inverses) whose
products equidistribute rapidly.  For d > 2 the family is assembled from
two-level blocks embedded on adjacent coordinate pairs.

Slot convention
---------------
A d-dimensional element is a product of r = d(d-1)/2 embedded SU(2) blocks.
Block position ``p`` means coordinates (p, p+1), 0-indexed.  The slot order is
the Givens elimination sequence

    for column c = 0 .. d-2:  positions d-2, d-3, ..., c

read left to right in the matrix product.  This is the same sequence the
two-level decomposition emits, so a blockwise approximation of any special
unitary is itself an element of the enumerated family.  (The naive "row by
row" slot order cannot reach all of SU(d) for d >= 3: the product of a block
on (0,1) followed by blocks on (1,2) always has a vanishing corner entry.)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, NetTooLarge, NotSpecial, NotUnitary
from .qsim import operator_norm, operator_norms

MIXING_RATE = math.sqrt(5.0) / 3.0
DEFAULT_CAP = 50_000
UNITARY_TOL = 1e-10
SPECIAL_TOL = 1e-8
RECONSTRUCTION_TOL = 1e-9

_V1 = np.array([[1, 2j], [2j, 1]], dtype=complex) / math.sqrt(5.0)
_V2 = np.array([[1, 2], [-2, 1]], dtype=complex) / math.sqrt(5.0)
_V3 = np.array([[1 + 2j, 0], [0, 1 - 2j]], dtype=complex) / math.sqrt(5.0)
_ALPHABET = (_V1, _V2, _V3, _V1.conj().T, _V2.conj().T, _V3.conj().T)


def embed_block(block: np.ndarray, position: int, d: int) -> np.ndarray:
    """Identity matrix of size d with ``block`` on coordinates (position, position+1)."""
    if not 0 <= position <= d - 2:
        raise DimensionMismatch(f"block position {position} out of range for dim {d}")
    out = np.eye(d, dtype=complex)
    out[position:position + 2, position:position + 2] = block
    return out


def base_generators(d: int) -> list[np.ndarray]:
    """Generator set: the three SU(2) matrices, embedded at every adjacent pair for d > 2."""
    if d < 2:
        raise DimensionMismatch(f"need d >= 2, got {d}")
    if d == 2:
        return [v.copy() for v in _ALPHABET[:3]]
    return [embed_block(v, pos, d) for pos in range(d - 1) for v in _ALPHABET[:3]]


def slot_pattern(d: int) -> tuple[int, ...]:
    """Block positions of the r = d(d-1)/2 slots, in matrix-product order."""
    return tuple(pos for c in range(d - 1) for pos in range(d - 2, c - 1, -1))


@dataclass(frozen=True)
class GateWord:
    """Sequence of alphabet factors (generator index, inverse flag) with its product."""

    factors: tuple[tuple[int, bool], ...]

    def matrix(self) -> np.ndarray:
        out = np.eye(2, dtype=complex)
        for gen, inv in self.factors:
            f = _ALPHABET[gen + 3] if inv else _ALPHABET[gen]
            out = out @ f
        return out


def enumerate_words(m: int) -> tuple[list[GateWord], np.ndarray]:
    """All (2*3)^m length-m words over the alphabet, with their product matrices."""
    if m < 1:
        raise DimensionMismatch(f"word length must be >= 1, got {m}")
    # alphabet order: V1 V2 V3 then their inverses; word index grows with the
    # last factor varying fastest
    factors = [(0, False), (1, False), (2, False), (0, True), (1, True), (2, True)]
    stack = np.stack(_ALPHABET)
    mats = np.eye(2, dtype=complex)[None]
    seqs: list[tuple[tuple[int, bool], ...]] = [()]
    for _ in range(m):
        mats = np.einsum("wab,fbc->wfac", mats, stack).reshape(-1, 2, 2)
        seqs = [w + (f,) for w in seqs for f in factors]
    return [GateWord(w) for w in seqs], mats


@dataclass(frozen=True, eq=False)
class NetElementSpec:
    """Word assignment for each slot, optionally inverted as a whole."""

    slot_words: tuple[int, ...]
    inverted: bool


@dataclass(frozen=True, eq=False)
class NetFamily:
    """Labeled family of special unitaries; duplicates are kept as distinct labels."""

    d: int
    matrices: np.ndarray
    m: int | None = None
    words: list[GateWord] | None = None
    element_specs: tuple[NetElementSpec, ...] | None = None
    mixing_bound: float | None = None

    @property
    def size(self) -> int:
        return self.matrices.shape[0]

    def matrix(self, label: int) -> np.ndarray:
        return self.matrices[label]

    @property
    def is_word_built(self) -> bool:
        return self.element_specs is not None

    @classmethod
    def from_unitaries(cls, matrices, d: int | None = None) -> "NetFamily":
        mats = np.asarray(matrices, dtype=complex)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionMismatch(f"expected a stack of square matrices, got {mats.shape}")
        if d is not None and mats.shape[1] != d:
            raise DimensionMismatch(f"matrices have dim {mats.shape[1]}, expected {d}")
        res = operator_norms(np.einsum("kab,kac->kbc", mats.conj(), mats) - np.eye(mats.shape[1]))
        if res.max() > UNITARY_TOL:
            raise NotUnitary(f"element {int(res.argmax())} is not unitary")
        return cls(d=mats.shape[1], matrices=mats)

    def duplicate_report(self, decimals: int = 9) -> dict[int, int]:
        """Diagnostic: label count per distinct matrix, keyed by first label seen."""
        seen: dict[bytes, int] = {}
        counts: dict[int, int] = {}
        for i in range(self.size):
            key = np.round(self.matrices[i], decimals).tobytes()
            first = seen.setdefault(key, i)
            counts[first] = counts.get(first, 0) + 1
        return counts

    def distinct_classes(self, decimals: int = 9) -> np.ndarray:
        """Class id per label; labels with equal matrices share an id."""
        seen: dict[bytes, int] = {}
        out = np.empty(self.size, dtype=np.int64)
        for i in range(self.size):
            key = np.round(self.matrices[i], decimals).tobytes()
            out[i] = seen.setdefault(key, len(seen))
        return out


def net_size(d: int, m: int) -> int:
    """Exact size of the family with inverses included: 2 * 6^(m*d(d-1)/2)."""
    return 2 * 6 ** (m * d * (d - 1) // 2)


def mixing_bound(d: int, m: int) -> float:
    """Upper bound d(d-1)/2 * (sqrt(5)/3)^m on the equidistribution rate."""
    return (d * (d - 1) / 2) * MIXING_RATE ** m


def build_net(d: int, m: int, cap: int = DEFAULT_CAP) -> NetFamily:
    """Enumerate the full word-built family of degree m in dimension d.

    Every slot assignment is listed, followed by the inverse of every element;
    identical matrices under different labels stay distinct, so the size is
    exactly ``net_size(d, m)``.
    """
    if d < 2 or m < 1:
        raise DimensionMismatch(f"need d >= 2 and m >= 1, got d={d}, m={m}")
    total = net_size(d, m)
    if total > cap:
        raise NetTooLarge(f"family of size {total} exceeds the cap {cap}")
    words, word_mats = enumerate_words(m)
    pattern = slot_pattern(d)
    r = len(pattern)
    n_words = len(words)

    half = total // 2
    mats = np.empty((total, d, d), dtype=complex)
    specs: list[NetElementSpec] = []
    if d == 2:
        mats[:half] = word_mats
        for w in range(n_words):
            specs.append(NetElementSpec((w,), False))
    else:
        for label, assignment in enumerate(itertools.product(range(n_words), repeat=r)):
            out = np.eye(d, dtype=complex)
            for slot, w in zip(pattern, assignment):
                out = out @ embed_block(word_mats[w], slot, d)
            mats[label] = out
            specs.append(NetElementSpec(tuple(assignment), False))
    mats[half:] = np.conj(np.transpose(mats[:half], (0, 2, 1)))
    for label in range(half):
        specs.append(NetElementSpec(specs[label].slot_words, True))

    res = operator_norms(np.einsum("kab,kac->kbc", mats.conj(), mats) - np.eye(d))
    if res.max() > UNITARY_TOL:
        raise NotUnitary(f"built element {int(res.argmax())} failed the unitarity check")
    return NetFamily(d=d, matrices=mats, m=m, words=words,
                     element_specs=tuple(specs), mixing_bound=mixing_bound(d, m))


@dataclass(frozen=True, eq=False)
class TwoLevelFactor:
    """SU(2) block on coordinates (position, position+1) inside the identity."""

    position: int
    block: np.ndarray

    def embedded(self, d: int) -> np.ndarray:
        return embed_block(self.block, self.position, d)


@dataclass(frozen=True, eq=False)
class TwoLevelDecomposition:
    factors: tuple[TwoLevelFactor, ...]
    dim: int
    reconstruction_error: float

    def product(self) -> np.ndarray:
        out = np.eye(self.dim, dtype=complex)
        for f in self.factors:
            out = out @ f.embedded(self.dim)
        return out


def two_level_decompose(u: np.ndarray) -> TwoLevelDecomposition:
    """Split a special unitary into d(d-1)/2 adjacent two-level factors.

    Givens elimination clears each column from the bottom up; the factor order
    matches ``slot_pattern(d)`` so the result plugs directly into the word net.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {u.shape}")
    d = u.shape[0]
    if operator_norm(u.conj().T @ u - np.eye(d)) > UNITARY_TOL:
        raise NotUnitary("input is not unitary within tolerance")
    if abs(np.linalg.det(u) - 1.0) > SPECIAL_TOL:
        raise NotSpecial(f"determinant {np.linalg.det(u):.6f} is not 1")

    m = u.copy()
    rotations: list[TwoLevelFactor] = []
    for c in range(d - 1):
        for pos in range(d - 2, c - 1, -1):
            x, y = m[pos, c], m[pos + 1, c]
            nrm = math.hypot(abs(x), abs(y))
            if nrm < 1e-15:
                g = np.eye(2, dtype=complex)
            else:
                g = np.array([[np.conj(x), np.conj(y)], [-y, x]], dtype=complex) / nrm
            m[pos:pos + 2] = g @ m[pos:pos + 2]
            rotations.append(TwoLevelFactor(pos, g))
    # the eliminations reduce m to the identity; factors of u are their adjoints
    factors = tuple(TwoLevelFactor(rot.position, rot.block.conj().T) for rot in rotations)
    deco = TwoLevelDecomposition(factors=factors, dim=d, reconstruction_error=0.0)
    err = operator_norm(deco.product() - u)
    if err > RECONSTRUCTION_TOL:
        raise NotUnitary(f"decomposition failed to reconstruct the input (error {err:.2e})")
    return TwoLevelDecomposition(factors=factors, dim=d, reconstruction_error=float(err))


@dataclass(frozen=True)
class NearestResult:
    label: int
    zeta: float
    mode: str
    block_zetas: tuple[float, ...] | None = None


def _stack_distances(stack: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Operator-norm distance from u to every stack element.

    Special-unitary 2x2 stacks use exact quaternion coordinates, where the
    operator norm of a difference is the Euclidean distance.
    """
    from .qgbuilder import su2_quaternions

    if u.shape == (2, 2):
        qs = su2_quaternions(stack)
        qu = su2_quaternions(u[None])
        if qs is not None and qu is not None:
            return np.linalg.norm(qs - qu[0], axis=1)
    return operator_norms(stack - u[None])


def nearest_in_net(u: np.ndarray, net: NetFamily, mode: str = "exhaustive") -> NearestResult:
    """Closest family element to ``u`` in operator norm.

    ``exhaustive`` scans every label (ties broken by smallest label).
    ``blockwise`` decomposes ``u`` into two-level factors, approximates each
    block independently over the word list, and composes; the result is the
    label of that composition and its true distance, which is at most the sum
    of the block errors.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (net.d, net.d):
        raise DimensionMismatch(f"input of shape {u.shape} does not match net dim {net.d}")
    if mode == "exhaustive":
        dists = _stack_distances(net.matrices, u)
        label = int(np.argmin(dists))
        return NearestResult(label=label, zeta=float(dists[label]), mode=mode)
    if mode != "blockwise":
        raise DimensionMismatch(f"unknown mode {mode!r}")
    if not net.is_word_built:
        raise DimensionMismatch("blockwise search needs a word-built net")

    deco = two_level_decompose(u)
    _, word_mats = enumerate_words(net.m)
    n_words = word_mats.shape[0]
    assignment = []
    block_zetas = []
    for factor in deco.factors:
        dists = _stack_distances(word_mats, factor.block)
        w = int(np.argmin(dists))
        assignment.append(w)
        block_zetas.append(float(dists[w]))
    r = len(deco.factors)
    label = 0
    for w in assignment:
        label = label * n_words + w
    composed = net.matrix(label)
    zeta = operator_norm(composed - u)
    if zeta > sum(block_zetas) + 1e-9:
        raise NotUnitary("blockwise composition violated the error chain")
    return NearestResult(label=label, zeta=float(zeta), mode=mode,
                         block_zetas=tuple(block_zetas))


@lru_cache(maxsize=None)
def _block_error_fit(samples: int = 200, max_m: int = 4, seed: int = 20240917) -> tuple[float, float]:
    """Fit log(1/zeta_worst) ~ alpha + beta*m for exhaustive SU(2) word search."""
    from .qsim import haar_special_unitary

    rng = np.random.default_rng(seed)
    targets = [haar_special_unitary(2, rng) for _ in range(samples)]
    ms, logs = [], []
    for m in range(1, max_m + 1):
        _, word_mats = enumerate_words(m)
        full = np.concatenate([word_mats, np.conj(np.transpose(word_mats, (0, 2, 1)))])
        worst = max(float(_stack_distances(full, t).min()) for t in targets)
        ms.append(m)
        logs.append(math.log(1.0 / worst))
    beta, alpha = np.polyfit(ms, logs, 1)
    return float(alpha), float(beta)


def calibrated_worst_errors(max_m: int = 4, samples: int = 200,
                            seed: int = 20240917) -> dict[int, float]:
    """Worst-case sample error of the d=2 family per degree, from the calibration sweep."""
    from .qsim import haar_special_unitary

    rng = np.random.default_rng(seed)
    targets = [haar_special_unitary(2, rng) for _ in range(samples)]
    out = {}
    for m in range(1, max_m + 1):
        _, word_mats = enumerate_words(m)
        full = np.concatenate([word_mats, np.conj(np.transpose(word_mats, (0, 2, 1)))])
        out[m] = max(float(_stack_distances(full, t).min()) for t in targets)
    return out


def advisory_m(d: int, zeta: float) -> int:
    """Suggested word degree for a target approximation error; advisory only.

    The growth constants are calibrated empirically from a seeded sweep, never
    hardcoded, and callers re-measure the achieved error rather than trusting
    the suggestion.  Per-block budget is zeta divided by the d(d-1)/2 factors.
    """
    if not 0.0 < zeta < 1.0:
        raise DimensionMismatch(f"zeta must lie in (0, 1), got {zeta}")
    alpha, beta = _block_error_fit()
    r = d * (d - 1) / 2
    needed = (math.log(r / zeta) - alpha) / beta
    return max(1, math.ceil(needed))
