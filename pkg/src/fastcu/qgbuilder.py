"""Right-quasigroup assembly over a labeled unitary family.

For every fixed label k a bipartite graph connects l to j when
``|| V_l V_k - V_j ||_inf < eta``; a maximum matching, completed to a
permutation, becomes column k of the product table.  The assembled table is a
right quasigroup by construction and its (eta, delta) certificate is recounted
exhaustively afterwards.

Matchings are found with an augmenting-path (Hopcroft-Karp) search.  Families
of 2x2 special unitaries additionally get a fast route: such matrices embed
isometrically into unit quaternions, where the operator-norm distance is the
Euclidean distance, so candidate edges come from a KD-tree and duplicate
labels collapse into classes matched by an integer max-flow.  Both routes
return maximum matchings; only the tie-breaking differs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree

from .algebra import (
    ApproxRepCertificate,
    RightQuasigroup,
    certify_approx_rep,
    quasigroup_from_transposed,
)
from .errors import AxiomViolation, DimensionMismatch, TooLarge
from .net import NetFamily
from .qsim import operator_norms

EDGE_GUARD = 1e-12
WITNESS_MAX_N = 20
FLOW_MIN_SIZE = 160


def su2_quaternions(stack: np.ndarray, tol: float = 1e-9) -> np.ndarray | None:
    """Unit-quaternion coordinates of a stack of SU(2) matrices, or None.

    Marginally non-special or non-2x2 stacks return None and callers fall back
    to dense norms.  For valid stacks, |q(A) - q(B)| equals ||A - B||_inf.
    """
    stack = np.asarray(stack, dtype=complex)
    if stack.ndim != 3 or stack.shape[1:] != (2, 2):
        return None
    det = stack[:, 0, 0] * stack[:, 1, 1] - stack[:, 0, 1] * stack[:, 1, 0]
    if np.max(np.abs(det - 1.0)) > tol:
        return None
    herm = np.abs(stack[:, 1, 0] + stack[:, 0, 1].conj())
    if herm.max() > tol or np.max(np.abs(stack[:, 1, 1] - stack[:, 0, 0].conj())) > tol:
        return None
    return np.stack([stack[:, 0, 0].real, stack[:, 0, 1].imag,
                     stack[:, 0, 1].real, stack[:, 0, 0].imag], axis=1)


def residual_norm_matrix(matrices: np.ndarray, k: int) -> np.ndarray:
    """Dense (l, j) matrix of distances between V_l V_k and V_j."""
    mats = np.asarray(matrices, dtype=complex)
    prods = mats @ mats[k]
    quats = su2_quaternions(mats)
    if quats is not None:
        qp = su2_quaternions(prods)
        if qp is not None:
            gram = qp @ quats.T
            return np.sqrt(np.clip(2.0 - 2.0 * gram, 0.0, None))
    n, d = mats.shape[0], mats.shape[1]
    return operator_norms(prods[:, None, :, :] - mats[None, :, :, :]).reshape(n, n)


@dataclass(frozen=True, eq=False)
class CompatGraph:
    """Adjacency of the per-k compatibility graph, plus threshold-band bookkeeping."""

    k: int
    n: int
    adjacency: np.ndarray        # bool (n, n), adjacency[l, j]
    eta: float
    boundary_count: int          # norms within EDGE_GUARD of eta, dropped as non-edges


def build_graph(net: NetFamily, k: int, eta: float) -> CompatGraph:
    """Evaluate all n^2 residual norms for one k and threshold strictly below eta."""
    if not 0 <= k < net.size:
        raise DimensionMismatch(f"label {k} out of range for a family of size {net.size}")
    norms = residual_norm_matrix(net.matrices, k)
    adjacency = norms < (eta - EDGE_GUARD)
    boundary = int(np.count_nonzero(np.abs(norms - eta) <= EDGE_GUARD))
    return CompatGraph(k=k, n=net.size, adjacency=adjacency, eta=float(eta),
                       boundary_count=boundary)


def hopcroft_karp(adjacency_lists: list[np.ndarray], n_right: int) -> tuple[int, np.ndarray, np.ndarray]:
    """Maximum bipartite matching by layered augmenting paths.

    ``adjacency_lists[l]`` holds the right neighbors of left vertex l.  Returns
    the matching size and the pairing arrays (-1 for unmatched).
    """
    n_left = len(adjacency_lists)
    pair_left = np.full(n_left, -1, dtype=np.int64)
    pair_right = np.full(n_right, -1, dtype=np.int64)
    inf = n_left + n_right + 1
    dist = np.empty(n_left, dtype=np.int64)
    matched = 0
    while True:
        queue = deque()
        for l in range(n_left):
            if pair_left[l] < 0:
                dist[l] = 0
                queue.append(l)
            else:
                dist[l] = inf
        reachable_free = inf
        while queue:
            l = queue.popleft()
            if dist[l] >= reachable_free:
                continue
            for r in adjacency_lists[l]:
                nxt = pair_right[r]
                if nxt < 0:
                    reachable_free = min(reachable_free, dist[l] + 1)
                elif dist[nxt] == inf:
                    dist[nxt] = dist[l] + 1
                    queue.append(nxt)
        if reachable_free == inf:
            return matched, pair_left, pair_right
        # iterative DFS along the level structure
        for start in range(n_left):
            if pair_left[start] >= 0:
                continue
            stack = [(start, iter(adjacency_lists[start]))]
            path = []
            while stack:
                l, it = stack[-1]
                advanced = False
                for r in it:
                    nxt = pair_right[r]
                    if nxt < 0 and dist[l] + 1 == reachable_free:
                        path.append((l, r))
                        for pl, pr in path:
                            pair_left[pl] = pr
                            pair_right[pr] = pl
                        matched += 1
                        stack = []
                        path = []
                        advanced = True
                        break
                    if nxt >= 0 and dist[nxt] == dist[l] + 1:
                        path.append((l, r))
                        stack.append((nxt, iter(adjacency_lists[nxt])))
                        advanced = True
                        break
                if not advanced:
                    dist[l] = inf
                    stack.pop()
                    if path:
                        path.pop()


@dataclass(frozen=True, eq=False)
class MatchingResult:
    """Maximum matching of a compatibility graph plus its arbitrary completion."""

    pairs: dict[int, int]
    matched_count: int
    completed: np.ndarray        # permutation, completed[l] = j
    inside_threshold_count: int


def _complete_permutation(pair_left: np.ndarray, pair_right: np.ndarray) -> np.ndarray:
    """Pair leftover vertices in ascending index order on both sides."""
    completed = pair_left.copy()
    free_left = np.flatnonzero(pair_left < 0)
    free_right = np.flatnonzero(pair_right < 0)
    completed[free_left] = free_right
    return completed


def max_matching(graph: CompatGraph) -> MatchingResult:
    adjacency_lists = [np.flatnonzero(row) for row in graph.adjacency]
    matched, pair_left, pair_right = hopcroft_karp(adjacency_lists, graph.n)
    completed = _complete_permutation(pair_left, pair_right)
    pairs = {int(l): int(pair_left[l]) for l in np.flatnonzero(pair_left >= 0)}
    return MatchingResult(pairs=pairs, matched_count=matched,
                          completed=completed, inside_threshold_count=matched)


def hall_deficiency_witness(graph: CompatGraph, t: int) -> np.ndarray | None:
    """Exhaustive search for a left set S with |N(S)| < |S| - n + t.

    Such a witness exists exactly when the maximum matching is smaller than t.
    """
    n = graph.n
    if n > WITNESS_MAX_N:
        raise TooLarge(f"witness search scans 2^n subsets; n={n} exceeds {WITNESS_MAX_N}")
    row_masks = [int(sum(1 << j for j in np.flatnonzero(row))) for row in graph.adjacency]
    for subset in range(1, 1 << n):
        size = subset.bit_count()
        nbhd = 0
        s = subset
        while s:
            low = s & -s
            nbhd |= row_masks[low.bit_length() - 1]
            s ^= low
        if nbhd.bit_count() < size - n + t:
            return np.flatnonzero([(subset >> i) & 1 for i in range(n)])
    return None


# --------------------------------------------------------------------------- #
#                     class-level geometry for large families                 #
# --------------------------------------------------------------------------- #


def quaternion_product(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Quaternion coordinates of the matrix product, batched over leading axes."""
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    out = np.empty(np.broadcast_shapes(q1.shape, q2.shape), dtype=np.float64)
    out[..., 0] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[..., 1] = w1 * x2 + x1 * w2 + z1 * y2 - y1 * z2
    out[..., 2] = w1 * y2 + y1 * w2 + x1 * z2 - z1 * x2
    out[..., 3] = w1 * z2 + z1 * w2 - x1 * y2 + y1 * x2
    return out


def quaternion_conjugate(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


class FamilyGeometry:
    """Precomputed label classes and quaternion KD-tree for one family.

    Labels with equal matrices share a class; the per-k graph, matching and
    table column depend on k only through its class.  Two involutions of the
    family cut the matchings further: the graph of the inverse class is the
    transpose of the graph of the class, and when the family is closed under
    entrywise conjugation (an isometry), the graph of the conjugate class is
    the class-relabeled graph.  One maximum matching therefore serves an orbit
    of up to four classes.
    """

    def __init__(self, net: NetFamily):
        self.net = net
        self.n = net.size
        self.quats = su2_quaternions(net.matrices)
        if self.quats is not None:
            self.classes = _quaternion_classes(self.quats)
            self.n_classes = int(self.classes.max()) + 1
            order = np.argsort(self.classes, kind="stable")
            counts = np.bincount(self.classes, minlength=self.n_classes)
            self.class_offsets = np.concatenate([[0], np.cumsum(counts)])
            self.class_labels = order            # labels grouped by class, ascending in each
            self.class_counts = counts
            self.class_reps = order[self.class_offsets[:-1]]
            self.tree = cKDTree(self.quats[self.class_reps])
            self.inverse_class = self._class_map(quaternion_conjugate)
            self.conjugate_class = self._class_map(_quaternion_entrywise_conj)
        else:
            self.classes = None
            self.inverse_class = None
            self.conjugate_class = None

    def _class_map(self, transform) -> np.ndarray | None:
        """Class permutation induced by a quaternion map, or None if not closed."""
        key_to_class = {_quaternion_key(self.quats[rep]): c
                        for c, rep in enumerate(self.class_reps)}
        out = np.empty(self.n_classes, dtype=np.int64)
        for c, rep in enumerate(self.class_reps):
            key = _quaternion_key(transform(self.quats[rep]))
            if key not in key_to_class:
                return None
            out[c] = key_to_class[key]
        counts = self.class_counts
        if not np.array_equal(counts[out], counts):
            return None
        return out

    @property
    def supports_flow(self) -> bool:
        return self.quats is not None

    def labels_of(self, cls: int) -> np.ndarray:
        return self.class_labels[self.class_offsets[cls]:self.class_offsets[cls + 1]]

    def orbit_of(self, cls: int) -> dict[int, str]:
        """Classes whose graphs derive from this one, with the transport rule."""
        orbit = {cls: "id"}
        inv, conj = self.inverse_class, self.conjugate_class
        if inv is not None:
            orbit.setdefault(int(inv[cls]), "transpose")
        if conj is not None:
            orbit.setdefault(int(conj[cls]), "relabel")
            if inv is not None:
                orbit.setdefault(int(conj[inv[cls]]), "transpose_relabel")
        return orbit

    def transport_edges(self, lefts: np.ndarray, rights: np.ndarray, rule: str):
        if rule == "id":
            return lefts, rights
        if rule == "transpose":
            return rights, lefts
        sigma = self.conjugate_class
        if rule == "relabel":
            return sigma[lefts], sigma[rights]
        if rule == "transpose_relabel":
            return sigma[rights], sigma[lefts]
        raise DimensionMismatch(f"unknown transport rule {rule!r}")

    def candidate_edges(self, k: int, radius: float):
        """Class-level edges (cl, cr, dist) with dist at most the query radius."""
        prodq = quaternion_product(self.quats[self.class_reps], self.quats[k])
        coo = self.tree.sparse_distance_matrix(cKDTree(prodq), radius,
                                               output_type="coo_matrix")
        # rows index the static class points (right side), columns the products
        return coo.col.astype(np.int64), coo.row.astype(np.int64), coo.data


def _quaternion_entrywise_conj(q: np.ndarray) -> np.ndarray:
    """Quaternion coordinates of the entrywise complex conjugate matrix."""
    out = q.copy()
    out[..., 1] *= -1.0
    out[..., 3] *= -1.0
    return out


def _quaternion_key(q: np.ndarray, decimals: int = 9) -> bytes:
    # adding 0.0 canonicalizes -0.0 so negated coordinates hash consistently
    return (np.round(q, decimals) + 0.0).tobytes()


def _quaternion_classes(quats: np.ndarray, decimals: int = 9) -> np.ndarray:
    seen: dict[bytes, int] = {}
    out = np.empty(quats.shape[0], dtype=np.int64)
    rounded = np.round(quats, decimals) + 0.0
    for i in range(quats.shape[0]):
        out[i] = seen.setdefault(rounded[i].tobytes(), len(seen))
    return out


def _solve_class_flow(geom: FamilyGeometry, lefts: np.ndarray,
                      rights: np.ndarray) -> tuple[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Maximum label-level matching size via integer max-flow on the class graph.

    Returns the matching size and the positive class-to-class flow triples;
    those expand deterministically into a label-level matching because class
    capacities equal label multiplicities.
    """
    ncl = geom.n_classes
    counts = geom.class_counts.astype(np.int32)
    n_nodes = 2 * ncl + 2
    src, sink = 0, n_nodes - 1
    cap_rows = np.concatenate([np.zeros(ncl, np.int64), 1 + ncl + np.arange(ncl), 1 + lefts])
    cap_cols = np.concatenate([1 + np.arange(ncl), np.full(ncl, sink, np.int64), 1 + ncl + rights])
    cap_vals = np.concatenate([counts, counts,
                               np.minimum(counts[lefts], counts[rights])]).astype(np.int32)
    graph = csr_matrix((cap_vals, (cap_rows, cap_cols)), shape=(n_nodes, n_nodes))
    res = maximum_flow(graph, src, sink)
    flow = res.flow.tocoo()
    keep = (flow.data > 0) & (flow.row >= 1) & (flow.row <= ncl) & (flow.col > ncl) & (flow.col < sink)
    fl, fr, fv = flow.row[keep] - 1, flow.col[keep] - 1 - ncl, flow.data[keep].astype(np.int64)
    return int(res.flow_value), (fl.astype(np.int64), fr.astype(np.int64), fv)


def _grouped_offsets(groups: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Running start offset of each entry within its group, in entry order."""
    m = len(groups)
    order = np.argsort(groups, kind="stable")
    sorted_sizes = sizes[order]
    running = np.cumsum(sorted_sizes) - sorted_sizes
    grp = groups[order]
    is_first = np.empty(m, dtype=bool)
    is_first[0] = True
    is_first[1:] = grp[1:] != grp[:-1]
    first_pos = np.maximum.accumulate(np.where(is_first, np.arange(m), 0))
    out = np.empty(m, dtype=np.int64)
    out[order] = running - running[first_pos]
    return out


def _expand_column(geom: FamilyGeometry, fl: np.ndarray, fr: np.ndarray,
                   fv: np.ndarray) -> np.ndarray:
    """Turn class-level flows into a completed label permutation.

    Flow f on a class pair pairs the next f unused labels of each class in
    ascending order; leftover labels complete ascending on both sides.
    """
    n = geom.n
    order = np.lexsort((fr, fl))
    fl, fr, fv = fl[order], fr[order], fv[order]
    column = np.full(n, -1, dtype=np.int64)
    if len(fl):
        left_off = _grouped_offsets(fl, fv)
        right_off = _grouped_offsets(fr, fv)
        total = int(fv.sum())
        entry_of = np.repeat(np.arange(len(fv)), fv)
        within = np.arange(total) - np.repeat(np.cumsum(fv) - fv, fv)
        l_pos = geom.class_offsets[fl[entry_of]] + left_off[entry_of] + within
        r_pos = geom.class_offsets[fr[entry_of]] + right_off[entry_of] + within
        column[geom.class_labels[l_pos]] = geom.class_labels[r_pos]
    right_used = np.zeros(n, dtype=bool)
    right_used[column[column >= 0]] = True
    free_left = np.flatnonzero(column < 0)
    free_right = np.flatnonzero(~right_used)
    column[free_left] = free_right
    return column


@dataclass(frozen=True, eq=False)
class BuiltQuasigroup:
    """Assembled right quasigroup over a family, with its recounted certificate."""

    quasigroup: RightQuasigroup
    net: NetFamily
    eta: float
    certificate: ApproxRepCertificate
    matched_counts: np.ndarray
    boundary_total: int

    @property
    def delta_from_matching(self) -> float:
        return float((self.quasigroup.order - self.matched_counts.min()) / self.quasigroup.order)


def _process_seed_class(geom: FamilyGeometry, eta: float, cls: int, want_columns: bool):
    rep = int(geom.class_reps[cls])
    lefts, rights, dists = geom.candidate_edges(rep, radius=eta + 10 * EDGE_GUARD)
    keep = dists < (eta - EDGE_GUARD)
    boundary = int(np.count_nonzero(np.abs(dists - eta) <= EDGE_GUARD))
    size, flows = _solve_class_flow(geom, lefts[keep], rights[keep])
    per_member = {}
    for member, rule in geom.orbit_of(cls).items():
        column = None
        if want_columns:
            tl, tr = geom.transport_edges(flows[0], flows[1], rule)
            column = _expand_column(geom, tl, tr, flows[2])
        per_member[member] = column
    return cls, size, boundary, per_member


def _matching_pass(geom: FamilyGeometry, net: NetFamily, eta: float,
                   want_columns: bool, reject_above: float | None,
                   workers: int = 1):
    """Shared core: matching size (and optionally column) per class.

    One flow solve covers a whole symmetry orbit of classes.  Returns
    (sizes, columns, boundary_total, worst_frac, complete); an early bail on
    ``reject_above`` leaves the pass incomplete.  ``workers`` > 1 spreads the
    independent per-class pipelines over a thread pool; results are merged in
    class order so the outcome does not depend on scheduling.
    """
    n = net.size
    fast = geom.supports_flow and n > FLOW_MIN_SIZE
    sizes: dict[int, int] = {}
    columns: dict[int, np.ndarray] = {}
    boundary_total = 0
    worst = 0.0

    if fast:
        seeds = []
        seen: set[int] = set()
        for cls in range(geom.n_classes):
            if cls in seen:
                continue
            seen.update(geom.orbit_of(cls))
            seeds.append(cls)

        def handle(result) -> bool:
            nonlocal boundary_total, worst
            _, size, boundary, per_member = result
            for member, column in per_member.items():
                if member in sizes:
                    continue
                sizes[member] = size
                boundary_total += boundary * int(geom.class_counts[member])
                if column is not None:
                    columns[member] = column
            worst = max(worst, (n - size) / n)
            return reject_above is not None and worst > reject_above

        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(
                        lambda c: _process_seed_class(geom, eta, c, want_columns),
                        seeds, chunksize=8):
                    if handle(result):
                        return sizes, columns, boundary_total, worst, False
        else:
            for cls in seeds:
                if handle(_process_seed_class(geom, eta, cls, want_columns)):
                    return sizes, columns, boundary_total, worst, False
    else:
        for k in range(n):
            graph = build_graph(net, k, eta)
            result = max_matching(graph)
            sizes[k] = result.matched_count
            boundary_total += graph.boundary_count
            if want_columns:
                columns[k] = result.completed
            worst = max(worst, (n - result.matched_count) / n)
            if reject_above is not None and worst > reject_above:
                return sizes, columns, boundary_total, worst, False
    return sizes, columns, boundary_total, worst, True


def _finish_build(net: NetFamily, geom: FamilyGeometry, eta: float, sizes, columns,
                  boundary_total: int) -> BuiltQuasigroup:
    n = net.size
    fast = geom.supports_flow and n > FLOW_MIN_SIZE
    dtype = np.int16 if n < 2 ** 15 else np.int32
    if fast:
        col_matrix = np.empty((geom.n_classes, n), dtype=dtype)
        for cls, col in columns.items():
            col_matrix[cls] = col
        # row k of the transposed table is column k of the table
        table_t = col_matrix[geom.classes]
        size_by_class = np.empty(geom.n_classes, dtype=np.int64)
        for cls, size in sizes.items():
            size_by_class[cls] = size
        matched_counts = size_by_class[geom.classes]
    else:
        table_t = np.empty((n, n), dtype=dtype)
        matched_counts = np.empty(n, dtype=np.int64)
        for k in range(n):
            table_t[k] = columns[k]
            matched_counts[k] = sizes[k]
    try:
        quasigroup = quasigroup_from_transposed(table_t)
    except Exception as exc:  # pragma: no cover - permutation columns by construction
        raise AxiomViolation(f"assembled table failed validation: {exc}") from exc
    certificate = certify_approx_rep(net.matrices, quasigroup, eta)
    if certificate.delta_cert > (n - matched_counts.min()) / n + 1e-12:
        raise AxiomViolation("recounted delta exceeds the matching-derived bound")
    matched_counts.setflags(write=False)
    return BuiltQuasigroup(quasigroup=quasigroup, net=net, eta=float(eta),
                           certificate=certificate, matched_counts=matched_counts,
                           boundary_total=boundary_total)


def assemble_quasigroup(net: NetFamily, eta: float, workers: int = 1) -> BuiltQuasigroup:
    """Build the full product table, one maximum matching per label, and certify it.

    The certificate's delta comes from an exhaustive recount on the assembled
    table; it can only be at most the matching-derived deficiency because
    completion pairs may happen to fall below eta.
    """
    if eta <= 0:
        raise DimensionMismatch(f"eta must be positive, got {eta}")
    geom = FamilyGeometry(net)
    sizes, columns, boundary, _, _ = _matching_pass(geom, net, eta, want_columns=True,
                                                    reject_above=None, workers=workers)
    return _finish_build(net, geom, eta, sizes, columns, boundary)


def assemble_or_reject(net: NetFamily, eta: float, delta_bound: float,
                       workers: int = 1) -> tuple[BuiltQuasigroup | None, float]:
    """Assemble unless some matching already exceeds the deficiency bound.

    Returns (built, worst_matching_deficiency); ``built`` is None exactly when
    the bound was exceeded, in which case the deficiency is a certified lower
    bound above it.
    """
    if eta <= 0:
        raise DimensionMismatch(f"eta must be positive, got {eta}")
    geom = FamilyGeometry(net)
    sizes, columns, boundary, worst, complete = _matching_pass(
        geom, net, eta, want_columns=True, reject_above=delta_bound, workers=workers)
    if not complete:
        return None, worst
    return _finish_build(net, geom, eta, sizes, columns, boundary), worst


@dataclass(frozen=True)
class EtaScanPoint:
    eta: float
    delta_matching: float
    complete: bool


def scan_quasigroup_deltas(net: NetFamily, etas, reject_above: float | None = None,
                           workers: int = 1) -> list[EtaScanPoint]:
    """Matching-derived deficiency per eta, without building tables.

    With ``reject_above`` set, a scan point stops early once some label's
    deficiency already exceeds the threshold; the point is then marked
    incomplete and its delta is a lower bound (still above the threshold).
    """
    geom = FamilyGeometry(net)
    points = []
    for eta in etas:
        _, _, _, worst, complete = _matching_pass(geom, net, float(eta),
                                                  want_columns=False,
                                                  reject_above=reject_above,
                                                  workers=workers)
        points.append(EtaScanPoint(eta=float(eta), delta_matching=worst, complete=complete))
    return points
