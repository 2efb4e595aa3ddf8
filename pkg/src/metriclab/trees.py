"""Contracted binary-tree hosts, fork detection and classification, and
bounded search over vertically faithful tree embeddings.

Tree nodes are addressed by their bit path from the root (the root is the
empty string).  The host family ``HEtaHost`` keeps vertical distances
intact and contracts horizontal detours through the lowest common
ancestor by a factor ``eta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    SEARCH_TOL,
    Embedding,
    FiniteMetricSpace,
    distortion,
    lipschitz_norm,
)
from .parallel import pmap

# Version tag for the fork/path classification predicate tables below;
# recorded with every census so results remain comparable across revisions.
PREDICATE_TABLE_VERSION = "fork-tags-v1"

FORK_TAGS = (
    "contract-A",
    "contract-B",
    "I",
    "II",
    "III",
    "IV",
    "unclassified",
    "degenerate",
)


@dataclass(frozen=True)
class TreePoint:
    """Node of the rooted infinite binary tree, addressed by its bit path."""

    bits: str

    def __post_init__(self):
        if any(c not in "01" for c in self.bits):
            raise ValueError(f"tree point bits must be over {{0,1}}: {self.bits!r}")

    @property
    def depth(self) -> int:
        return len(self.bits)


def _bits(x) -> str:
    if isinstance(x, TreePoint):
        return x.bits
    if isinstance(x, str):
        if any(c not in "01" for c in x):
            raise ValueError(f"tree point bits must be over {{0,1}}: {x!r}")
        return x
    raise TypeError(f"expected TreePoint or bit string, got {type(x)!r}")


def lcp_len(a, b) -> int:
    """Length of the longest common prefix of two bit paths."""
    a, b = _bits(a), _bits(b)
    n = 0
    for ca, cb in zip(a, b):
        if ca != cb:
            break
        n += 1
    return n


def tree_distance(a, b) -> int:
    """Shortest-path distance in the unweighted rooted binary tree."""
    a, b = _bits(a), _bits(b)
    return len(a) + len(b) - 2 * lcp_len(a, b)


def is_ancestor(a, b) -> bool:
    """True when ``a`` is a proper ancestor of ``b`` (strict prefix)."""
    a, b = _bits(a), _bits(b)
    return len(a) < len(b) and b.startswith(a)


def tree_points(depth: int) -> list[str]:
    """All bit paths of length <= depth, sorted by (depth, lexicographic).

    This is breadth-first order: parents always precede children.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    pts = [""]
    for d in range(1, depth + 1):
        pts.extend("".join(p) for p in itertools.product("01", repeat=d))
    return pts


def d_eta(x, y, eta: float) -> float:
    """Distance on the binary tree with horizontal detours contracted.

    With the roles swapped so the deeper point is second, the value is
    (depth difference) + 2 * (shallower depth - lca depth) * eta.
    At eta = 1 this is the plain tree metric.
    """
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    xb, yb = _bits(x), _bits(y)
    hx, hy = len(xb), len(yb)
    if hx > hy:
        hx, hy = hy, hx
        xb, yb = yb, xb
    lca = lcp_len(xb, yb)
    return float((hy - hx) + 2 * (hx - lca) * eta)


def _lca_depth_matrix(points: list[str]) -> np.ndarray:
    """Pairwise depth of the lowest common ancestor, vectorized.

    Prefixes are interned to integer ids; two points agree on exactly
    lca+1 prefix depths (the root always matches), so a broadcast
    comparison of ancestor-id rows counts the lca depth directly.
    """
    ids: dict[str, int] = {}

    def pid(s: str) -> int:
        if s not in ids:
            ids[s] = len(ids)
        return ids[s]

    maxd = max(len(p) for p in points)
    anc = np.full((len(points), maxd + 1), -1, dtype=np.int32)
    for i, p in enumerate(points):
        for d in range(len(p) + 1):
            anc[i, d] = pid(p[:d])
    eq = (anc[:, None, :] == anc[None, :, :]) & (anc[:, None, :] >= 0)
    return eq.sum(axis=2).astype(np.int32) - 1


@lru_cache(maxsize=64)
def tree_metric_space(depth: int) -> FiniteMetricSpace:
    """Complete rooted binary tree of the given depth with the tree metric."""
    pts = tree_points(depth)
    lca = _lca_depth_matrix(pts)
    h = np.array([len(p) for p in pts], dtype=np.int32)
    dist = (h[:, None] + h[None, :] - 2 * lca).astype(np.float64)
    return FiniteMetricSpace(tuple(pts), dist)


@dataclass(frozen=True)
class HEtaHost:
    """Finite truncation of the contracted-tree host: nodes of depth <= depth,
    distances by :func:`d_eta`."""

    depth: int
    eta: float

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    def space(self) -> FiniteMetricSpace:
        return _heta_space(self.depth, self.eta)


@lru_cache(maxsize=64)
def _heta_space(depth: int, eta: float) -> FiniteMetricSpace:
    pts = tree_points(depth)
    lca = _lca_depth_matrix(pts)
    h = np.array([len(p) for p in pts], dtype=np.int32)
    vertical = np.abs(h[:, None] - h[None, :]).astype(np.float64)
    detour = (np.minimum(h[:, None], h[None, :]) - lca).astype(np.float64)
    dist = vertical + 2.0 * eta * detour
    return FiniteMetricSpace(tuple(pts), dist)


def identity_distortion_heta(depth: int, eta: float) -> float:
    """Distortion of the identity from the depth-capped tree into the
    contracted host; equals 1/eta, attained at sibling pairs."""
    if depth < 1:
        raise ValueError("depth must be at least 1 so sibling pairs exist")
    domain = tree_metric_space(depth)
    host = HEtaHost(depth, eta).space()
    ident = Embedding(domain, host, tuple(range(len(domain))))
    return distortion(ident)


# ---------------------------------------------------------------------------
# Forks


@dataclass
class Fork:
    """Quadruple (x, y, z, w) whose triples (x,y,z) and (x,y,w) are each
    (1+delta)-equivalent to the path 0-1-2, with x at 0 and y at 1.

    Indices refer to points of the space the fork was found in.  ``z`` and
    ``w`` are the prongs, ``x`` the handle, ``y`` the forking point.
    """

    x: int
    y: int
    z: int
    w: int
    delta: float
    type_tag: str = "unclassified"


def _fork_band(delta: float) -> tuple[float, float]:
    return 1.0 / (1.0 + delta) - 1e-12, (1.0 + delta) + 1e-12


def is_delta_fork(space: FiniteMetricSpace, x: int, y: int, z: int, w: int,
                  delta: float) -> bool:
    """Check the fork condition for a concrete quadruple."""
    D = space.dist
    s = D[x, y]
    if s <= 0:
        return False
    lo, hi = _fork_band(delta)
    for p in (z, w):
        if not (lo <= D[y, p] / s <= hi and lo <= D[x, p] / (2 * s) <= hi):
            return False
    return True


def find_delta_forks(space: FiniteMetricSpace, delta: float,
                     distinct_prongs: bool = True) -> list[Fork]:
    """Enumerate every delta-fork of the space.

    Prong pairs are unordered; with ``distinct_prongs`` off, quadruples
    with z = w are included and tagged degenerate.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    D = space.dist
    n = len(space)
    lo, hi = _fork_band(delta)
    out: list[Fork] = []
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            s = D[x, y]
            with np.errstate(divide="ignore"):
                r1 = D[y] / s
                r2 = D[x] / (2 * s)
            ok = (r1 >= lo) & (r1 <= hi) & (r2 >= lo) & (r2 <= hi)
            ok[x] = ok[y] = False
            zs = np.flatnonzero(ok)
            for a, b in itertools.combinations(zs.tolist(), 2):
                out.append(Fork(x, y, int(a), int(b), delta))
            if not distinct_prongs:
                for a in zs.tolist():
                    out.append(Fork(x, y, int(a), int(a), delta, "degenerate"))
    return out


def fork_tip_contraction(fork: Fork, space: FiniteMetricSpace) -> float:
    """Prong separation relative to the handle scale, d(z,w)/d(x,y)."""
    if fork.z == fork.w:
        return 0.0
    return float(space.dist[fork.z, fork.w] / space.dist[fork.x, fork.y])


def classify_fork_heta(fork: Fork, host: HEtaHost, delta: float) -> str:
    """Tag a fork inside the contracted-tree host by its combinatorial shape.

    Predicate table ``fork-tags-v1``.  Slack: points may be displaced by
    up to k = ceil(delta * d(x,y)) tree edges when testing the handle
    relations; the prongs-below-the-forking-point relation is exact, which
    keeps the prong separation of contract-tagged forks provably small.
    With s = d_eta(x,y), h(.) = depth, and lcp the longest common prefix:

      degenerate   z == w.
      contract-A   y a proper ancestor of both prongs; x an almost-ancestor
                   of y (h(x) - lcp(x,y) <= k) and strictly shallower.
      contract-B   y a proper ancestor of both prongs; x not an
                   almost-ancestor of y but at most as deep as y.
      II           x an almost-descendant of y and strictly deeper; both
                   prongs shallower than y (h(p) <= h(y) - 1 + k).
      I            x an almost-ancestor of y and strictly shallower; both
                   prongs shallower than y.
      III          x not an almost-ancestor, at most as deep as y; both
                   prongs shallower than y.
      IV           exactly one prong a proper descendant of y.

    First matching tag in the order above wins; anything else is
    ``unclassified`` (callers log these, they are never dropped).
    """
    space = host.space()
    if not is_delta_fork(space, fork.x, fork.y, fork.z, fork.w, delta):
        raise ValueError("quadruple does not satisfy the fork condition")
    xb, yb = space.labels[fork.x], space.labels[fork.y]
    zb, wb = space.labels[fork.z], space.labels[fork.w]
    if fork.z == fork.w:
        return "degenerate"

    s = float(space.dist[fork.x, fork.y])
    k = math.ceil(delta * s)

    def almost_anc(a: str, b: str) -> bool:
        return len(a) - lcp_len(a, b) <= k

    def below(p: str) -> bool:  # y a proper ancestor of p, exact
        return is_ancestor(yb, p)

    def above(p: str) -> bool:  # p shallower than y, with slack
        return len(p) <= len(yb) - 1 + k

    prongs_below = below(zb) and below(wb)
    prongs_above = above(zb) and above(wb)
    x_above = len(xb) < len(yb)

    if prongs_below and almost_anc(xb, yb) and x_above:
        return "contract-A"
    if prongs_below and not almost_anc(xb, yb) and len(xb) <= len(yb):
        return "contract-B"
    if prongs_above and almost_anc(yb, xb) and len(xb) > len(yb):
        return "II"
    if prongs_above and almost_anc(xb, yb) and x_above:
        return "I"
    if prongs_above and not almost_anc(xb, yb) and len(xb) <= len(yb):
        return "III"
    if below(zb) != below(wb):
        return "IV"
    return "unclassified"


def fork_census(host: HEtaHost, delta: float,
                point_indices: list[int] | None = None) -> list[Fork]:
    """All forks of the host (or of a subset of its points), classified.

    Returns forks carrying host point indices and their type tags.
    """
    space = host.space()
    if point_indices is None:
        sub = space
        back = list(range(len(space)))
    else:
        back = list(point_indices)
        sub = space.restrict(back)
    forks = find_delta_forks(sub, delta, distinct_prongs=True)
    out = []
    for f in forks:
        g = Fork(back[f.x], back[f.y], back[f.z], back[f.w], delta)
        g.type_tag = classify_fork_heta(g, host, delta)
        out.append(g)
    return out


def census_counts(forks: list[Fork]) -> dict[str, int]:
    counts = {tag: 0 for tag in FORK_TAGS}
    for f in forks:
        counts[f.type_tag] = counts.get(f.type_tag, 0) + 1
    return counts


def classify_path4_heta(x0, x1, x2, x3, host: HEtaHost | None = None) -> str:
    """Tag the shape of a 4-point path inside the tree by exact ancestry.

    Predicate table ``fork-tags-v1`` (shared version tag with the fork
    table); each tag is tested on both orientations of the tuple:

      A  monotone vertical chain: each point a proper ancestor of the next.
      B  x1 a proper ancestor of x0, x3 a proper ancestor of x2, and
         x1, x2 at equal depth (ends descend from a level middle pair).
      C  one end step horizontal (equal depths, distinct nodes) followed by
         a monotone vertical chain on the other three points.

    Anything else is ``other``.
    """
    pts = [_bits(x0), _bits(x1), _bits(x2), _bits(x3)]
    if len(set(pts)) < 4:
        raise ValueError("path points must be pairwise distinct")
    if host is not None and max(len(p) for p in pts) > host.depth:
        raise ValueError("path points exceed the host depth cap")

    def mono(seq) -> bool:
        return all(is_ancestor(seq[i], seq[i + 1]) for i in range(3))

    for seq in (pts, pts[::-1]):
        if mono(seq):
            return "A"
    for seq in (pts, pts[::-1]):
        a, b, c, d = seq
        if is_ancestor(b, a) and is_ancestor(d, c) and len(b) == len(c):
            return "B"
    for seq in (pts, pts[::-1]):
        a, b, c, d = seq
        tail_mono = (is_ancestor(b, c) and is_ancestor(c, d)) or (
            is_ancestor(d, c) and is_ancestor(c, b)
        )
        if len(a) == len(b) and tail_mono:
            return "C"
    return "other"


# ---------------------------------------------------------------------------
# Vertical faithfulness


def _tree_depth_of_labels(labels: tuple[str, ...]) -> int:
    """Depth n such that labels form the complete tree point set, else raise."""
    try:
        n = max(len(b) for b in labels)
    except ValueError:
        raise ValueError("empty domain") from None
    if sorted(labels, key=lambda b: (len(b), b)) != tree_points(n) or any(
        c not in "01" for b in labels for c in b
    ):
        raise ValueError("domain is not a complete binary tree family instance")
    return n


def vertical_faithfulness(e: Embedding) -> float:
    """Worst ancestor-pair contraction after normalizing the map to be
    nonexpanding.

    Returns A >= 1 such that, once rescaled to Lipschitz norm 1, every
    ancestor pair is contracted by at most A; math.inf when an ancestor
    pair collapses (including constant maps).
    """
    _tree_depth_of_labels(e.domain.labels)
    L = lipschitz_norm(e)
    if L == 0:
        return math.inf
    worst = 0.0
    labels = e.domain.labels
    for i in range(len(labels)):
        for j in range(len(labels)):
            if i != j and is_ancestor(labels[i], labels[j]):
                dh = e.host.dist[e.assignment[i], e.assignment[j]]
                if dh <= 0:
                    return math.inf
                worst = max(worst, e.domain.dist[i, j] / dh)
    return float(L * worst)


@dataclass(frozen=True)
class FaithfulSubtree:
    """A level-uniform dilated copy of a smaller complete tree.

    ``nodes`` maps copy coordinates (bit paths of the small tree) to the
    domain nodes realizing them; consecutive copy levels sit ``spacing``
    levels apart in the domain.
    """

    root: str
    spacing: int
    nodes: dict[str, str]


class CopyEnumerationCap(RuntimeError):
    """Raised when the subtree-copy enumeration exceeds its cap."""


def find_faithful_subtree(
    e: Embedding,
    t: int,
    delta: float,
    copy_cap: int = 100_000,
) -> FaithfulSubtree | None:
    """Search for a dilated depth-t subtree whose image is (1+delta)
    vertically faithful and collision free.

    Copies are level uniform: the copy root sits at an arbitrary node and
    every branching happens after the same number m of domain levels, with
    the intermediate descent bits enumerated exhaustively.  Copies are
    visited in deterministic order (root by breadth-first position, then
    spacing, then descent bits lexicographically); the first faithful copy
    wins.  Raises :class:`CopyEnumerationCap` if more than ``copy_cap``
    copies would have to be inspected.
    """
    n = _tree_depth_of_labels(e.domain.labels)
    if t > n:
        raise ValueError(f"copy depth {t} exceeds domain depth {n}")
    if t == 0:
        return FaithfulSubtree(root="", spacing=1, nodes={"": ""})

    index = {b: i for i, b in enumerate(e.domain.labels)}
    small = tree_points(t)
    internal = [b for b in small if len(b) < t]
    edges = [(b, c) for b in internal for c in "01"]
    inspected = 0

    for root in tree_points(n):
        max_m = (n - len(root)) // t
        for m in range(1, max_m + 1):
            suffixes = ["".join(s) for s in itertools.product("01", repeat=m - 1)]
            for choice in itertools.product(suffixes, repeat=len(edges)):
                inspected += 1
                if inspected > copy_cap:
                    raise CopyEnumerationCap(
                        f"more than {copy_cap} copies to inspect"
                    )
                phi = {"": root}
                for (b, c), suf in zip(edges, choice):
                    phi[b + c] = phi[b] + c + suf
                if _copy_is_faithful(e, index, small, phi, delta):
                    return FaithfulSubtree(root=root, spacing=m, nodes=phi)
    return None


def _copy_is_faithful(e, index, small, phi, delta) -> bool:
    ids = [index[phi[b]] for b in small]
    imgs = [e.assignment[i] for i in ids]
    if len(set(imgs)) < len(imgs):
        return False
    lmax = 0.0
    worst = 0.0
    for a in range(len(small)):
        for b in range(a + 1, len(small)):
            dd = e.domain.dist[ids[a], ids[b]]
            dh = e.host.dist[imgs[a], imgs[b]]
            lmax = max(lmax, dh / dd)
            anc = is_ancestor(small[a], small[b]) or is_ancestor(small[b], small[a])
            if anc:
                if dh <= 0:
                    return False
                worst = max(worst, dd / dh)
    return lmax * worst <= (1.0 + delta) + 1e-12


# ---------------------------------------------------------------------------
# Bounded search for low-distortion vertically faithful embeddings


@dataclass(frozen=True)
class TreeSearchReport:
    """Outcome of the bounded faithful-embedding search."""

    min_distortion: float | None
    witness: tuple[int, ...] | None
    explored_fraction: float
    nodes_expanded: int
    complete: bool
    fork_census: dict[str, int]
    eta: float
    delta: float
    tree_depth: int
    budget: int


def search_b4_nonembed(
    host: HEtaHost,
    delta: float,
    budget: int = 2_000_000,
    tree_depth: int = 4,
) -> TreeSearchReport:
    """Minimum distortion over (1+delta) vertically faithful injective
    embeddings of the depth-``tree_depth`` complete tree into the host.

    Branch and bound in breadth-first domain order with candidate hosts in
    ascending index order.  A partial map is cut when its all-pairs ratio
    spread already exceeds the incumbent distortion, or when the ratio of
    the largest overall stretch to the smallest ancestor-pair stretch
    exceeds 1+delta (vertical faithfulness is scale free, so this test
    needs no normalization).  The identity inclusion seeds the incumbent
    whenever it is faithful.  The node budget is split evenly over the
    root assignment, which makes the reduction order independent; the
    explored fraction counts leaves proven impossible, dominated, or
    enumerated, over all injections.
    """
    if host.depth < tree_depth:
        raise ValueError(
            f"host depth {host.depth} cannot carry a depth-{tree_depth} tree"
        )
    dtree = tree_metric_space(tree_depth)
    hspace = host.space()
    ndom, m = len(dtree), len(hspace)
    DX, DH = dtree.dist, hspace.dist
    faithful_cap = (1.0 + delta) * (1.0 + SEARCH_TOL)

    # Ancestor columns per BFS position (the parent is always among them).
    anc_cols = [
        np.array(
            [j for j in range(k) if is_ancestor(dtree.labels[j], dtree.labels[k])],
            dtype=np.intp,
        )
        for k in range(ndom)
    ]

    # Identity inclusion: both point lists are breadth-first, so the first
    # ndom host points are exactly the domain nodes.
    assert hspace.labels[:ndom] == dtree.labels
    ident = Embedding(dtree, hspace, tuple(range(ndom)))
    seed_val = math.inf
    seed_assign = None
    if vertical_faithfulness(ident) <= faithful_cap:
        seed_val = distortion(ident)
        seed_assign = tuple(range(ndom))

    suffix_leaves = [1] * (ndom + 1)
    for k in range(ndom - 1, -1, -1):
        suffix_leaves[k] = suffix_leaves[k + 1] * (m - k)
    total_leaves = suffix_leaves[0]

    per_root_budget = max(1, budget // m)

    def explore_root(root: int) -> tuple[float, tuple[int, ...] | None, int, int]:
        best = seed_val
        best_assign = seed_assign
        covered = 0
        nodes = 0
        used = np.zeros(m, dtype=bool)
        assigned: list[int] = []

        def descend(k, rmax, rmin_all, rmin_anc):
            nonlocal best, best_assign, covered, nodes
            if k == ndom:
                val = rmax / rmin_all
                if val < best - SEARCH_TOL:
                    best = val
                    best_assign = tuple(assigned)
                covered += 1
                return
            if nodes >= per_root_budget:
                return  # abandoned: not counted as covered
            nodes += 1
            cand = np.flatnonzero(~used)
            dx = DX[k, :k]
            R = DH[np.ix_(cand, assigned)] / dx[None, :]
            nmax = np.maximum(R.max(axis=1), rmax)
            nmin_all = np.minimum(R.min(axis=1), rmin_all)
            cols = anc_cols[k]
            nmin_anc = np.minimum(R[:, cols].min(axis=1), rmin_anc)
            infeasible = nmax > faithful_cap * nmin_anc
            dominated = (nmax / nmin_all) >= best - SEARCH_TOL
            skip = infeasible | dominated
            covered += int(np.count_nonzero(skip)) * suffix_leaves[k + 1]
            for pos in np.flatnonzero(~skip):
                h = int(cand[pos])
                used[h] = True
                assigned.append(h)
                descend(
                    k + 1,
                    float(nmax[pos]),
                    float(nmin_all[pos]),
                    float(nmin_anc[pos]),
                )
                assigned.pop()
                used[h] = False

        used[root] = True
        assigned.append(root)
        descend(1, 0.0, math.inf, math.inf)
        return best, best_assign, covered, nodes

    results = pmap(explore_root, list(range(m)))

    best_val = seed_val
    best_assign = seed_assign
    covered_total = 0
    nodes_total = 0
    for root, (val, assign, covered, nodes) in enumerate(results):
        covered_total += covered
        nodes_total += nodes
        if val < best_val - SEARCH_TOL:
            best_val = val
            best_assign = assign

    fraction = covered_total / total_leaves
    complete = covered_total == total_leaves

    if best_assign is None:
        return TreeSearchReport(
            None, None, fraction, nodes_total, complete, {}, host.eta, delta,
            tree_depth, budget,
        )
    census = census_counts(
        fork_census(host, delta, point_indices=list(best_assign))
    )
    return TreeSearchReport(
        float(best_val),
        tuple(best_assign),
        fraction,
        nodes_total,
        complete,
        census,
        host.eta,
        delta,
        tree_depth,
        budget,
    )
