"""Finite metric spaces, embeddings, and exact minimum-distortion search."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

# Tolerance for metric axiom validation.
AXIOM_TOL = 1e-12
# Comparison tolerance for search pruning and report equalities.
SEARCH_TOL = 1e-9


class MetricValidationError(ValueError):
    """A distance matrix violated a metric axiom.

    ``axiom`` names the first violated axiom in check order (shape,
    nonzero-diagonal, asymmetry, zero-off-diagonal, triangle);
    ``witness`` is the offending index tuple.
    """

    def __init__(self, axiom: str, witness: tuple[int, ...], message: str) -> None:
        super().__init__(message)
        self.axiom = axiom
        self.witness = witness


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labeled point set with a square matrix of pairwise distances.

    Instances coming out of :func:`validate_metric` or the generators
    satisfy the metric axioms up to ``AXIOM_TOL``.  Direct construction
    bypasses validation and is reserved for callers that guarantee the
    axioms hold by construction.
    """

    labels: tuple[str, ...]
    dist: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def d(self, i: int, j: int) -> float:
        return float(self.dist[i, j])

    def index_of(self, label: str) -> int:
        return self.labels.index(label)

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        """Same point set with every distance multiplied by ``factor`` > 0."""
        if factor <= 0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        return FiniteMetricSpace(self.labels, self.dist * float(factor))

    def restrict(self, indices: list[int] | tuple[int, ...]) -> "FiniteMetricSpace":
        """Subspace on the given point indices (order preserved)."""
        idx = list(indices)
        labels = tuple(self.labels[i] for i in idx)
        return FiniteMetricSpace(labels, self.dist[np.ix_(idx, idx)].copy())

    def to_text(self) -> str:
        """Serialize to the interchange format: N, N label lines, N rows."""
        lines = [str(len(self))]
        lines.extend(self.labels)
        for row in self.dist:
            lines.append(" ".join(format(float(v), ".12g") for v in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "FiniteMetricSpace":
        """Parse the interchange format and validate the result."""
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty metric space text")
        n = int(lines[0])
        if len(lines) < 1 + 2 * n:
            raise ValueError(f"expected {1 + 2 * n} lines for a {n}-point space")
        labels = [lines[1 + i] for i in range(n)]
        rows = [[float(v) for v in lines[1 + n + i].split()] for i in range(n)]
        return validate_metric(rows, labels)

    def digest(self) -> str:
        """SHA-256 of the canonical text serialization."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def validate_metric(matrix, labels=None) -> FiniteMetricSpace:
    """Check the metric axioms and return a validated space.

    Raises :class:`MetricValidationError` naming the first violated axiom
    together with the witnessing indices.  Checks run in a fixed order:
    shape, nonzero diagonal, asymmetry, zero off-diagonal, triangle
    inequality (reported as the triple ``(i, j, k)`` with
    ``d[i,k] > d[i,j] + d[j,k]``).
    """
    dist = np.asarray(matrix, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise MetricValidationError("shape", (), f"matrix is not square: {dist.shape}")
    n = dist.shape[0]
    if n == 0:
        raise MetricValidationError("shape", (), "empty matrix")
    if labels is None:
        labels = [str(i) for i in range(n)]
    labels = tuple(str(x) for x in labels)
    if len(labels) != n:
        raise MetricValidationError(
            "shape", (), f"{len(labels)} labels for a {n}x{n} matrix"
        )
    if not np.all(np.isfinite(dist)):
        i, j = np.argwhere(~np.isfinite(dist))[0]
        raise MetricValidationError(
            "finite", (int(i), int(j)), f"non-finite distance at ({i}, {j})"
        )

    diag = np.abs(np.diagonal(dist))
    if np.any(diag > AXIOM_TOL):
        i = int(np.argmax(diag > AXIOM_TOL))
        raise MetricValidationError(
            "nonzero-diagonal", (i,), f"dist[{i}][{i}] = {dist[i, i]} != 0"
        )

    asym = np.abs(dist - dist.T)
    if np.any(asym > AXIOM_TOL):
        i, j = np.argwhere(asym > AXIOM_TOL)[0]
        raise MetricValidationError(
            "asymmetry",
            (int(i), int(j)),
            f"dist[{i}][{j}] = {dist[i, j]} but dist[{j}][{i}] = {dist[j, i]}",
        )

    off = dist + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
    if np.any(off <= AXIOM_TOL):
        i, j = np.argwhere(off <= AXIOM_TOL)[0]
        raise MetricValidationError(
            "zero-off-diagonal",
            (int(i), int(j)),
            f"dist[{i}][{j}] = {dist[i, j]} <= 0 for distinct points",
        )

    # Triangle inequality, checked one intermediate point at a time so the
    # witness triple is deterministic and memory stays O(n^2).
    for j in range(n):
        slack = dist - (dist[:, j : j + 1] + dist[j : j + 1, :])
        slack[:, j] = -np.inf
        slack[j, :] = -np.inf
        if np.any(slack > AXIOM_TOL):
            i, k = np.argwhere(slack > AXIOM_TOL)[0]
            raise MetricValidationError(
                "triangle",
                (int(i), int(j), int(k)),
                f"dist[{i}][{k}] = {dist[i, k]} > "
                f"dist[{i}][{j}] + dist[{j}][{k}] = {dist[i, j] + dist[j, k]}",
            )

    return FiniteMetricSpace(labels, dist.copy())


@dataclass(frozen=True, eq=False)
class Embedding:
    """A total assignment of domain point indices to host point indices."""

    domain: FiniteMetricSpace
    host: FiniteMetricSpace
    assignment: tuple[int, ...]

    def __post_init__(self):
        if len(self.assignment) != len(self.domain):
            raise ValueError(
                f"assignment length {len(self.assignment)} does not cover the "
                f"{len(self.domain)}-point domain"
            )
        if any(h < 0 or h >= len(self.host) for h in self.assignment):
            raise ValueError("assignment refers to host indices out of range")

    @property
    def is_injective(self) -> bool:
        return len(set(self.assignment)) == len(self.assignment)

    def host_distances(self) -> np.ndarray:
        idx = list(self.assignment)
        return self.host.dist[np.ix_(idx, idx)]


def _pair_ratios(e: Embedding) -> np.ndarray:
    """Host/domain distance ratio for every unordered domain pair."""
    n = len(e.domain)
    iu = np.triu_indices(n, k=1)
    dh = e.host_distances()[iu]
    dx = e.domain.dist[iu]
    return dh / dx


def lipschitz_norm(e: Embedding) -> float:
    """Largest host/domain distance ratio over all pairs of points."""
    if len(e.domain) < 2:
        raise ValueError("Lipschitz norm needs at least two domain points")
    return float(np.max(_pair_ratios(e)))


def distortion(e: Embedding) -> float:
    """Product of the Lipschitz norms of an injective map and its inverse.

    Equals (max pair ratio) / (min pair ratio), so it is invariant under
    rescaling either the domain or the host.
    """
    if len(e.domain) < 2:
        raise ValueError("distortion needs at least two domain points")
    if not e.is_injective:
        raise ValueError("distortion is defined for injective assignments only")
    ratios = _pair_ratios(e)
    return float(np.max(ratios) / np.min(ratios))


@dataclass(frozen=True)
class DistortionReport:
    """Certified lower/upper bounds on least embedding distortion.

    ``certificate`` records how the lower bound was obtained:
    ``exhaustive`` (complete search, lower equals upper up to
    ``SEARCH_TOL``), ``search-bound`` (budget-limited search),
    ``functional`` (reciprocal of an invariant), or
    ``semidefinite-dual`` (bisection on Gram feasibility).
    """

    lower: float
    upper: float
    witness: Embedding | None
    certificate: str

    def __post_init__(self):
        if self.lower > self.upper + SEARCH_TOL:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")


def min_distortion_exact(
    domain: FiniteMetricSpace,
    host: FiniteMetricSpace,
    budget: int | None = None,
) -> DistortionReport:
    """Least distortion over all injections of ``domain`` into ``host``.

    Branch and bound over partial injections.  Domain points are assigned
    in decreasing order of their distance sum (ties broken by label), and
    a partial assignment is pruned when the ratio spread over its already
    assigned pairs cannot beat the incumbent.  If the search finishes
    within ``budget`` node expansions the report is exact; otherwise the
    incumbent gives the upper bound and the smallest bound among abandoned
    subtrees gives the lower bound.
    """
    n, m = len(domain), len(host)
    if n > m:
        raise ValueError(f"no injection exists: |X| = {n} > |H| = {m}")
    if n == 1:
        witness = Embedding(domain, host, (0,))
        return DistortionReport(1.0, 1.0, witness, "exhaustive")

    order = sorted(
        range(n), key=lambda i: (-float(domain.dist[i].sum()), domain.labels[i])
    )
    DX = domain.dist[np.ix_(order, order)]
    DH = host.dist

    best_val = math.inf
    best_assign: list[int] | None = None
    abandoned_min = math.inf
    exhausted = False
    nodes = 0
    used = np.zeros(m, dtype=bool)
    hosts_assigned: list[int] = []

    # (rmax, rmin) track the extreme host/domain ratios over assigned
    # pairs; (0, inf) is the neutral state with fewer than two points.
    def descend(k: int, rmax: float, rmin: float) -> None:
        nonlocal best_val, best_assign, abandoned_min, exhausted, nodes
        if k == n:
            val = rmax / rmin
            if val < best_val - SEARCH_TOL:
                best_val = val
                best_assign = hosts_assigned.copy()
            return
        if budget is not None and nodes >= budget:
            exhausted = True
            abandoned_min = min(abandoned_min, rmax / rmin if k >= 2 else 1.0)
            return
        nodes += 1
        cand = np.flatnonzero(~used)
        if k == 0:
            nmax = np.zeros(len(cand))
            nmin = np.full(len(cand), math.inf)
        else:
            dx = DX[k, :k]
            R = DH[np.ix_(cand, hosts_assigned)] / dx[None, :]
            nmax = np.maximum(R.max(axis=1), rmax)
            nmin = np.minimum(R.min(axis=1), rmin)
        bounds = nmax / nmin  # 0/inf = 0 in the neutral state
        for pos, h in enumerate(cand):  # ascending host index, deterministic
            if bounds[pos] >= best_val - SEARCH_TOL:
                continue  # cannot beat the incumbent: subtree proven covered
            used[int(h)] = True
            hosts_assigned.append(int(h))
            descend(k + 1, float(nmax[pos]), float(nmin[pos]))
            hosts_assigned.pop()
            used[int(h)] = False

    descend(0, 0.0, math.inf)
    complete = not exhausted

    if best_assign is None:
        lower = max(1.0, abandoned_min if abandoned_min < math.inf else 1.0)
        return DistortionReport(lower, math.inf, None, "search-bound")

    assignment = [0] * n
    for pos, dom_idx in enumerate(order):
        assignment[dom_idx] = best_assign[pos]
    witness = Embedding(domain, host, tuple(assignment))
    upper = distortion(witness)
    if complete:
        return DistortionReport(upper, upper, witness, "exhaustive")
    lower = max(1.0, min(upper, abandoned_min))
    return DistortionReport(lower, upper, witness, "search-bound")


def snowflake(space: FiniteMetricSpace, alpha: float) -> FiniteMetricSpace:
    """Raise every distance to the power ``alpha`` in (0, 1].

    The transform preserves the metric axioms for alpha <= 1; the output
    is revalidated as a guard against numerical drift.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return validate_metric(np.power(space.dist, alpha), space.labels)
