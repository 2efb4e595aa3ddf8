"""Certified bounds on least distortion into Euclidean space.

A point set embeds in Euclidean space with distortion at most D exactly
when some positive semidefinite Gram matrix Q reproduces every squared
distance within a factor of D**2:

    d(i,j)^2 <= Q_ii + Q_jj - 2 Q_ij <= D^2 d(i,j)^2.

The solver bisects on D**2, deciding each feasibility question by cyclic
projections onto the PSD cone and the per-pair slabs.  Feasible levels
yield coordinates (hence a verified upper bound computed from the actual
embedding); levels where the projections stall with a decisive residual
are recorded as the numerical lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DistortionReport,
    Embedding,
    FiniteMetricSpace,
    distortion,
)

PSD_TOL = 1e-9
FEAS_TOL = 1e-8          # relative residual below which a level is feasible
INFEAS_RESIDUAL = 1e-4   # relative residual above which it is called infeasible
MAX_SWEEPS = 20000       # projection sweeps per feasibility question
RELAXATION = 1.7         # over-relaxation factor for the slab projections
_CHECK_EVERY = 4         # sweeps between residual evaluations
_STALL_CHECKS = 5        # consecutive flat residuals before giving up


@dataclass(frozen=True, eq=False)
class GramCertificate:
    """PSD matrix witnessing a distortion-D Euclidean representation."""

    matrix: np.ndarray
    D: float

    def verify(self, space: FiniteMetricSpace, tol: float = 1e-9) -> bool:
        """Check PSD-ness and the squared-distance sandwich within tol."""
        Q = self.matrix
        if np.linalg.eigvalsh(Q)[0] < -tol:
            return False
        q = np.diag(Q)[:, None] + np.diag(Q)[None, :] - 2 * Q
        d2 = space.dist**2
        scale = np.maximum(d2, 1.0)
        n = len(space)
        mask = ~np.eye(n, dtype=bool)
        lo_ok = (q - d2)[mask] >= -tol * scale[mask]
        hi_ok = (self.D**2 * d2 - q)[mask] >= -tol * scale[mask]
        return bool(lo_ok.all() and hi_ok.all())

    def coordinates(self) -> np.ndarray:
        """Factor the Gram matrix, clamping small negative eigenvalues."""
        w, V = np.linalg.eigh(self.matrix)
        w = np.clip(w, 0.0, None)
        return V * np.sqrt(w)[None, :]


@lru_cache(maxsize=32)
def _pair_rounds(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Round-robin schedule of the pairs {i < j}: each round is disjoint,
    so its slab projections commute and can run vectorized."""
    players = list(range(n)) + ([n] if n % 2 else [])
    m = len(players)
    arr = players[:]
    rounds = []
    for _ in range(m - 1):
        ii, jj = [], []
        for t in range(m // 2):
            a, b = arr[t], arr[m - 1 - t]
            if a < n and b < n:
                ii.append(min(a, b))
                jj.append(max(a, b))
        rounds.append((np.array(ii, dtype=np.intp), np.array(jj, dtype=np.intp)))
        arr = [arr[0], arr[-1]] + arr[1:-1]
    return tuple(rounds)


def _project_slabs(Q: np.ndarray, d2: np.ndarray, hi_factor: float,
                   relax: float = RELAXATION) -> None:
    """One cyclic pass of (over-relaxed) slab projections, round-robin order."""
    for ii, jj in _pair_rounds(Q.shape[0]):
        lo = d2[ii, jj]
        hi = hi_factor * lo
        q = Q[ii, ii] + Q[jj, jj] - 2 * Q[ii, jj]
        a = relax * (np.clip(q, lo, hi) - q) / 4.0
        Q[ii, ii] += a
        Q[jj, jj] += a
        Q[ii, jj] -= a
        Q[jj, ii] -= a


def _project_psd(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Q)
    if w[0] >= 0:
        return Q
    w = np.clip(w, 0.0, None)
    return (V * w[None, :]) @ V.T


def _slab_residual(Q: np.ndarray, d2: np.ndarray, hi_factor: float) -> float:
    n = Q.shape[0]
    q = np.diag(Q)[:, None] + np.diag(Q)[None, :] - 2 * Q
    mask = ~np.eye(n, dtype=bool)
    lo_viol = (d2 - q) / np.maximum(d2, 1e-300)
    hi_viol = (q - hi_factor * d2) / np.maximum(d2, 1e-300)
    return float(np.maximum(lo_viol[mask], hi_viol[mask]).max())


def _feasibility(Q0: np.ndarray, d2: np.ndarray, hi_factor: float,
                 max_sweeps: int) -> tuple[str, np.ndarray]:
    """Decide the level by alternating projections.

    The residual is evaluated every few sweeps; a residual that stops
    moving marks the limit cycle of an infeasible (or numerically
    undecidable) level, so the loop exits early instead of burning the
    sweep budget.  Returns ("feasible" | "infeasible" | "undecided",
    last iterate).
    """
    Q = Q0.copy()
    residual = math.inf
    prev = math.inf
    stall = 0
    for sweep in range(1, max_sweeps + 1):
        _project_slabs(Q, d2, hi_factor)
        Q = _project_psd(Q)
        if sweep % _CHECK_EVERY == 0 or sweep == max_sweeps:
            residual = _slab_residual(Q, d2, hi_factor)
            if residual <= FEAS_TOL:
                return "feasible", Q
            if abs(prev - residual) <= 1e-10 * max(residual, 1e-30):
                stall += 1
                if stall >= _STALL_CHECKS:
                    break
            else:
                stall = 0
            prev = residual
    if residual >= INFEAS_RESIDUAL:
        return "infeasible", Q
    return "undecided", Q


def _mds_start(d2: np.ndarray) -> np.ndarray:
    n = d2.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ d2 @ J
    return _project_psd((B + B.T) / 2.0)


def _embedding_from_gram(space: FiniteMetricSpace, Q: np.ndarray) -> Embedding:
    """Turn Gram coordinates into an Embedding with a concrete finite host.

    Collapsed point pairs (possible for a raw MDS start on strongly
    non-Euclidean data) are separated by inflating the Gram diagonal, so
    the resulting assignment is always injective.
    """
    Q = Q.copy()
    bump = 1e-9 * float(np.mean(space.dist**2))
    for _ in range(40):
        coords = GramCertificate(Q, 1.0).coordinates()
        diff = coords[:, None, :] - coords[None, :, :]
        hd = np.sqrt((diff**2).sum(axis=2))
        np.fill_diagonal(hd, 0.0)
        hd = (hd + hd.T) / 2.0
        off = hd[~np.eye(len(space), dtype=bool)]
        if off.min() > 0:
            break
        Q += bump * np.eye(len(space))
        bump *= 10.0
    host = FiniteMetricSpace(tuple(f"e{i}" for i in range(len(space))), hd)
    return Embedding(space, host, tuple(range(len(space))))


def _rescaled_gram(space: FiniteMetricSpace, Q: np.ndarray) -> np.ndarray:
    """Scale a Gram matrix so its smallest pair ratio q/d^2 equals one."""
    q = np.diag(Q)[:, None] + np.diag(Q)[None, :] - 2 * Q
    mask = ~np.eye(len(space), dtype=bool)
    ratios = q[mask] / (space.dist**2)[mask]
    rmin = float(ratios.min())
    if rmin <= 0:
        return Q
    return Q / rmin


def min_distortion_l2_with_certificate(
    space: FiniteMetricSpace,
    tol: float = 1e-3,
    max_sweeps: int = MAX_SWEEPS,
) -> tuple[DistortionReport, GramCertificate]:
    """Bracket the least Euclidean distortion of a finite metric space.

    The upper bound always comes from an actual embedding (coordinates of
    a feasible Gram matrix), so it is valid regardless of solver state;
    the lower bound is the highest level where the projections stalled
    decisively.  Bisection runs on D**2 until the bracket is within
    tol * upper or the feasibility question becomes numerically undecided.
    """
    n = len(space)
    if n > 64:
        raise ValueError(f"solver is capped at 64 points, got {n}")
    if n < 2:
        report = DistortionReport(
            1.0, 1.0, Embedding(space, space, tuple(range(n))), "semidefinite-dual"
        )
        return report, GramCertificate(np.zeros((n, n)), 1.0)
    d2 = space.dist**2

    start = _mds_start(d2)
    witness = _embedding_from_gram(space, start)
    upper = distortion(witness)
    best_gram = _rescaled_gram(space, start)
    lo = 1.0
    hi = upper
    if hi <= 1.0 + 1e-12:
        report = DistortionReport(1.0, float(hi), witness, "semidefinite-dual")
        return report, GramCertificate(best_gram, float(hi) * (1.0 + 1e-9))

    warm = start
    while hi - lo > tol * hi:
        mid = math.sqrt((lo * lo + hi * hi) / 2.0)
        status, Q = _feasibility(warm, d2, mid * mid, max_sweeps)
        if status == "feasible":
            cand = _embedding_from_gram(space, Q)
            cand_dist = distortion(cand)
            if cand_dist < upper:
                upper, witness = cand_dist, cand
                best_gram = _rescaled_gram(space, Q)
            hi = min(mid, cand_dist)
            warm = Q
        elif status == "infeasible":
            lo = mid
        else:
            break  # numerically undecided: report the current bracket

    lower = min(lo, upper)
    report = DistortionReport(float(lower), float(upper), witness, "semidefinite-dual")
    return report, GramCertificate(best_gram, float(upper))


def min_distortion_l2(
    space: FiniteMetricSpace, tol: float = 1e-3, max_sweeps: int = MAX_SWEEPS
) -> DistortionReport:
    """See :func:`min_distortion_l2_with_certificate`."""
    report, _ = min_distortion_l2_with_certificate(space, tol, max_sweeps)
    return report


def poincare_lower_bound(
    space: FiniteMetricSpace,
    numerator_pairs,
    denominator_pairs,
    modulus: float,
) -> float:
    """Pair-functional distortion lower bound.

    Both pair sets are iterables of (i, j) or (i, j, weight).  The value
    sqrt(sum_num w d^2 / (modulus * sum_den w d^2)) bounds the distortion
    into any host whose geometry satisfies the matching inequality with
    the given modulus; that premise is the caller's responsibility.
    """

    def weighted(pairs) -> float:
        total = 0.0
        seen = False
        for item in pairs:
            if len(item) == 2:
                i, j = item
                w = 1.0
            else:
                i, j, w = item
            if w <= 0:
                raise ValueError("pair weights must be positive")
            seen = True
            total += w * float(space.dist[i, j]) ** 2
        if not seen:
            raise ValueError("pair set must be nonempty")
        return total

    num = weighted(numerator_pairs)
    den = weighted(denominator_pairs)
    if den == 0:
        raise ValueError("denominator pairs have zero total squared length")
    return math.sqrt(num / (modulus * den))


def hamming_poincare_pairs(cube: FiniteMetricSpace) -> tuple[list, list]:
    """Diagonal and edge pair sets of a binary-cube space, by its labels."""
    labels = cube.labels
    n = len(labels[0])
    index = {lab: i for i, lab in enumerate(labels)}

    def flip_all(lab: str) -> str:
        return "".join("1" if c == "0" else "0" for c in lab)

    diagonals = []
    edges = []
    for lab in labels:
        i = index[lab]
        j = index[flip_all(lab)]
        if i < j:
            diagonals.append((i, j))
        for bit in range(n):
            other = lab[:bit] + ("1" if lab[bit] == "0" else "0") + lab[bit + 1 :]
            j = index[other]
            if i < j:
                edges.append((i, j))
    return diagonals, edges
