"""Map-universal inequality constants of a host space and their witnesses.

Three families are computed, each the best constant in an inequality
quantified over all maps from a structured index set into the host:

* ``psi``   walks 0..n: end-to-end stretch against the largest step.
* ``type``  maps of the discrete cube: antipodal displacement against
            coordinate displacements (quadratic means).
* ``gamma`` maps of the discrete torus Z_m^n: axis shifts against
            diagonal +-1 shifts (quadratic means).

All three are scale free and lie in [0, 1] on the regimes the package
targets; their reciprocals bound the least embedding distortion of the
matching family from below.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import FiniteMetricSpace

# Exhaustive map enumeration is vectorized in blocks of this many maps.
_CHUNK = 1 << 18
# Exact mode is used whenever the total map count stays within budget.
DEFAULT_MAP_BUDGET = 2_000_000
# Heuristic mode: fixed-seed random restarts plus steepest ascent.
HEURISTIC_RESTARTS = 64
_HEURISTIC_SEED = 0x5EED


class BudgetExceededError(RuntimeError):
    """An exact evaluation was requested beyond its enumeration budget."""


@dataclass(frozen=True)
class InvariantValue:
    """A computed functional value with its witness map.

    ``witness`` is a tuple of host point indices, indexed by walk position
    (psi), cube point code (type), or mixed-radix torus code (gamma).
    ``exact`` is False when the value is only a certified lower bound
    (heuristic search); the trivial upper bound is then 1.
    """

    kind: str
    n: int
    m: int | None
    value: float
    witness: tuple[int, ...] | None
    exact: bool


# ---------------------------------------------------------------------------
# psi: walks on the path


def evaluate_walk(host: FiniteMetricSpace, walk: tuple[int, ...], n: int) -> float:
    """End-to-end distance of an (n+1)-point walk divided by n times its
    largest step; 0 for walks that never move."""
    if len(walk) != n + 1:
        raise ValueError(f"walk must have {n + 1} points, got {len(walk)}")
    D = host.dist
    steps = [D[walk[i], walk[i + 1]] for i in range(n)]
    largest = max(steps)
    if largest == 0:
        return 0.0
    return float(D[walk[0], walk[-1]] / (n * largest))


def psi_constant(host: FiniteMetricSpace, n: int) -> InvariantValue:
    """Largest value of :func:`evaluate_walk` over all maps of {0..n}.

    Exact by a threshold sweep: an optimal walk has its largest step equal
    to some pairwise host distance t, and padding with zero-length repeats
    makes "at most n hops" equivalent to "exactly n steps".  So for every
    candidate t it suffices to know which pairs are joined by at most n
    hops through edges of length <= t, and the best ratio d(u,v)/(n t)
    over such pairs; the sweep over thresholds covers every walk.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(host) < 2:
        raise ValueError("host needs at least 2 points")
    D = host.dist
    N = len(host)
    iu = np.triu_indices(N, k=1)
    thresholds = np.unique(D[iu])

    best = 0.0
    best_pair: tuple[int, int] | None = None
    best_t: float | None = None
    for t in thresholds:
        adj = D <= t + 1e-12
        reach = adj.copy()
        for _ in range(n - 1):
            reach = (reach.astype(np.uint8) @ adj.astype(np.uint8)) > 0
        vals = np.where(reach, D, 0.0) / (n * float(t))
        flat = int(np.argmax(vals))
        v = float(vals.flat[flat])
        if v > best + 1e-15:
            best = v
            best_pair = (flat // N, flat % N)
            best_t = float(t)

    if best_pair is None:  # every threshold graph is edgeless, impossible
        raise AssertionError("threshold sweep found no walk")

    walk = _threshold_walk(D, best_pair[0], best_pair[1], best_t, n)
    value = evaluate_walk(host, walk, n)
    return InvariantValue("psi", n, None, value, walk, True)


def _threshold_walk(D, u, v, t, n) -> tuple[int, ...]:
    """Shortest walk u -> v through edges of length <= t, padded to n+1
    points by repeating the endpoint."""
    N = D.shape[0]
    prev = {u: None}
    frontier = deque([u])
    while frontier and v not in prev:
        a = frontier.popleft()
        for b in range(N):
            if b not in prev and b != a and D[a, b] <= t + 1e-12:
                prev[b] = a
                frontier.append(b)
    path = [v]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    path.reverse()
    if len(path) - 1 > n:
        raise AssertionError("threshold walk longer than the hop bound")
    path.extend([v] * (n + 1 - len(path)))
    return tuple(path)


# ---------------------------------------------------------------------------
# Shared enumeration helpers


def _digit_block(start: int, count: int, base: int, width: int) -> np.ndarray:
    """Mixed-radix digit table for map codes start .. start+count-1."""
    v = np.arange(start, start + count, dtype=np.int64)
    out = np.empty((count, width), dtype=np.int32)
    for p in range(width):
        out[:, p] = (v // base**p) % base
    return out


def _pair_sum(d2: np.ndarray, F: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Sum of squared host distances over the given position pairs, per map row."""
    total = np.zeros(F.shape[0])
    for a, b in pairs:
        total += d2[F[:, a], F[:, b]]
    return total


def _sweep_best(ratios: np.ndarray, offset: int, best: tuple[float, int]) -> tuple[float, int]:
    """Keep the first global maximizer across chunks (strict improvement)."""
    pos = int(np.argmax(ratios))
    val = float(ratios[pos])
    if val > best[0] + 1e-15:
        return val, offset + pos
    return best


# ---------------------------------------------------------------------------
# type: maps of the discrete cube


def _cube_pairs(n: int):
    P = 1 << n
    full = P - 1
    diag = [(x, x ^ full) for x in range(P) if x < (x ^ full)]
    edges = [
        [(x, x ^ (1 << i)) for x in range(P) if x < (x ^ (1 << i))] for i in range(n)
    ]
    return diag, edges


def evaluate_type_map(host: FiniteMetricSpace, n: int, mapping) -> float:
    """Cube-inequality ratio of a single map; 0 when all edges collapse."""
    P = 1 << n
    if len(mapping) != P:
        raise ValueError(f"mapping must cover all {P} cube points")
    F = np.asarray(mapping, dtype=np.int32)[None, :]
    d2 = host.dist**2
    diag, edges = _cube_pairs(n)
    num = _pair_sum(d2, F, diag)[0]
    den = n * sum(_pair_sum(d2, F, e)[0] for e in edges)
    if den == 0:
        return 0.0
    return math.sqrt(num / den)


def type_constant(
    host: FiniteMetricSpace,
    n: int,
    budget: int = DEFAULT_MAP_BUDGET,
    seed: int = _HEURISTIC_SEED,
) -> InvariantValue:
    """Largest cube-inequality ratio over all maps {0,1}^n -> host.

    Exhaustive and exact when |host|^(2^n) fits the budget; otherwise a
    fixed-seed multistart steepest ascent reports a certified lower bound
    (exact=False), to be paired with the universal upper bound 1.
    Maps with vanishing denominator are skipped: a collapse of every
    coordinate displacement collapses the antipodal one too.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    B = len(host)
    P = 1 << n
    if B == 1:
        return InvariantValue("type", n, None, 0.0, (0,) * P, True)
    d2 = host.dist**2
    diag, edges = _cube_pairs(n)

    def ratios_for(F: np.ndarray) -> np.ndarray:
        num = _pair_sum(d2, F, diag)
        den = n * sum(_pair_sum(d2, F, e) for e in edges)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, num / np.where(den > 0, den, 1.0), -1.0)
        return r

    total = B**P
    if total <= budget:
        best = (-1.0, -1)
        for start in range(0, total, _CHUNK):
            count = min(_CHUNK, total - start)
            F = _digit_block(start, count, B, P)
            best = _sweep_best(ratios_for(F), start, best)
        witness = tuple(int(d) for d in _digit_block(best[1], 1, B, P)[0])
        return InvariantValue("type", n, None, math.sqrt(max(best[0], 0.0)), witness, True)

    rng = np.random.default_rng(seed)
    best_val = -1.0
    best_map: np.ndarray | None = None
    for _ in range(HEURISTIC_RESTARTS):
        f = rng.integers(0, B, size=P, dtype=np.int32)
        f, val = _steepest_ascent(f, B, ratios_for)
        if val > best_val + 1e-15:
            best_val, best_map = val, f
    value = math.sqrt(max(best_val, 0.0))
    return InvariantValue(
        "type", n, None, value, tuple(int(x) for x in best_map), False
    )


def _steepest_ascent(f: np.ndarray, base: int, ratios_for, max_rounds: int = 500):
    """Repeatedly apply the best single-position relabeling until stable."""
    P = len(f)
    cur = float(ratios_for(f[None, :])[0])
    for _ in range(max_rounds):
        variants = np.repeat(f[None, :], P * base, axis=0)
        rows = np.arange(P * base)
        variants[rows, rows // base] = rows % base
        vals = ratios_for(variants)
        pos = int(np.argmax(vals))
        if float(vals[pos]) <= cur + 1e-15:
            break
        cur = float(vals[pos])
        f = variants[pos]
    return f, cur


# ---------------------------------------------------------------------------
# gamma: maps of the discrete torus


def _axis_shift_indices(n: int, m: int, amount: int) -> list[np.ndarray]:
    """Index permutations g -> g + amount*e_i on the mixed-radix torus."""
    G = m**n
    v = np.arange(G, dtype=np.int64)
    out = []
    for i in range(n):
        digit = (v // m**i) % m
        out.append(v + (((digit + amount) % m) - digit) * m**i)
    return out


def _eps_shift_indices(n: int, m: int, values: tuple[int, ...]) -> list[np.ndarray]:
    """Index permutations g -> g + eps for every eps with entries in values."""
    G = m**n
    v = np.arange(G, dtype=np.int64)
    digits = [(v // m**i) % m for i in range(n)]
    out = []
    for eps in itertools.product(values, repeat=n):
        target = np.zeros(G, dtype=np.int64)
        for i in range(n):
            target += (((digits[i] + eps[i]) % m)) * m**i
        out.append(target)
    return out


def evaluate_gamma_map(
    host: FiniteMetricSpace, n: int, m: int, mapping, shift_power: int = 1
) -> float:
    """Torus-inequality ratio of a single map (see :func:`gamma_constant`)."""
    F = np.asarray(mapping, dtype=np.int32)[None, :]
    if F.shape[1] != m**n:
        raise ValueError(f"mapping must cover all {m ** n} torus points")
    val = _gamma_ratios(host, n, m, shift_power)(F)[0]
    return math.sqrt(max(float(val), 0.0))


def _gamma_ratios(host: FiniteMetricSpace, n: int, m: int, shift_power: int):
    G = m**n
    d2 = host.dist**2
    amount = (n**shift_power) % m
    axis = _axis_shift_indices(n, m, amount)
    eps = _eps_shift_indices(n, m, (1, -1))
    factor = float(n ** (2 * shift_power) * n)

    def ratios_for(F: np.ndarray) -> np.ndarray:
        lhs = np.zeros(F.shape[0])
        for perm in axis:
            lhs += d2[F, F[:, perm]].mean(axis=1)
        rhs = np.zeros(F.shape[0])
        for perm in eps:
            rhs += d2[F, F[:, perm]].mean(axis=1)
        rhs *= factor / len(eps)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), -1.0)

    return ratios_for


def gamma_constant(
    host: FiniteMetricSpace,
    n: int,
    m: int,
    budget: int = DEFAULT_MAP_BUDGET,
    shift_power: int = 1,
    seed: int = _HEURISTIC_SEED,
) -> InvariantValue:
    """Largest torus-inequality ratio over all maps Z_m^n -> host, at one m.

    The numerator shifts each axis by n**shift_power (default n); the
    denominator averages squared displacements over all +-1 diagonal
    shifts and carries the rate factor n**(2*shift_power) * n.  The full
    functional takes a supremum over every m; callers sweep an m list and
    keep a running maximum, so per-m values are reported with exact
    reflecting only the per-m enumeration.

    ``m`` must be even: odd moduli are rejected so the half-period shift
    used by the cotype-flavored evaluator stays within the same machinery,
    and the [0,1] range is only guaranteed for even n.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if m < 2 or m % 2 != 0:
        raise ValueError(f"m must be a positive even integer, got {m}")
    if shift_power < 1:
        raise ValueError("shift_power must be at least 1")
    B = len(host)
    G = m**n
    if B == 1:
        return InvariantValue("gamma", n, m, 0.0, (0,) * G, True)
    ratios_for = _gamma_ratios(host, n, m, shift_power)

    total = B**G
    if total <= budget:
        best = (-1.0, -1)
        for start in range(0, total, _CHUNK):
            count = min(_CHUNK, total - start)
            F = _digit_block(start, count, B, G)
            best = _sweep_best(ratios_for(F), start, best)
        witness = tuple(int(d) for d in _digit_block(best[1], 1, B, G)[0])
        return InvariantValue(
            "gamma", n, m, math.sqrt(max(best[0], 0.0)), witness, True
        )

    rng = np.random.default_rng(seed)
    best_val = -1.0
    best_map: np.ndarray | None = None
    for _ in range(HEURISTIC_RESTARTS):
        f = rng.integers(0, B, size=G, dtype=np.int32)
        f, val = _steepest_ascent(f, B, ratios_for)
        if val > best_val + 1e-15:
            best_val, best_map = val, f
    return InvariantValue(
        "gamma",
        n,
        m,
        math.sqrt(max(best_val, 0.0)),
        tuple(int(x) for x in best_map),
        False,
    )


def metric_en_cotype_ratio(
    mapping, host: FiniteMetricSpace, n: int, m: int, q: float
) -> float:
    """Half-period cotype ratio of one torus map.

    Numerator: summed mean squared displacement under the m/2 axis shifts.
    Denominator: m^2 n^(1-2/q) times the mean squared displacement over
    all shifts eps in {0,+1,-1}^n (note the extra 0, unlike the gamma
    functional).  Degenerate denominator with vanishing numerator gives 0;
    with a nonvanishing numerator the ratio is unbounded (math.inf).
    """
    if m < 2 or m % 2 != 0:
        raise ValueError(f"m must be a positive even integer, got {m}")
    F = np.asarray(mapping, dtype=np.int32)[None, :]
    if F.shape[1] != m**n:
        raise ValueError(f"mapping must cover all {m ** n} torus points")
    d2 = host.dist**2
    num = 0.0
    for perm in _axis_shift_indices(n, m, m // 2):
        num += float(d2[F, F[:, perm]].mean())
    rhs = 0.0
    eps = _eps_shift_indices(n, m, (0, 1, -1))
    for perm in eps:
        rhs += float(d2[F, F[:, perm]].mean())
    rhs /= len(eps)
    den = m**2 * n ** (1.0 - 2.0 / q) * rhs
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# Sub-multiplicativity check and dichotomy fit


@dataclass(frozen=True)
class SubmultReport:
    kind: str
    m: int
    n: int
    value_m: float
    value_n: float
    value_mn: float
    holds: bool


def check_submultiplicativity(
    host: FiniteMetricSpace,
    kind: str,
    m: int,
    n: int,
    budget: int = DEFAULT_MAP_BUDGET,
) -> SubmultReport:
    """Evaluate the functional at m, n, and m*n and test
    value(mn) <= value(m) * value(n) + 1e-9.  Exact evaluations only."""
    if kind == "psi":
        vm = psi_constant(host, m).value
        vn = psi_constant(host, n).value
        vmn = psi_constant(host, m * n).value
    elif kind == "type":
        for k in (m, n, m * n):
            if len(host) ** (2**k) > budget:
                raise BudgetExceededError(
                    f"type constant at n={k} needs {len(host) ** (2 ** k)} maps"
                )
        vm = type_constant(host, m, budget).value
        vn = type_constant(host, n, budget).value
        vmn = type_constant(host, m * n, budget).value
    else:
        raise ValueError(f"kind must be psi or type, got {kind!r}")
    holds = vmn <= vm * vn + 1e-9
    return SubmultReport(kind, m, n, vm, vn, vmn, holds)


@dataclass(frozen=True)
class DichotomyFit:
    """Exponent beta matching a one-scale decay eta at scale n0.

    ``beta`` is None on the no-decay branch (eta >= 1): no polynomial
    lower bound follows in that case, and callers must not read a rate
    out of it.
    """

    n0: int
    eta: float
    beta: float | None

    @property
    def no_decay(self) -> bool:
        return self.beta is None

    def predicted_path_bound(self, k: int) -> float:
        """Implied distortion lower bound for the path of length n0**k."""
        if self.beta is None:
            raise ValueError("no-decay fit implies no polynomial bound")
        return float((self.n0**k) ** self.beta)


def fit_beta(n0: int, eta: float) -> DichotomyFit:
    """Solve n0**(-beta) = eta for beta; distinguished no-decay result
    when eta >= 1."""
    if n0 < 2:
        raise ValueError("n0 must be at least 2")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if eta >= 1:
        return DichotomyFit(n0, eta, None)
    return DichotomyFit(n0, eta, -math.log(eta) / math.log(n0))


# ---------------------------------------------------------------------------
# Equal-norms vector ratios


@dataclass(frozen=True, eq=False)
class VectorFamily:
    """Finite vector family in l_p coordinates with its rate exponent.

    The same exponent is used for the coordinate norm and for the rate
    factor of the ratio evaluators (p for the type-flavored ratio, q for
    the cotype-flavored one; q = math.inf is allowed).
    """

    vectors: np.ndarray
    exponent: float

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("vectors must form a nonempty 2-d array")
        object.__setattr__(self, "vectors", v)
        if not (self.exponent >= 1):
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def norms(self) -> np.ndarray:
        if math.isinf(self.exponent):
            return np.abs(self.vectors).max(axis=1)
        return np.power(
            np.power(np.abs(self.vectors), self.exponent).sum(axis=1),
            1.0 / self.exponent,
        )


def _sign_mean_square(fam: VectorFamily) -> float:
    """Exact mean of ||sum_j eps_j x_j||^2 over all sign patterns."""
    n = fam.n
    if n > 20:
        raise ValueError("exact sign enumeration is capped at n = 20")
    X = fam.vectors
    total = 0.0
    count = 1 << n
    for start in range(0, count, _CHUNK):
        size = min(_CHUNK, count - start)
        codes = np.arange(start, start + size, dtype=np.int64)
        signs = np.empty((size, n))
        for j in range(n):
            signs[:, j] = 1.0 - 2.0 * ((codes >> j) & 1)
        S = signs @ X
        if math.isinf(fam.exponent):
            norms = np.abs(S).max(axis=1)
        else:
            norms = np.power(
                np.power(np.abs(S), fam.exponent).sum(axis=1), 1.0 / fam.exponent
            )
        total += float((norms**2).sum())
    return total / count


def en_type_ratio(fam: VectorFamily) -> float:
    """Smallest constant making the equal-norms type inequality hold for
    this family: sqrt(Avg ||sum eps x||^2 / (n^(2/p-1) sum ||x||^2))."""
    sq = float((fam.norms() ** 2).sum())
    if sq == 0:
        raise ValueError("ratio evaluation needs at least one nonzero vector")
    mean = _sign_mean_square(fam)
    rate = fam.n ** (2.0 / fam.exponent - 1.0)  # 2/inf == 0.0 handles p = inf
    return math.sqrt(mean / (rate * sq))


def en_cotype_ratio(fam: VectorFamily) -> float:
    """Smallest constant making the equal-norms cotype inequality hold:
    sqrt(sum ||x||^2 / (n^(1-2/q) Avg ||sum eps x||^2)); math.inf when the
    sign average vanishes for a nonzero family."""
    sq = float((fam.norms() ** 2).sum())
    if sq == 0:
        raise ValueError("ratio evaluation needs at least one nonzero vector")
    mean = _sign_mean_square(fam)
    if mean == 0:
        return math.inf
    rate = fam.n ** (1.0 - 2.0 / fam.exponent)
    return math.sqrt(sq / (rate * mean))


# ---------------------------------------------------------------------------
# Witness revalidation


def revalidate_invariant(
    iv: InvariantValue, host: FiniteMetricSpace, shift_power: int = 1
) -> float:
    """Recompute the value of an invariant from its witness map."""
    if iv.witness is None:
        raise ValueError("invariant carries no witness")
    if iv.kind == "psi":
        return evaluate_walk(host, iv.witness, iv.n)
    if iv.kind == "type":
        return evaluate_type_map(host, iv.n, iv.witness)
    if iv.kind == "gamma":
        return evaluate_gamma_map(host, iv.n, iv.m, iv.witness, shift_power)
    raise ValueError(f"unknown invariant kind {iv.kind!r}")
