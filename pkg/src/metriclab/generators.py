"""Constructors for the structured metric families and tightness hosts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import FiniteMetricSpace, snowflake, validate_metric
from .trees import _lca_depth_matrix, tree_metric_space


def path(n: int) -> FiniteMetricSpace:
    """The integer segment {0, ..., n} with |i - j|."""
    if n < 1:
        raise ValueError("path needs n >= 1")
    idx = np.arange(n + 1)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(np.float64)
    return FiniteMetricSpace(tuple(str(i) for i in range(n + 1)), dist)


def hamming_cube(n: int) -> FiniteMetricSpace:
    """Binary strings of length n under bit-difference distance."""
    if not 1 <= n <= 20:
        raise ValueError(f"cube dimension must lie in [1, 20], got {n}")
    size = 1 << n
    codes = np.arange(size, dtype=np.uint32)
    xor = codes[:, None] ^ codes[None, :]
    dist = np.zeros((size, size), dtype=np.float64)
    for bit in range(n):
        dist += (xor >> bit) & 1
    labels = tuple(format(x, f"0{n}b") for x in range(size))
    return FiniteMetricSpace(labels, dist)


def linf_grid(n: int, m: int) -> FiniteMetricSpace:
    """The grid {1, ..., m}^n under max coordinate difference."""
    if n < 1 or m < 1:
        raise ValueError("grid needs positive dimension and side")
    if m**n > 10**6:
        raise ValueError(f"grid size {m}**{n} exceeds the 10^6 point cap")
    coords = np.array(list(itertools.product(range(1, m + 1), repeat=n)))
    dist = np.abs(coords[:, None, :] - coords[None, :, :]).max(axis=2)
    labels = tuple(",".join(map(str, c)) for c in coords)
    return FiniteMetricSpace(labels, dist.astype(np.float64))


def binary_tree(n: int) -> FiniteMetricSpace:
    """Complete rooted binary tree of depth n with the tree metric.

    Points are all bit paths of length <= n in breadth-first order; the
    root carries the empty label.
    """
    if not 1 <= n <= 16:
        raise ValueError(f"tree depth must lie in [1, 16], got {n}")
    return tree_metric_space(n)


def ultrametric_host(depth: int) -> FiniteMetricSpace:
    """Bit strings of exact length ``depth`` with distance 2^(-lcp)."""
    if not 1 <= depth <= 16:
        raise ValueError(f"depth must lie in [1, 16], got {depth}")
    pts = ["".join(p) for p in itertools.product("01", repeat=depth)]
    lca = _lca_depth_matrix(pts)
    dist = np.power(2.0, -lca.astype(np.float64))
    np.fill_diagonal(dist, 0.0)
    return FiniteMetricSpace(tuple(pts), dist)


def snowflake_line(n: int, alpha: float) -> FiniteMetricSpace:
    """The segment {0, ..., n} with distance |i - j|^alpha."""
    return snowflake(path(n), alpha)


_KINDS = {
    "path",
    "cube",
    "linf-grid",
    "binary-tree",
    "ultrametric-host",
    "snowflake-line",
}


@dataclass(frozen=True)
class FamilySpec:
    """Serializable description of one generator invocation."""

    kind: str
    n: int | None = None
    m: int | None = None
    depth: int | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")

    def build(self) -> FiniteMetricSpace:
        if self.kind == "path":
            return path(self._req("n"))
        if self.kind == "cube":
            return hamming_cube(self._req("n"))
        if self.kind == "linf-grid":
            return linf_grid(self._req("n"), self._req("m"))
        if self.kind == "binary-tree":
            return binary_tree(self._req("n"))
        if self.kind == "ultrametric-host":
            return ultrametric_host(self._req("depth"))
        return snowflake_line(self._req("n"), self._req("alpha"))

    def _req(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ValueError(f"family {self.kind!r} requires parameter {name!r}")
        return value

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("n", "m", "depth", "alpha"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @staticmethod
    def from_dict(d: dict) -> "FamilySpec":
        allowed = {"kind", "n", "m", "depth", "alpha"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown family parameters: {sorted(unknown)}")
        return FamilySpec(**d)
