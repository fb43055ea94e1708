"""Exact chain algebra over tuples of rational vectors.

A p-simplex is an ordered tuple of p vertices (vectors in R^N with Fraction
coordinates); a chain is a formal integer combination of simplices of one
common grade p.  The module implements the boundary operator, barycentric
subdivision sd, and the prism operator T satisfying

    dT(c) + T(dc) = sd(c) - c,

which is the chain-level homotopy later used to interpolate between barrier
directions.  The boundary uses the alternating sum starting at (-1)^1 for the
first face; the global sign differs from some textbook conventions and is kept
as is throughout the package.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

Vertex = tuple  # tuple[Fraction, ...]
Simplex = tuple  # tuple[Vertex, ...]


def simplex(*points) -> Simplex:
    """Coerce an argument list of coordinate tuples into a simplex."""
    return tuple(tuple(Fraction(x) for x in p) for p in points)


class Chain:
    """Canonicalized formal sum of simplices with integer coefficients.

    Zero coefficients are dropped.  All simplices must share one grade p and
    one ambient dimension; violating either raises ValueError.  Instances are
    immutable in practice: operations return new chains.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        acc: dict = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for s, k in items:
                if k:
                    acc[s] = acc.get(s, 0) + k
        self.terms = {s: k for s, k in acc.items() if k}
        grades = {len(s) for s in self.terms}
        if len(grades) > 1:
            raise ValueError(f"mixed simplex grades in one chain: {sorted(grades)}")
        dims = {len(v) for s in self.terms for v in s}
        if len(dims) > 1:
            raise ValueError(f"mixed vertex dimensions in one chain: {sorted(dims)}")

    @classmethod
    def of(cls, s: Simplex, coeff: int = 1) -> "Chain":
        return cls({s: coeff})

    @property
    def grade(self):
        """Common simplex length p, or None for the zero chain."""
        for s in self.terms:
            return len(s)
        return None

    def is_zero(self) -> bool:
        return not self.terms

    def simplices(self):
        return self.terms.keys()

    def coefficients(self):
        return self.terms.values()

    def __add__(self, other: "Chain") -> "Chain":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        merged = dict(self.terms)
        for s, k in other.terms.items():
            merged[s] = merged.get(s, 0) + k
        return Chain(merged)

    def __sub__(self, other: "Chain") -> "Chain":
        return self + (-1) * other

    def __neg__(self) -> "Chain":
        return (-1) * self

    def __rmul__(self, k: int) -> "Chain":
        if k == 0:
            return Chain()
        return Chain({s: k * c for s, c in self.terms.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, Chain) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "Chain(0)"
        bits = []
        for s in sorted(self.terms):
            k = self.terms[s]
            vs = ",".join("(" + ",".join(str(x) for x in v) + ")" for v in s)
            bits.append(f"{k:+d}[{vs}]")
        return "Chain(" + " ".join(bits) + ")"


def _face(s: Simplex, j: int) -> Simplex:
    """Delete vertex j (1-indexed)."""
    return s[: j - 1] + s[j:]


def boundary(c: Chain, j: int | None = None) -> Chain:
    """Boundary of a graded chain; with j, the single face map applied termwise.

    The full boundary of a grade-1 chain is zero by convention, so that
    boundary(boundary(c)) vanishes identically on every grade.
    """
    p = c.grade
    if p is None:
        return Chain()
    if j is not None:
        if not 1 <= j <= p:
            raise ValueError(f"face index {j} out of range 1..{p}")
        if p == 1:
            return Chain()
        return Chain({_face(s, j): k for s, k in c.terms.items()})
    if p == 1:
        return Chain()
    acc: dict = {}
    for s, k in c.terms.items():
        for jj in range(1, p + 1):
            t = _face(s, jj)
            sk = -k if jj % 2 else k
            acc[t] = acc.get(t, 0) + sk
    return Chain(acc)


def barycenter(s: Simplex) -> Vertex:
    """Exact arithmetic mean of the vertices."""
    if not s:
        raise ValueError("barycenter of an empty vertex list")
    p = len(s)
    return tuple(sum(v[i] for v in s) / Fraction(p) for i in range(len(s[0])))


def _descend(s: Simplex, js) -> list:
    """Barycenters along an iterated face descent: [b(s), b(face), b(face of face), ...]."""
    cur = s
    verts = [barycenter(s)]
    for j in js:
        cur = _face(cur, j)
        verts.append(barycenter(cur))
    return verts, cur


def _sd_simplex(s: Simplex) -> dict:
    p = len(s)
    gsign = -1 if (p + 1) % 2 else 1
    ranges = [range(1, p - i + 2) for i in range(1, p)]
    acc: dict = {}
    for js in itertools.product(*ranges):
        verts, _ = _descend(s, js)
        sgn = gsign * (-1 if sum(js) % 2 else 1)
        t = tuple(verts)
        acc[t] = acc.get(t, 0) + sgn
    return acc


def subdivide(c: Chain, m: int = 1) -> Chain:
    """m-fold barycentric subdivision, extended linearly; m = 0 is the identity."""
    if m < 0:
        raise ValueError("subdivision depth must be nonnegative")
    for _ in range(m):
        acc: dict = {}
        for s, k in c.terms.items():
            for t, sgn in _sd_simplex(s).items():
                acc[t] = acc.get(t, 0) + k * sgn
        c = Chain(acc)
    return c


def _prism_simplex(s: Simplex) -> dict:
    p = len(s)
    if p == 1:
        return {}
    acc: dict = {(barycenter(s),) + s: 1}
    for ell in range(1, p - 1):
        ranges = [range(1, p - i + 2) for i in range(1, ell + 1)]
        for js in itertools.product(*ranges):
            verts, cur = _descend(s, js)
            sgn = -1 if sum(js) % 2 else 1
            t = tuple(verts) + cur
            acc[t] = acc.get(t, 0) + sgn
    return acc


def prism(c: Chain) -> Chain:
    """The homotopy operator T with dT + Td = sd - id; zero on grade 1."""
    acc: dict = {}
    for s, k in c.terms.items():
        for t, sgn in _prism_simplex(s).items():
            acc[t] = acc.get(t, 0) + k * sgn
    return Chain(acc)


def cone(v: Vertex, c: Chain) -> Chain:
    """Prepend vertex v to every simplex of c, keeping coefficients."""
    v = tuple(Fraction(x) for x in v)
    for s in c.terms:
        if len(s[0]) != len(v):
            raise ValueError("cone vertex dimension does not match chain")
        break
    return Chain({(v,) + s: k for s, k in c.terms.items()})


def diameter(s: Simplex) -> Fraction:
    """Max squared Euclidean distance over vertex pairs (exact; avoids roots)."""
    best = Fraction(0)
    for a, b in itertools.combinations(s, 2):
        d = sum((x - y) ** 2 for x, y in zip(a, b))
        if d > best:
            best = d
    return best


def independent(s: Simplex) -> bool:
    """Exact linear independence of the vertices as vectors (Gauss over Q)."""
    rows = [list(v) for v in s]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        prow = rows[rank]
        for r in range(rank + 1, len(rows)):
            if rows[r][col]:
                f = rows[r][col] / prow[col]
                rows[r] = [a - f * b for a, b in zip(rows[r], prow)]
        rank += 1
        if rank == len(rows):
            break
    return rank == len(s)


# ---------------------------------------------------------------------------
# Shrinking-depth search: smallest m with every simplex of sd^m(s) of squared
# diameter strictly below eps_sq.  Levels are processed as integer vertex
# arrays (stored in float64, exact while below 2**53) against the implicit
# denominator L * D**depth, pruning simplices already small enough; float
# comparisons within a relative band of the threshold are replayed with exact
# integer arithmetic so borderline cases cannot flip.
# ---------------------------------------------------------------------------


def _child_matrices(p: int):
    """Integer matrices M_c with sd-child vertices = (M_c @ parent) / D, D = lcm(1..p)."""
    D = math.lcm(*range(1, p + 1))
    std = tuple(tuple(Fraction(1 if i == j else 0) for j in range(p)) for i in range(p))
    mats = []
    for child in _sd_simplex(std):
        m = [[int(x * D) for x in v] for v in child]
        mats.append(m)
    return np.array(mats, dtype=np.float64), D


def _diam2_float(verts: np.ndarray) -> np.ndarray:
    """Squared diameters for an array of simplices, shape (n, p, N)."""
    p = verts.shape[1]
    out = np.zeros(verts.shape[0])
    for i, j in itertools.combinations(range(p), 2):
        d = verts[:, i, :] - verts[:, j, :]
        np.maximum(out, np.einsum("nk,nk->n", d, d), out=out)
    return out


def _diam2_exact(row) -> int:
    verts = [[int(x) for x in v] for v in row]
    best = 0
    for a, b in itertools.combinations(verts, 2):
        d = sum((x - y) ** 2 for x, y in zip(a, b))
        if d > best:
            best = d
    return best


def shrink_depth(s: Simplex, eps_sq: Fraction, max_depth: int = 64,
                 chunk: int = 200_000) -> int:
    """Smallest m such that every simplex of sd^m(s) has squared diameter < eps_sq."""
    eps_sq = Fraction(eps_sq)
    if eps_sq <= 0:
        raise ValueError("eps_sq must be positive")
    p = len(s)
    if p == 1 or diameter(s) < eps_sq:
        return 0
    L = math.lcm(*(x.denominator for v in s for x in v)) if any(
        x.denominator != 1 for v in s for x in v) else 1
    base = np.array([[float(x * L) for x in v] for v in s])[None, :, :]
    mats, D = _child_matrices(p)
    frontier = base
    for depth in range(1, max_depth + 1):
        scale = L * D ** depth
        if np.abs(frontier).max() * D >= 2.0 ** 52:
            raise RuntimeError("shrink_depth exceeded the exact float64 range")
        thr = eps_sq * scale * scale  # Fraction; condition is diam2 < thr
        thr_f = float(thr)
        band = 1e-9 * max(thr_f, 1.0)
        survivors = []
        for lo in range(0, frontier.shape[0], chunk):
            part = frontier[lo:lo + chunk]
            kids = np.einsum("cij,njk->ncik", mats, part).reshape(-1, p, part.shape[2])
            d2 = _diam2_float(kids)
            keep = d2 >= thr_f
            near = np.abs(d2 - thr_f) <= band
            for idx in np.nonzero(near)[0]:
                exact = _diam2_exact(kids[idx])
                keep[idx] = (Fraction(exact) >= thr)
            if keep.any():
                survivors.append(kids[keep])
        if not survivors:
            return depth
        frontier = np.concatenate(survivors, axis=0)
    raise RuntimeError(f"no shrinking depth found up to {max_depth}")
