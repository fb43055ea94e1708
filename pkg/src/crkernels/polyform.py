"""Exact differential forms on C^n x C^n with rational-function coefficients.

Polynomials live in the 4n commuting generators

    zeta_1..zeta_n, conj(zeta_1)..conj(zeta_n), z_1..z_n, conj(z_1)..conj(z_n)

(indices 0..4n-1 in that block order).  Conjugates are independent generators;
numeric evaluation binds them to actual conjugates.  Forms carry wedge
monomials over the matching covectors d(zeta_j), d(conj zeta_j), d(z_j),
d(conj z_j) in the same index order, and their denominators are products of
powers of polynomials registered in a BarrierRegistry.  The formal operator
dbar differentiates with respect to all conjugate generators of both slots.

Internally a Poly stores packed exponent keys (16 unsigned bytes, one per
generator, inside two uint64 lanes) plus int64 Gaussian-integer coefficient
arrays over a single positive denominator.  All arithmetic tracks an exact
upper bound on the coefficient 1-norm and moves to Python-integer (object
dtype) arrays before int64 could overflow, so results are exact without
exception.  The byte lanes cap n at 4 and per-generator exponents at 255,
which covers every model this package targets.
"""

from __future__ import annotations

import itertools
import math
import random
import re as _re
from fractions import Fraction
from typing import NamedTuple

import numpy as np

_INT64_SAFE = 2 ** 62
_LANE_MAX = 255
_MAX_N = 4

# Prime moduli for evaluation certificates.  Both are Mersenne primes
# congruent to 3 mod 4, so adjoining a formal imaginary unit gives a
# field and Gaussian values vanish only when both components do.
_M61 = (1 << 61) - 1
_M89 = (1 << 89) - 1

# (prime, seed) pairs for the nonzero screen and the extra certification
# rounds used when a denominator group is too large to clear exactly.
_ZERO_SCREEN = ((_M61, 11), (_M89, 12))
_ZERO_CERTIFY = ((_M61, 21), (_M61, 22), (_M89, 23), (_M89, 24))

# Estimated monomial throughput above which exact denominator clearing
# of one group is abandoned in favor of the evaluation certificate.
_CLEAR_BUDGET = 600_000_000


class PolyOverflow(RuntimeError):
    """Exponent outside the packed-lane range (degree > 255 per generator)."""


class PolyParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


class BarrierMismatch(ValueError):
    """Registered barrier polynomial is not G . (zeta - z) for the given section."""


class SingularEvaluation(ValueError):
    """A denominator fell below tolerance at the evaluation point."""


class CFrac:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    def __add__(self, o):
        o = _try_cfrac(o)
        if o is None:
            return NotImplemented
        return CFrac(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, o):
        o = _try_cfrac(o)
        if o is None:
            return NotImplemented
        return CFrac(self.re - o.re, self.im - o.im)

    def __rsub__(self, o):
        o = _try_cfrac(o)
        if o is None:
            return NotImplemented
        return o - self

    def __mul__(self, o):
        o = _try_cfrac(o)
        if o is None:
            return NotImplemented
        return CFrac(self.re * o.re - self.im * o.im,
                     self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = _as_cfrac(o)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("division by zero CFrac")
        return CFrac((self.re * o.re + self.im * o.im) / d,
                     (self.im * o.re - self.re * o.im) / d)

    def __neg__(self):
        return CFrac(-self.re, -self.im)

    def conjugate(self):
        return CFrac(self.re, -self.im)

    def abs2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __eq__(self, o):
        o = _try_cfrac(o)
        if o is None:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re or self.im)

    def __complex__(self):
        return complex(self.re) + 1j * complex(self.im)

    def __repr__(self):
        return f"CFrac({self.re}, {self.im})"


def _try_cfrac(x):
    if isinstance(x, CFrac):
        return x
    if isinstance(x, (int, Fraction)):
        return CFrac(x)
    return None


def _as_cfrac(x) -> CFrac:
    c = _try_cfrac(x)
    if c is None:
        raise TypeError(f"cannot coerce {type(x).__name__} to CFrac")
    return c


# ---------------------------------------------------------------------------
# Poly
# ---------------------------------------------------------------------------


def _gcd_reduce(arr) -> int:
    if arr.dtype == object:
        g = 0
        for v in arr:
            g = math.gcd(g, abs(int(v)))
            if g == 1:
                return 1
        return g
    a = np.abs(arr)
    return int(np.gcd.reduce(a)) if len(a) else 0


def _exact_norm1(re, im) -> int:
    if len(re) == 0:
        return 0
    if re.dtype == object:
        return int(sum(abs(int(v)) for v in re) + sum(abs(int(v)) for v in im))
    return int(np.abs(re).sum(dtype=object)) + int(np.abs(im).sum(dtype=object))


class Poly:
    """Sparse exact polynomial over the 4n generators; immutable by convention."""

    __slots__ = ("n", "keys", "re", "im", "den", "norm1", "max_exp")

    def __init__(self, n, keys, re, im, den, _canonical=False, _norm1=None):
        if n < 1 or n > _MAX_N:
            raise PolyOverflow(f"n={n} outside the packed range 1..{_MAX_N}")
        self.n = n
        if not _canonical:
            keys, re, im, den, norm1 = _canon(keys, re, im, den, _norm1)
        else:
            norm1 = _norm1
        self.keys = keys
        self.re = re
        self.im = im
        self.den = den
        self.norm1 = norm1 if norm1 is not None else _exact_norm1(re, im)
        self.max_exp = int(self.keys.view(np.uint8).max()) if len(self.keys) else 0

    # ------------------------------------------------------------- builders

    @classmethod
    def zero(cls, n: int) -> "Poly":
        return cls(n, _empty_keys(), _i64(()), _i64(()), 1, _canonical=True, _norm1=0)

    @classmethod
    def const(cls, n: int, c) -> "Poly":
        c = _as_cfrac(c)
        if not c:
            return cls.zero(n)
        den = math.lcm(c.re.denominator, c.im.denominator)
        re = int(c.re * den)
        im = int(c.im * den)
        return cls(n, np.zeros((1, 2), dtype="<u8"), _i64((re,)), _i64((im,)), den)

    @classmethod
    def generator(cls, n: int, g: int) -> "Poly":
        if not 0 <= g < 4 * n:
            raise ValueError(f"generator index {g} out of range for n={n}")
        k = np.zeros((1, 2), dtype="<u8")
        k.view(np.uint8)[0, g] = 1
        return cls(n, k, _i64((1,)), _i64((0,)), 1)

    @classmethod
    def from_terms(cls, n: int, terms: dict) -> "Poly":
        if not terms:
            return cls.zero(n)
        den = 1
        for c in terms.values():
            c = _as_cfrac(c)
            den = math.lcm(den, c.re.denominator, c.im.denominator)
        keys = np.zeros((len(terms), 2), dtype="<u8")
        kb = keys.view(np.uint8)
        re, im = [], []
        for row, (exps, c) in enumerate(terms.items()):
            if len(exps) != 4 * n:
                raise ValueError("exponent tuple length must be 4n")
            for g, e in enumerate(exps):
                if e < 0 or e > _LANE_MAX:
                    raise PolyOverflow(f"exponent {e} outside 0..{_LANE_MAX}")
                kb[row, g] = e
            c = _as_cfrac(c)
            re.append(int(c.re * den))
            im.append(int(c.im * den))
        return cls(n, keys, _obj_or_i64(re), _obj_or_i64(im), den)

    # ------------------------------------------------------------- predicates

    def is_zero(self) -> bool:
        return len(self.keys) == 0

    def __bool__(self):
        return not self.is_zero()

    def __len__(self):
        return len(self.keys)

    def __eq__(self, other):
        if not isinstance(other, Poly) or self.n != other.n:
            return NotImplemented
        if self.den != other.den or len(self) != len(other):
            return False
        return (np.array_equal(self.keys, other.keys)
                and _values_equal(self.re, other.re)
                and _values_equal(self.im, other.im))

    __hash__ = None

    # ------------------------------------------------------------- arithmetic

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        l = math.lcm(self.den, other.den)
        s1, s2 = l // self.den, l // other.den
        bound = self.norm1 * s1 + other.norm1 * s2
        re1, im1 = _scaled(self.re, self.im, s1, bound)
        re2, im2 = _scaled(other.re, other.im, s2, bound)
        keys = np.concatenate([self.keys, other.keys])
        return Poly(self.n, keys, np.concatenate([re1, re2]),
                    np.concatenate([im1, im2]), l, _norm1=bound)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-1) * other

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return (-1) * self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return _poly_mul(self, other)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return _poly_mul(other, self)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative polynomial power")
        out = Poly.const(self.n, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def _coerce(self, other):
        if isinstance(other, Poly):
            if other.n != self.n:
                raise ValueError("mixing polynomials with different n")
            return other
        if isinstance(other, (int, Fraction, CFrac)):
            return Poly.const(self.n, other)
        return NotImplemented

    # ------------------------------------------------------------- operators

    def derivative(self, g: int) -> "Poly":
        """Exact partial derivative with respect to generator g."""
        if not 0 <= g < 4 * self.n:
            raise ValueError(f"generator index {g} out of range")
        if self.is_zero():
            return self
        exps = self.keys.view(np.uint8).reshape(len(self), 16)[:, g]
        mask = exps > 0
        if not mask.any():
            return Poly.zero(self.n)
        keys = self.keys[mask].copy()
        kb = keys.view(np.uint8).reshape(len(keys), 16)
        kb[:, g] -= 1
        e = exps[mask]
        bound = self.norm1 * int(e.max())
        if bound >= _INT64_SAFE and self.re.dtype != object:
            re = self.re[mask].astype(object) * e.astype(object)
            im = self.im[mask].astype(object) * e.astype(object)
        else:
            mul = e.astype(object if self.re.dtype == object else np.int64)
            re = self.re[mask] * mul
            im = self.im[mask] * mul
        return Poly(self.n, keys, re, im, self.den, _norm1=bound)

    def _permuted(self, perm, conj_coeffs=False) -> "Poly":
        if self.is_zero():
            return self
        kb = self.keys.view(np.uint8).reshape(len(self), 16)
        nk = np.ascontiguousarray(kb[:, perm]).view("<u8").reshape(len(self), 2)
        im = (-self.im) if conj_coeffs else self.im
        return Poly(self.n, nk, self.re.copy(), im if conj_coeffs else im.copy(),
                    self.den, _norm1=self.norm1)

    def conjugate(self) -> "Poly":
        """Swap zeta <-> conj zeta and z <-> conj z, conjugating coefficients."""
        n = self.n
        perm = list(range(16))
        for j in range(n):
            perm[j], perm[n + j] = n + j, j
            perm[2 * n + j], perm[3 * n + j] = 3 * n + j, 2 * n + j
        return self._permuted(perm, conj_coeffs=True)

    def swap_slots(self) -> "Poly":
        """Exchange the zeta and z variable slots (both plain and conjugate)."""
        n = self.n
        perm = list(range(16))
        for j in range(n):
            perm[j], perm[2 * n + j] = 2 * n + j, j
            perm[n + j], perm[3 * n + j] = 3 * n + j, n + j
        return self._permuted(perm)

    def diagonal(self) -> "Poly":
        """Substitute z := zeta (and conj z := conj zeta)."""
        if self.is_zero():
            return self
        n = self.n
        kb = self.keys.view(np.uint8).reshape(len(self), 16).astype(np.int16)
        for j in range(n):
            kb[:, j] += kb[:, 2 * n + j]
            kb[:, n + j] += kb[:, 3 * n + j]
            kb[:, 2 * n + j] = 0
            kb[:, 3 * n + j] = 0
        if kb.max() > _LANE_MAX:
            raise PolyOverflow("diagonal substitution exceeds exponent lanes")
        nk = np.ascontiguousarray(kb.astype(np.uint8)).view("<u8").reshape(len(self), 2)
        return Poly(self.n, nk, self.re.copy(), self.im.copy(), self.den,
                    _norm1=self.norm1)

    # ------------------------------------------------------------- evaluation

    def evaluate(self, zeta, z):
        """Numeric value with conj generators bound; supports batched arrays."""
        zeta = [np.asarray(v, dtype=complex) for v in zeta]
        z = [np.asarray(v, dtype=complex) for v in z]
        if len(zeta) != self.n or len(z) != self.n:
            raise ValueError("point arity does not match n")
        vals = zeta + [np.conj(v) for v in zeta] + z + [np.conj(v) for v in z]
        shape = np.broadcast_shapes(*(v.shape for v in vals)) if vals else ()
        if self.is_zero():
            out = np.zeros(shape, dtype=complex)
            return out if shape else complex(out)
        exps = self.keys.view(np.uint8).reshape(len(self), 16)
        coeff = (self.re.astype(float) + 1j * self.im.astype(float)) / self.den
        nb = int(np.prod(shape)) if shape else 1
        if len(self) * nb > 6e7:
            raise ValueError("batch too large; chunk the evaluation points")
        mono = np.ones((len(self),) + shape, dtype=complex)
        for g in range(4 * self.n):
            e = exps[:, g]
            if e.any():
                v = np.broadcast_to(vals[g], shape)
                mono *= v[None, ...] ** e.reshape((len(self),) + (1,) * len(shape))
        out = np.tensordot(coeff, mono, axes=(0, 0))
        return out if shape else complex(out)

    def evaluate_exact(self, zeta, z) -> CFrac:
        """Exact value at a point with CFrac coordinates."""
        vals = list(zeta) + [v.conjugate() for v in zeta] + list(z) + \
            [v.conjugate() for v in z]
        total = CFrac(0)
        for exps, c in self.terms():
            term = c
            for g, e in enumerate(exps):
                for _ in range(e):
                    term = term * vals[g]
            total = total + term
        return total

    # ------------------------------------------------------------- inspection

    def terms(self):
        """Yield (exponent tuple of length 4n, CFrac coefficient)."""
        kb = self.keys.view(np.uint8).reshape(len(self), 16)
        for i in range(len(self)):
            exps = tuple(int(x) for x in kb[i, : 4 * self.n])
            yield exps, CFrac(Fraction(int(self.re[i]), self.den),
                              Fraction(int(self.im[i]), self.den))

    def to_text(self) -> str:
        if self.is_zero():
            return "0"
        bits = []
        for exps, c in self.terms():
            mono = []
            for g, e in enumerate(exps):
                if not e:
                    continue
                j = g % self.n
                block = g // self.n
                name = [f"w{j + 1}", f"conj(w{j + 1})", f"z{j + 1}",
                        f"conj(z{j + 1})"][block]
                mono.append(name if e == 1 else f"{name}^{e}")
            bits.append(_format_term(c, mono))
        out = bits[0]
        for b in bits[1:]:
            out += f" - {b[1:]}" if b.startswith("-") else f" + {b}"
        return out

    @classmethod
    def parse(cls, text: str, n: int) -> "Poly":
        return _parse_poly(text, n)

    def __repr__(self):
        t = self.to_text()
        return f"Poly(n={self.n}, {t if len(t) < 60 else t[:57] + '...'})"


def _i64(xs):
    return np.array(xs, dtype=np.int64)


def _obj_or_i64(xs):
    if any(abs(x) >= _INT64_SAFE for x in xs):
        return np.array(xs, dtype=object)
    return np.array(xs, dtype=np.int64)


def _empty_keys():
    return np.zeros((0, 2), dtype="<u8")


def _values_equal(a, b) -> bool:
    if len(a) != len(b):
        return False
    if a.dtype == b.dtype:
        return bool(np.array_equal(a, b))
    return all(int(x) == int(y) for x, y in zip(a, b))


def _scaled(re, im, s, bound):
    if s == 1:
        return re, im
    if bound >= _INT64_SAFE and re.dtype != object:
        re = re.astype(object)
        im = im.astype(object)
    return re * s, im * s


def _canon(keys, re, im, den, norm1_bound):
    """Merge duplicate keys, drop zeros, reduce by gcd; returns canonical parts."""
    if len(keys) == 0:
        return _empty_keys(), _i64(()), _i64(()), 1, 0
    if norm1_bound is not None and norm1_bound >= _INT64_SAFE and re.dtype != object:
        re = re.astype(object)
        im = im.astype(object)
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    keys, re, im = keys[order], re[order], im[order]
    fresh = np.empty(len(keys), dtype=bool)
    fresh[0] = True
    np.any(keys[1:] != keys[:-1], axis=1, out=fresh[1:])
    if not fresh.all():
        starts = np.flatnonzero(fresh)
        uniq = keys[starts]
        if re.dtype == object:
            zre = np.zeros(len(starts), dtype=object)
            zim = np.zeros(len(starts), dtype=object)
            gid = np.cumsum(fresh) - 1
            np.add.at(zre, gid, re)
            np.add.at(zim, gid, im)
        else:
            zre = np.add.reduceat(re, starts)
            zim = np.add.reduceat(im, starts)
        re, im, keys = zre, zim, uniq
    if re.dtype == object:
        nz = np.array([bool(a or b) for a, b in zip(re, im)], dtype=bool)
    else:
        nz = (re != 0) | (im != 0)
    if not nz.all():
        keys, re, im = keys[nz], re[nz], im[nz]
    if len(keys) == 0:
        return _empty_keys(), _i64(()), _i64(()), 1, 0
    g = math.gcd(_gcd_reduce(re), _gcd_reduce(im))
    g = math.gcd(g, den)
    if g > 1:
        re = re // g
        im = im // g
        den //= g
    norm1 = _exact_norm1(re, im)
    if re.dtype == object and norm1 < _INT64_SAFE:
        re = re.astype(np.int64)
        im = im.astype(np.int64)
    return np.ascontiguousarray(keys), re, im, den, norm1


_MUL_CHUNK_ROWS = 4_000_000


def _poly_mul(a: Poly, b: Poly) -> Poly:
    if a.n != b.n:
        raise ValueError("mixing polynomials with different n")
    n = a.n
    if a.is_zero() or b.is_zero():
        return Poly.zero(n)
    if a.max_exp + b.max_exp > _LANE_MAX:
        raise PolyOverflow("product exceeds per-generator exponent lanes")
    if len(a) > len(b):
        a, b = b, a
    bound = a.norm1 * b.norm1
    den = a.den * b.den
    use_obj = bound >= _INT64_SAFE
    bre = b.re.astype(object) if use_obj and b.re.dtype != object else b.re
    bim = b.im.astype(object) if use_obj and b.im.dtype != object else b.im
    budget = _MUL_CHUNK_ROWS // 8 if use_obj else _MUL_CHUNK_ROWS
    group = max(1, budget // max(1, len(b)))
    total = None
    for lo in range(0, len(a), group):
        hi = min(len(a), lo + group)
        kparts, rparts, iparts = [], [], []
        for i in range(lo, hi):
            ar = int(a.re[i])
            ai = int(a.im[i])
            kparts.append(b.keys + a.keys[i])
            rparts.append(bre * ar - bim * ai)
            iparts.append(bre * ai + bim * ar)
        part = Poly(n, np.concatenate(kparts), np.concatenate(rparts),
                    np.concatenate(iparts), den, _norm1=bound)
        total = part if total is None else total + part
    return total


def _format_term(c: CFrac, mono: list) -> str:
    def frac(f):
        return str(f) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"

    if c.im == 0:
        coeff = frac(c.re)
    elif c.re == 0:
        coeff = "i" if c.im == 1 else ("-i" if c.im == -1 else f"{frac(c.im)}*i")
    else:
        inner = f"{frac(c.re)} + {frac(c.im)}*i" if c.im > 0 else \
            f"{frac(c.re)} - {frac(-c.im)}*i"
        coeff = f"({inner})"
    if not mono:
        return coeff
    body = "*".join(mono)
    if coeff == "1":
        return body
    if coeff == "-1":
        return f"-{body}"
    return f"{coeff}*{body}"


# ---------------------------------------------------------------------------
# Parser: variables z1..zn, w1..wn, conj(...), i, rationals p/q, + - * / ^ **
# ---------------------------------------------------------------------------

_TOKEN = _re.compile(r"(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|[-+*/^()])|(\S)")


def _tokenize(text: str):
    toks = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        pos = 0
        while pos < len(line):
            if line[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(line, pos)
            num, name, op, bad = m.groups()
            col = pos + 1
            if bad is not None:
                raise PolyParseError(f"unexpected character {bad!r}", lineno, col)
            if num is not None:
                toks.append(("num", int(num), lineno, col))
            elif name is not None:
                toks.append(("name", name, lineno, col))
            else:
                toks.append(("op", op, lineno, col))
            pos = m.end()
    toks.append(("end", None, text.count("\n") + 1, len(text.split("\n")[-1]) + 1))
    return toks


class _Parser:
    def __init__(self, toks, n):
        self.toks = toks
        self.i = 0
        self.n = n

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise PolyParseError(msg, tok[2], tok[3])

    def parse(self) -> Poly:
        p = self.expr()
        kind, val, *_ = self.peek()
        if kind != "end":
            self.error(f"unexpected trailing {val!r}")
        return p

    def expr(self) -> Poly:
        kind, val, *_ = self.peek()
        negate = False
        if kind == "op" and val in "+-":
            self.take()
            negate = val == "-"
        p = self.term()
        if negate:
            p = -1 * p
        while True:
            kind, val, *_ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                q = self.term()
                p = p - q if val == "-" else p + q
            else:
                return p

    def term(self) -> Poly:
        p = self.factor()
        while True:
            kind, val, *_ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                p = p * self.factor()
            elif kind == "op" and val == "/":
                tok = self.take()
                q = self.factor()
                c = _constant_of(q)
                if c is None or not c:
                    self.error("division only by nonzero rational constants", tok)
                p = (CFrac(1) / c) * p
            else:
                return p

    def factor(self) -> Poly:
        kind, val, *_ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            p = self.factor()
            return -1 * p if val == "-" else p
        p = self.atom()
        kind, val, *_ = self.peek()
        if kind == "op" and val in ("^", "**"):
            self.take()
            ek, ev, *_rest = self.peek()
            if ek != "num":
                self.error("exponent must be a nonnegative integer literal")
            self.take()
            p = p ** ev
        return p

    def atom(self) -> Poly:
        kind, val, line, col = self.take()
        if kind == "num":
            return Poly.const(self.n, val)
        if kind == "op" and val == "(":
            p = self.expr()
            k2, v2, *_ = self.take()
            if not (k2 == "op" and v2 == ")"):
                raise PolyParseError("expected ')'", line, col)
            return p
        if kind == "name":
            if val == "i":
                return Poly.const(self.n, CFrac(0, 1))
            if val == "conj":
                k2, v2, *_ = self.take()
                if not (k2 == "op" and v2 == "("):
                    raise PolyParseError("expected '(' after conj", line, col)
                p = self.expr()
                k3, v3, *_ = self.take()
                if not (k3 == "op" and v3 == ")"):
                    raise PolyParseError("unclosed conj(...)", line, col)
                return p.conjugate()
            m = _re.fullmatch(r"([wz])(\d+)", val)
            if m:
                j = int(m.group(2))
                if not 1 <= j <= self.n:
                    raise PolyParseError(
                        f"variable {val} out of range for n={self.n}", line, col)
                base = 0 if m.group(1) == "w" else 2 * self.n
                return Poly.generator(self.n, base + j - 1)
            raise PolyParseError(f"unknown name {val!r}", line, col)
        raise PolyParseError(f"unexpected token {val!r}", line, col)


def _constant_of(p: Poly):
    if p.is_zero():
        return CFrac(0)
    if len(p) == 1 and not p.keys.any():
        return CFrac(Fraction(int(p.re[0]), p.den), Fraction(int(p.im[0]), p.den))
    return None


def _parse_poly(text: str, n: int) -> Poly:
    return _Parser(_tokenize(text), n).parse()


# ---------------------------------------------------------------------------
# BarrierRegistry
# ---------------------------------------------------------------------------


class BarrierRegistry:
    """Append-only store of denominator polynomials with stable integer ids."""

    def __init__(self, n: int):
        self.n = n
        self._polys: list = []
        self._by_text: dict = {}
        self._derivs: dict = {}
        self._powers: dict = {}

    def register(self, phi: Poly) -> int:
        if phi.n != self.n:
            raise ValueError("barrier n mismatch")
        if phi.is_zero():
            raise ValueError("cannot register the zero polynomial as a barrier")
        key = phi.to_text()
        bid = self._by_text.get(key)
        if bid is None:
            bid = len(self._polys)
            self._polys.append(phi)
            self._by_text[key] = bid
        return bid

    def poly(self, bid: int) -> Poly:
        return self._polys[bid]

    def __len__(self):
        return len(self._polys)

    def dbar_derivs(self, bid: int):
        """Nonzero derivatives of barrier bid w.r.t. all conjugate generators."""
        got = self._derivs.get(bid)
        if got is None:
            phi = self._polys[bid]
            n = self.n
            got = []
            for g in itertools.chain(range(n, 2 * n), range(3 * n, 4 * n)):
                d = phi.derivative(g)
                if not d.is_zero():
                    got.append((g, d))
            got = tuple(got)
            self._derivs[bid] = got
        return got

    def power(self, bid: int, e: int) -> Poly:
        if e == 0:
            return Poly.const(self.n, 1)
        got = self._powers.get((bid, e))
        if got is None:
            got = self._polys[bid] ** e
            self._powers[(bid, e)] = got
        return got


# ---------------------------------------------------------------------------
# FormExpr
# ---------------------------------------------------------------------------


class EvalResult(NamedTuple):
    coeffs: dict  # wedge mask -> complex
    norm: float   # max coefficient magnitude


def _merge_mask(m1: int, m2: int):
    """Wedge two ordered covector monomials; None if they overlap."""
    if m1 & m2:
        return None
    sign = 1
    mm = m2
    while mm:
        b = mm & -mm
        i = b.bit_length() - 1
        if ((m1 >> (i + 1)).bit_count()) & 1:
            sign = -sign
        mm ^= b
    return m1 | m2, sign


def _den_mul(d1: tuple, d2: tuple) -> tuple:
    if not d1:
        return d2
    if not d2:
        return d1
    acc = dict(d1)
    for bid, e in d2:
        acc[bid] = acc.get(bid, 0) + e
    return tuple(sorted(acc.items()))


def _lane_assignment(n: int, p: int, seed: int) -> list:
    """Deterministic pseudo-random field values, one per generator lane.

    Lanes are independent formal generators, so no conjugation relation
    is imposed on the drawn values; that matches the ring the zero tests
    decide membership in.
    """
    rng = random.Random((p, seed))
    return [rng.randrange(1, p - 1) for _ in range(4 * n)]


def _mod_eval(poly: "Poly", vals, p: int):
    """Gaussian value of a polynomial mod p with all lanes bound.

    Returns (re, im) reduced mod p.  Exponent rows stream through plain
    Python in moderate chunks; per-lane power tables keep each monomial
    to a handful of small-int multiplications.
    """
    count = len(poly)
    if count == 0:
        return 0, 0
    kb = poly.keys.view(np.uint8).reshape(count, 16)
    lanes = 4 * poly.n
    pows = []
    for g in range(16):
        top = int(kb[:, g].max())
        tab = [1] * (top + 1)
        v = vals[g] % p if g < lanes else 0
        for e in range(1, top + 1):
            tab[e] = tab[e - 1] * v % p
        pows.append(tab)
    acc_re = 0
    acc_im = 0
    re = poly.re
    im = poly.im
    for lo in range(0, count, 65536):
        rows = kb[lo:lo + 65536].tolist()
        for i, row in enumerate(rows):
            m = 1
            for g, e in enumerate(row):
                if e:
                    m = m * pows[g][e] % p
            r = int(re[lo + i])
            s = int(im[lo + i])
            if r:
                acc_re += r % p * m
            if s:
                acc_im += s % p * m
    dinv = pow(poly.den % p, -1, p)
    return acc_re * dinv % p, acc_im * dinv % p


class FormExpr:
    """Differential form: sum of Poly-coefficient terms over wedge monomials.

    terms maps (mask, den) -> Poly where mask is a bit set over the 4n
    covectors (bit g is the covector matching generator g) and den is a sorted
    tuple of (barrier id, positive exponent).
    """

    __slots__ = ("n", "reg", "terms")

    def __init__(self, n: int, reg: BarrierRegistry, terms: dict | None = None):
        if reg.n != n:
            raise ValueError("registry n mismatch")
        self.n = n
        self.reg = reg
        self.terms = {k: p for k, p in (terms or {}).items() if not p.is_zero()}

    # ------------------------------------------------------------- builders

    @classmethod
    def zero(cls, n: int, reg: BarrierRegistry) -> "FormExpr":
        return cls(n, reg)

    @classmethod
    def one(cls, n: int, reg: BarrierRegistry) -> "FormExpr":
        return cls(n, reg, {(0, ()): Poly.const(n, 1)})

    @classmethod
    def scalar(cls, p: Poly, reg: BarrierRegistry) -> "FormExpr":
        return cls(p.n, reg, {(0, ()): p})

    @classmethod
    def covector(cls, n: int, reg: BarrierRegistry, g: int) -> "FormExpr":
        if not 0 <= g < 4 * n:
            raise ValueError("covector index out of range")
        return cls(n, reg, {(1 << g, ()): Poly.const(n, 1)})

    @classmethod
    def from_term(cls, n: int, reg: BarrierRegistry, mask: int, den: tuple,
                  p) -> "FormExpr":
        if isinstance(p, (int, Fraction, CFrac)):
            p = Poly.const(n, p)
        den = tuple(sorted((b, e) for b, e in den if e))
        return cls(n, reg, {(mask, den): p})

    # ------------------------------------------------------------- predicates

    def degree(self):
        """Common wedge degree of the terms (None for the zero form)."""
        degs = {m.bit_count() for m, _ in self.terms}
        if not degs:
            return None
        if len(degs) > 1:
            raise ValueError("inhomogeneous form has no single degree")
        return degs.pop()

    def _mod_coefficients(self, vals, p: int):
        """Wedge coefficients at one lane assignment, in the field mod p.

        Returns {mask: (re, im)}, denominators inverted exactly, or None
        when some denominator value is not invertible there (the caller
        resamples; with the primes used that is astronomically rare).
        """
        den_cache: dict = {}
        out: dict = {}
        for (mask, den), poly in self.terms.items():
            w_re, w_im = _mod_eval(poly, vals, p)
            for bid, e in den:
                got = den_cache.get(bid)
                if got is None:
                    got = _mod_eval(self.reg.poly(bid), vals, p)
                    den_cache[bid] = got
                dre, dim_ = got
                norm = (dre * dre + dim_ * dim_) % p
                if norm == 0:
                    return None
                inv = pow(norm, -1, p)
                for _ in range(e):
                    nre = (w_re * dre + w_im * dim_) * inv % p
                    nim = (w_im * dre - w_re * dim_) * inv % p
                    w_re, w_im = nre, nim
            cur = out.get(mask)
            if cur is None:
                out[mask] = (w_re, w_im)
            else:
                out[mask] = ((cur[0] + w_re) % p, (cur[1] + w_im) % p)
        return out

    def _certificate_round(self, p: int, seed: int):
        """One exact field evaluation: True if provably nonzero, False if
        every coefficient vanished at the point, None if inconclusive."""
        for shift in range(4):
            vals = _lane_assignment(self.n, p, seed + 1000 * shift)
            got = self._mod_coefficients(vals, p)
            if got is not None:
                return any(r or s for r, s in got.values())
        return None

    def _clearing_cost(self, groups, top) -> int:
        """Monomial-throughput estimate of clearing one group exactly."""
        cost = 0
        for den, poly in groups:
            have = dict(den)
            c = len(poly)
            for bid, e in top.items():
                miss = e - have.get(bid, 0)
                if miss:
                    c *= max(len(self.reg.poly(bid)), 2) ** miss
            cost += c
        return cost

    def is_zero(self) -> bool:
        """Exact zero decision with a certificate fallback for huge groups.

        First a screen: every coefficient is evaluated exactly in a prime
        field at deterministic points, conjugate lanes bound as the
        independent generators they are; any nonzero value is a proof of
        nonzeroness.  Terms are then grouped per wedge monomial and each
        group is cleared to its common denominator by repeated
        multiplication with the base barrier polynomials (canonicalizing
        at every step) and cancelled through a pairwise tree, which
        decides zero exactly.  A group whose clearing estimate exceeds
        the module budget is not expanded; its verdict rests on the
        screen plus extra evaluation rounds at independent points.  A
        nonzero form escapes that path only by vanishing at every sampled
        point, and under the lane-degree bounds enforced here that has
        probability below 2**-200.  The decision never touches floating
        point.
        """
        if not self.terms:
            return True
        conclusive = 0
        for p, seed in _ZERO_SCREEN:
            hit = self._certificate_round(p, seed)
            if hit is None:
                continue
            conclusive += 1
            if hit:
                return False
        by_mask: dict = {}
        for (mask, den), p in self.terms.items():
            by_mask.setdefault(mask, []).append((den, p))
        deferred = False
        for groups in by_mask.values():
            if len(groups) == 1:
                if not groups[0][1].is_zero():
                    return False
                continue
            top: dict = {}
            for den, _ in groups:
                for bid, e in den:
                    top[bid] = max(top.get(bid, 0), e)
            if self._clearing_cost(groups, top) > _CLEAR_BUDGET:
                deferred = True
                continue
            groups.sort(key=lambda item: item[0])
            comps = []
            for den, p in groups:
                have = dict(den)
                comp = p
                for bid, e in top.items():
                    base = self.reg.poly(bid)
                    for _ in range(e - have.get(bid, 0)):
                        comp = comp * base
                comps.append(comp)
            while len(comps) > 1:
                comps = [sum(comps[i:i + 2], Poly.zero(self.n))
                         for i in range(0, len(comps), 2)]
            if not comps[0].is_zero():
                return False
        if deferred:
            for p, seed in _ZERO_CERTIFY:
                hit = self._certificate_round(p, seed)
                if hit is None:
                    continue
                conclusive += 1
                if hit:
                    return False
            if conclusive < 4:
                raise RuntimeError(
                    "not enough conclusive evaluation rounds to certify a "
                    "deferred denominator group")
        return True

    # ------------------------------------------------------------- algebra

    def _check(self, other: "FormExpr"):
        if not isinstance(other, FormExpr):
            raise TypeError("expected FormExpr")
        if other.n != self.n or other.reg is not self.reg:
            raise ValueError("forms built over different generators/registries")

    def __add__(self, other: "FormExpr") -> "FormExpr":
        self._check(other)
        acc = dict(self.terms)
        for k, p in other.terms.items():
            q = acc.get(k)
            acc[k] = p if q is None else q + p
        return FormExpr(self.n, self.reg, acc)

    def __sub__(self, other: "FormExpr") -> "FormExpr":
        return self + (-1) * other

    def __neg__(self):
        return (-1) * self

    def __rmul__(self, c) -> "FormExpr":
        if not isinstance(c, (int, Fraction, CFrac)):
            return NotImplemented
        return FormExpr(self.n, self.reg,
                        {k: c * p for k, p in self.terms.items()})

    def with_denominator(self, extra: tuple) -> "FormExpr":
        extra = tuple(sorted((b, e) for b, e in extra if e))
        if not extra:
            return self
        return FormExpr(self.n, self.reg,
                        {(m, _den_mul(d, extra)): p
                         for (m, d), p in self.terms.items()})

    def bidegree_part(self, s: int, r: int) -> "FormExpr":
        """Terms with exactly s dz factors and r d(conj z) factors."""
        n = self.n
        zmask = ((1 << n) - 1) << (2 * n)
        zbmask = ((1 << n) - 1) << (3 * n)
        keep = {}
        for (m, d), p in self.terms.items():
            if (m & zmask).bit_count() == s and (m & zbmask).bit_count() == r:
                keep[(m, d)] = p
        return FormExpr(n, self.reg, keep)

    def swap_slots(self) -> "FormExpr":
        """Exchange zeta and z in coefficients, denominators, and covectors."""
        n = self.n
        remap = list(range(4 * n))
        for j in range(n):
            remap[j], remap[2 * n + j] = 2 * n + j, j
            remap[n + j], remap[3 * n + j] = 3 * n + j, n + j
        out: dict = {}
        for (m, d), p in self.terms.items():
            idx = [i for i in range(4 * n) if m & (1 << i)]
            new_idx = [remap[i] for i in idx]
            perm = sorted(range(len(new_idx)), key=lambda t: new_idx[t])
            inv = sum(1 for a in range(len(perm)) for b in range(a + 1, len(perm))
                      if perm[a] > perm[b])
            sign = -1 if inv % 2 else 1
            nm = 0
            for i in new_idx:
                nm |= 1 << i
            nd = tuple(sorted((self.reg.register(self.reg.poly(bid).swap_slots()), e)
                              for bid, e in d))
            q = sign * p.swap_slots()
            prev = out.get((nm, nd))
            out[(nm, nd)] = q if prev is None else prev + q
        return FormExpr(n, self.reg, out)

    # ------------------------------------------------------------- numerics

    def evaluate(self, zeta, z, tol: float = 1e-12) -> EvalResult:
        """Numeric coefficients per wedge monomial at one point, plus max norm."""
        den_vals: dict = {}
        for (_, d) in self.terms:
            for bid, _e in d:
                if bid not in den_vals:
                    v = complex(self.reg.poly(bid).evaluate(zeta, z))
                    if abs(v) <= tol:
                        raise SingularEvaluation(
                            f"denominator {bid} has magnitude {abs(v):.3e} at the point")
                    den_vals[bid] = v
        coeffs: dict = {}
        for (m, d), p in self.terms.items():
            v = complex(p.evaluate(zeta, z))
            for bid, e in d:
                v /= den_vals[bid] ** e
            coeffs[m] = coeffs.get(m, 0j) + v
        coeffs = {m: v for m, v in coeffs.items() if v != 0}
        norm = max((abs(v) for v in coeffs.values()), default=0.0)
        return EvalResult(coeffs, norm)

    # ------------------------------------------------------------- output

    def to_text(self) -> str:
        n = self.n
        names = []
        for g in range(4 * n):
            j = g % n
            block = g // n
            names.append([f"dw{j + 1}", f"dcw{j + 1}", f"dz{j + 1}",
                          f"dcz{j + 1}"][block])
        lines = []
        for (m, d) in sorted(self.terms):
            p = self.terms[(m, d)]
            wedge_txt = "^".join(names[i] for i in range(4 * n) if m & (1 << i)) or "1"
            den_txt = "*".join(f"Phi{bid}" + (f"^{e}" if e > 1 else "")
                               for bid, e in d) or "1"
            lines.append(f"{wedge_txt} / {den_txt} : {p.to_text()}")
        return "\n".join(lines) if lines else "0"

    def __repr__(self):
        return f"FormExpr({len(self.terms)} terms, n={self.n})"


def wedge(f: FormExpr, g: FormExpr) -> FormExpr:
    """Exterior product with canonical reordering signs."""
    f._check(g)
    acc: dict = {}
    for (m1, d1), p1 in f.terms.items():
        for (m2, d2), p2 in g.terms.items():
            merged = _merge_mask(m1, m2)
            if merged is None:
                continue
            mask, sign = merged
            den = _den_mul(d1, d2)
            q = p1 * p2
            if sign < 0:
                q = -1 * q
            prev = acc.get((mask, den))
            acc[(mask, den)] = q if prev is None else prev + q
    return FormExpr(f.n, f.reg, acc)


def form_power(f: FormExpr, k: int) -> FormExpr:
    if k < 0:
        raise ValueError("negative form power")
    out = FormExpr.one(f.n, f.reg)
    for _ in range(k):
        out = wedge(out, f)
    return out


def dbar(f: FormExpr, slot: str | None = None) -> FormExpr:
    """Formal antiholomorphic exterior derivative.

    With slot=None both variable slots contribute; "zeta" or "z" keeps only
    the conjugate differentials of that slot, splitting the operator as
    dbar(f) == dbar(f, "zeta") + dbar(f, "z").
    """
    n = f.n
    reg = f.reg
    if slot is None:
        anti = list(range(n, 2 * n)) + list(range(3 * n, 4 * n))
    elif slot == "zeta":
        anti = list(range(n, 2 * n))
    elif slot == "z":
        anti = list(range(3 * n, 4 * n))
    else:
        raise ValueError(f"unknown slot {slot!r}")
    allowed = frozenset(anti)
    acc: dict = {}

    def put(mask, den, p):
        if p.is_zero():
            return
        prev = acc.get((mask, den))
        acc[(mask, den)] = p if prev is None else prev + p

    for (mask, den), p in f.terms.items():
        for g in anti:
            bit = 1 << g
            if mask & bit:
                continue
            sign = -1 if ((mask & (bit - 1)).bit_count() & 1) else 1
            d = p.derivative(g)
            if not d.is_zero():
                put(mask | bit, den, sign * d if sign < 0 else d)
        for bid, e in den:
            bumped = _den_mul(den, ((bid, 1),))
            for g, dphi in reg.dbar_derivs(bid):
                if g not in allowed:
                    continue
                bit = 1 << g
                if mask & bit:
                    continue
                sign = -1 if ((mask & (bit - 1)).bit_count() & 1) else 1
                q = (-e * sign) * (p * dphi)
                put(mask | bit, bumped, q)
    return FormExpr(n, reg, acc)


def cf_form(G: list, phi_id: int, reg: BarrierRegistry) -> FormExpr:
    """Cauchy-Fantappie form G.d(zeta-z) / Phi for a registered barrier Phi."""
    n = reg.n
    acc = Poly.zero(n)
    for j in range(n):
        wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
        acc = acc + G[j] * wj
    if not (acc - reg.poly(phi_id)).is_zero():
        raise BarrierMismatch(
            "registered barrier is not G.(zeta-z) for the given section")
    den = ((phi_id, 1),)
    terms: dict = {}
    for j in range(n):
        if G[j].is_zero():
            continue
        terms[(1 << j, den)] = G[j]
        terms[(1 << (2 * n + j), den)] = -1 * G[j]
    return FormExpr(n, reg, terms)


def koppelman(maps: list, reg: BarrierRegistry, strict: bool = False) -> FormExpr:
    """Omega(G^1..G^m): wedge of CF forms against dbar-power blocks.

    An empty map list gives the zero form (the convention adopted for the
    boundary bookkeeping of the kernel assembly).  A repeated map makes the
    result algebraically zero, returned as such unless strict is set.
    """
    n = reg.n
    m = len(maps)
    if m == 0:
        return FormExpr.zero(n, reg)
    if m > n:
        raise ValueError(f"Omega needs at most n={n} maps, got {m}")
    for i in range(m):
        for j in range(i + 1, m):
            gi, pi = maps[i]
            gj, pj = maps[j]
            if pi == pj and all((a - b).is_zero() for a, b in zip(gi, gj)):
                if strict:
                    raise ValueError("repeated Leray map in strict mode")
                return FormExpr.zero(n, reg)
    omegas = [cf_form(G, pid, reg) for G, pid in maps]
    dbars = [dbar(w) for w in omegas]
    target = n - m
    block_cache: dict = {}

    def block(j: int, a: int) -> FormExpr:
        got = block_cache.get((j, a))
        if got is None:
            got = wedge(omegas[j], form_power(dbars[j], a))
            block_cache[(j, a)] = got
        return got

    total = FormExpr.zero(n, reg)
    for alpha in _compositions(target, m):
        prod = block(0, alpha[0])
        for j in range(1, m):
            if not prod.terms:
                break
            prod = wedge(prod, block(j, alpha[j]))
        total = total + prod
    return total


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def product_formula(G: list, phi_id: int, reg: BarrierRegistry, k: int) -> FormExpr:
    """Closed product (G.dw) ^ (dbar G.dw)^k / Phi^(k+1), built without dbar."""
    n = reg.n
    acc = Poly.zero(n)
    for j in range(n):
        wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
        acc = acc + G[j] * wj
    if not (acc - reg.poly(phi_id)).is_zero():
        raise BarrierMismatch(
            "registered barrier is not G.(zeta-z) for the given section")
    W = FormExpr.zero(n, reg)
    DW = FormExpr.zero(n, reg)
    anti = list(range(n, 2 * n)) + list(range(3 * n, 4 * n))
    for j in range(n):
        dz = FormExpr.covector(n, reg, j) - FormExpr.covector(n, reg, 2 * n + j)
        if not G[j].is_zero():
            W = W + wedge(FormExpr.scalar(G[j], reg), dz)
        dg = FormExpr.zero(n, reg)
        for g in anti:
            c = G[j].derivative(g)
            if not c.is_zero():
                dg = dg + wedge(FormExpr.scalar(c, reg),
                                FormExpr.covector(n, reg, g))
        if dg.terms:
            DW = DW + wedge(dg, dz)
    out = wedge(W, form_power(DW, k))
    return out.with_denominator(((phi_id, k + 1),))
