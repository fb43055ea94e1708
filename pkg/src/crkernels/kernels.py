"""Layered kernel assembly over signed families of barrier directions.

The construction is combinatorial on top of the form calculus: every subset I
of {±1..±k} with distinct moduli gets a direction simplex sigma_I, and the
kernels are Omega evaluations of chains derived from those simplices.  K^I
couples the difference-conjugate section with the direction sections, B^I is
the alternating sum of one-direction deletions, and the global K, E, R arise
from the sign-weighted sum over the full-modulus family, with E and R coned
over a fixed admissible apex direction.  Everything is exact: residuals of
the structural identities are FormExpr values that canonicalize to zero.

The registry is append-only: all barrier registration happens while a bundle
is assembled single-threaded, after which reads (evaluation, dbar caches) are
safe to share.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .barrier import LerayError, leray, matrix_rank_exact
from .polyform import (
    BarrierRegistry,
    CFrac,
    FormExpr,
    Poly,
    dbar,
    koppelman,
)
from .simplicial import Chain, boundary, cone, prism, subdivide, independent


class KernelError(Exception):
    pass


class SubdivisionError(KernelError):
    """No subdivision depth within budget passes the span-intersection test."""


class ApexError(KernelError):
    """Apex candidate search exhausted or a forced apex is inadmissible."""


# ---------------------------------------------------------------------------
# index machinery
# ---------------------------------------------------------------------------


class IndexSet:
    """Subset of {±1..±k} with pairwise distinct moduli, ordered by modulus.

    The sign is -1 when the number of negative elements is odd.  drop(nu)
    removes the element at 1-indexed position nu in modulus order.
    """

    __slots__ = ("elements",)

    def __init__(self, elements):
        elems = tuple(sorted((int(e) for e in elements), key=abs))
        if any(e == 0 for e in elems):
            raise ValueError("index elements must be nonzero")
        moduli = [abs(e) for e in elems]
        if len(set(moduli)) != len(moduli):
            raise ValueError(f"repeated modulus in {elems}")
        self.elements = elems

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def element(self, nu: int) -> int:
        if not 1 <= nu <= len(self.elements):
            raise ValueError(f"position {nu} out of range")
        return self.elements[nu - 1]

    def drop(self, nu: int) -> "IndexSet":
        if not 1 <= nu <= len(self.elements):
            raise ValueError(f"position {nu} out of range")
        return IndexSet(self.elements[: nu - 1] + self.elements[nu:])

    @property
    def sgn(self) -> int:
        return -1 if sum(1 for e in self.elements if e < 0) % 2 else 1

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self.elements == other.elements

    def __hash__(self):
        return hash(self.elements)

    def __repr__(self):
        inner = ",".join(str(e) for e in self.elements)
        return f"IndexSet({{{inner}}})"


def index_sets(k: int, ell: int):
    """All index sets of size ell, moduli drawn from 1..k."""
    if not 1 <= ell <= k:
        raise ValueError(f"need 1 <= ell <= k, got ell={ell}, k={k}")
    out = []
    for moduli in itertools.combinations(range(1, k + 1), ell):
        for signs in itertools.product((1, -1), repeat=ell):
            out.append(IndexSet(tuple(s * m for s, m in zip(signs, moduli))))
    return tuple(out)


def index_sets_prime(k: int, ell: int):
    """Index sets whose moduli are exactly 1..ell."""
    if not 1 <= ell <= k:
        raise ValueError(f"need 1 <= ell <= k, got ell={ell}, k={k}")
    out = []
    for signs in itertools.product((1, -1), repeat=ell):
        out.append(IndexSet(tuple(s * m for s, m in zip(signs, range(1, ell + 1)))))
    return tuple(out)


def index_machinery(k: int) -> dict:
    """Both families for every size, as {"all": {ell: ...}, "prime": {ell: ...}}."""
    if not 1 <= k <= 4:
        raise ValueError(f"codimension k={k} is beyond the desk-scale bound 4")
    return {
        "all": {ell: index_sets(k, ell) for ell in range(1, k + 1)},
        "prime": {ell: index_sets_prime(k, ell) for ell in range(1, k + 1)},
    }


def direction_vector(j: int, k: int):
    """Signed basis direction for index j, as a Fraction tuple in R^k."""
    if not 1 <= abs(j) <= k:
        raise ValueError(f"index {j} outside +-1..+-{k}")
    v = [Fraction(0)] * k
    v[abs(j) - 1] = Fraction(1 if j > 0 else -1)
    return tuple(v)


def sigma_chain(I: IndexSet, k: int) -> Chain:
    """The direction simplex of I as a one-term chain."""
    return Chain.of(tuple(direction_vector(j, k) for j in I.elements))


def _boundary_with_device(ch: Chain) -> Chain:
    """Boundary extended to grade one: a single vertex bounds minus the
    empty simplex, which the Omega evaluation maps to the plain
    difference-conjugate kernel."""
    if ch.grade == 1:
        total = -sum(ch.coefficients())
        return Chain({(): total}) if total else Chain()
    return boundary(ch)


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------


class KernelBundle:
    """All kernels of one model over a shared registry.

    Assembly is staged: directions acquire calibrated barrier data lazily,
    select_m fixes the subdivision depth, select_apex fixes the cone vertex,
    and assemble_all builds the per-index and global kernels.  Distinct
    kernels could be assembled concurrently once the data dict is complete,
    since from that point the registry is only read.
    """

    __slots__ = ("model", "reg", "k", "m", "apex", "sigmas", "data",
                 "bm_section", "bm_id", "K_I", "B_I", "K", "E", "R",
                 "_omega_cache", "_dbar_cache")

    def __init__(self, model, reg: BarrierRegistry):
        if reg.n != model.n:
            raise KernelError("registry arity does not match the model")
        self.model = model
        self.reg = reg
        self.k = model.k
        n = model.n
        self.bm_section = [Poly.generator(n, n + j) - Poly.generator(n, 3 * n + j)
                           for j in range(n)]
        phi_b = Poly.zero(n)
        for j in range(n):
            wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
            phi_b = phi_b + self.bm_section[j] * wj
        self.bm_id = reg.register(phi_b)
        self.sigmas = {}
        for ell in range(1, self.k + 1):
            for I in index_sets(self.k, ell):
                self.sigmas[I] = sigma_chain(I, self.k)
        self.data = {}
        self.m = None
        self.apex = None
        self.K_I = {}
        self.B_I = {}
        self.K = None
        self.E = None
        self.R = None
        self._omega_cache = {}
        self._dbar_cache = {}

    # ------------------------------------------------------------- barrier data

    def datum(self, a):
        a = tuple(Fraction(x) for x in a)
        got = self.data.get(a)
        if got is None:
            got = leray(self.model, a, self.reg)
            self.data[a] = got
        return got

    def leray_pair(self, a):
        d = self.datum(a)
        return (d.G, d.phi_id)

    # ------------------------------------------------------------- evaluation

    def _omega_simplex(self, s, with_b: bool) -> FormExpr:
        key = (s, with_b)
        got = self._omega_cache.get(key)
        if got is None:
            maps = [(self.bm_section, self.bm_id)] if with_b else []
            maps += [self.leray_pair(a) for a in s]
            got = koppelman(maps, self.reg)
            self._omega_cache[key] = got
        return got

    def omega(self, ch: Chain, with_b: bool) -> FormExpr:
        """Omega over a chain, extended linearly with integer weights."""
        out = FormExpr.zero(self.model.n, self.reg)
        for s, c in ch.terms.items():
            out = out + c * self._omega_simplex(s, with_b)
        return out

    def dbar_omega(self, ch: Chain, with_b: bool) -> FormExpr:
        """dbar of Omega over a chain, with the per-simplex results cached.

        Differentiating simplex by simplex keeps the inputs small and lets
        the identity checks share work: the same derivative shows up in
        several of them.
        """
        out = FormExpr.zero(self.model.n, self.reg)
        for s, c in ch.terms.items():
            key = (s, with_b)
            got = self._dbar_cache.get(key)
            if got is None:
                got = dbar(self._omega_simplex(s, with_b))
                self._dbar_cache[key] = got
            out = out + c * got
        return out

    # ------------------------------------------------------------- stage: depth

    def _depth_failure(self, m: int):
        """Reason string if depth m fails the span-intersection test, else None."""
        n = self.model.n
        need = self.model.q + self.model.k
        eye = [[CFrac(1) if i == j else CFrac(0) for j in range(n)]
               for i in range(n)]
        for ell in range(1, self.k + 1):
            for I in index_sets_prime(self.k, ell):
                ch = subdivide(self.sigmas[I], m)
                for s in ch.simplices():
                    stacked = []
                    for a in s:
                        try:
                            d = self.datum(a)
                        except LerayError as exc:
                            return f"m={m} {I} vertex {a}: {exc}"
                        for i in range(n):
                            stacked.append([eye[i][j] - d.P[i][j]
                                            for j in range(n)])
                    dim = n - matrix_rank_exact(stacked)
                    if dim < need:
                        return (f"m={m} {I} simplex {s}: common holomorphic "
                                f"span has dimension {dim} < {need}")
        return None

    def select_m(self, m_max: int = 4) -> int:
        """Smallest depth whose subdivided simplices share enough holomorphic
        directions, with the bidegree vanishing then asserted symbolically."""
        reasons = []
        for m in range(m_max + 1):
            why = self._depth_failure(m)
            if why is None:
                self.m = m
                self._assert_bidegree_vanishing()
                return m
            reasons.append(why)
        raise SubdivisionError(
            "no subdivision depth up to %d works: %s" % (m_max, "; ".join(reasons)))

    def _assert_bidegree_vanishing(self):
        n, k, q = self.model.n, self.model.k, self.model.q
        for ell in range(1, k + 1):
            for I in index_sets_prime(k, ell):
                om = self.omega(subdivide(self.sigmas[I], self.m), with_b=False)
                for r in range(n - k - q + 1, n + 1):
                    for s0 in range(n + 1):
                        if not om.bidegree_part(s0, r).is_zero():
                            raise KernelError(
                                f"type ({s0},{r}) piece of Omega over sd^{self.m}"
                                f" sigma_{I} does not vanish")

    # ------------------------------------------------------------- stage: apex

    def _apex_candidates(self):
        k = self.k
        prime = index_sets_prime(k, k)
        seen = set()

        def emit(pt):
            if pt not in seen:
                seen.add(pt)
                yield pt

        for I in prime:
            (s,) = self.sigmas[I].simplices()
            bary = tuple(sum(v[i] for v in s) / Fraction(k) for i in range(k))
            yield from emit(bary)
        for t in (2, 3, 4):
            w = Fraction(1, 2 ** t)
            for I in prime:
                (s,) = self.sigmas[I].simplices()
                bary = tuple(sum(v[i] for v in s) / Fraction(k) for i in range(k))
                for v in s:
                    pt = tuple((1 - w) * b + w * x for b, x in zip(bary, v))
                    yield from emit(pt)
        if k == 2:
            # weight ratios whose mixed spectral radius stays rational
            for p, q_ in ((3, 4), (4, 3), (5, 12), (12, 5), (8, 15), (15, 8)):
                lam = (Fraction(p, p + q_), Fraction(q_, p + q_))
                for I in prime:
                    (s,) = self.sigmas[I].simplices()
                    pt = tuple(lam[0] * a + lam[1] * b
                               for a, b in zip(s[0], s[1]))
                    yield from emit(pt)

    def select_apex(self, budget: int = 64):
        if self.m is None:
            raise KernelError("select_m (or a forced depth) must come first")
        tried = 0
        for nu in self._apex_candidates():
            tried += 1
            if tried > budget:
                break
            try:
                self.datum(nu)
            except LerayError:
                continue
            if apex_admissible(self, nu):
                self.apex = nu
                return nu
        raise ApexError(f"no admissible apex among {tried} candidates")

    # ------------------------------------------------------------- stage: forms

    def assemble_all(self):
        if self.m is None or self.apex is None:
            raise KernelError("depth and apex must be fixed before assembly")
        n = self.model.n
        for ell in range(1, self.k + 1):
            for I in index_sets(self.k, ell):
                sig = self.sigmas[I]
                KI = self.omega(sig, with_b=True)
                for i in range(self.m):
                    KI = KI - self.omega(prism(subdivide(sig, i)), with_b=False)
                self.K_I[I] = KI
        for ell in range(1, self.k + 1):
            for I in index_sets(self.k, ell):
                if ell == 1:
                    self.B_I[I] = self._omega_simplex((), with_b=True)
                    continue
                acc = FormExpr.zero(n, self.reg)
                for nu in range(1, ell + 1):
                    acc = acc + (1 if nu % 2 else -1) * self.K_I[I.drop(nu)]
                self.B_I[I] = acc
        K = FormExpr.zero(n, self.reg)
        E = FormExpr.zero(n, self.reg)
        R = FormExpr.zero(n, self.reg)
        for I in index_sets_prime(self.k, self.k):
            sig = self.sigmas[I]
            K = K + I.sgn * self.K_I[I]
            part = self.omega(cone(self.apex, sig), with_b=True)
            for i in range(self.m):
                part = part + self.omega(cone(self.apex, prism(subdivide(sig, i))),
                                         with_b=False)
            E = E + I.sgn * part
            R = R + I.sgn * self.omega(cone(self.apex, subdivide(sig, self.m)),
                                       with_b=False)
        self.K, self.E, self.R = K, E, R
        return self

    # ------------------------------------------------------------- output

    def to_text(self) -> str:
        def sort_key(I):
            return (len(I), I.elements)

        lines = []

        def put(title, form):
            lines.append(f"# kernel {title}")
            lines.append(form.to_text())
            lines.append("")

        for I in sorted(self.K_I, key=sort_key):
            put(f"K I={{{','.join(str(e) for e in I.elements)}}}", self.K_I[I])
        for I in sorted(self.B_I, key=sort_key):
            put(f"B I={{{','.join(str(e) for e in I.elements)}}}", self.B_I[I])
        put("K", self.K)
        put("E", self.E)
        put("R", self.R)
        return "\n".join(lines)


def apex_admissible(bundle: KernelBundle, nu) -> bool:
    """Every k-subset of [nu, tau] is linearly independent, for every
    top-grade simplex tau at the bundle's subdivision depth."""
    k = bundle.k
    nu = tuple(Fraction(x) for x in nu)
    for I in index_sets_prime(k, k):
        ch = subdivide(bundle.sigmas[I], bundle.m or 0)
        for s in ch.simplices():
            pts = (nu,) + s
            for sub in itertools.combinations(pts, k):
                if not independent(sub):
                    return False
    return True


def build_bundle(model, reg: BarrierRegistry, m: int | None = None,
                 apex=None, m_max: int = 4, apex_budget: int = 64) -> KernelBundle:
    """Assemble every kernel of the model, selecting depth and apex unless
    they are forced explicitly."""
    b = KernelBundle(model, reg)
    if m is None:
        b.select_m(m_max)
    else:
        if m < 0:
            raise KernelError("subdivision depth must be nonnegative")
        b.m = m
    if apex is None:
        b.select_apex(apex_budget)
    else:
        nu = tuple(Fraction(x) for x in apex)
        if not apex_admissible(b, nu):
            raise ApexError(f"forced apex {nu} fails the independence condition")
        b.datum(nu)
        b.apex = nu
    return b.assemble_all()


def assemble(bundle: KernelBundle, kind: str, I: IndexSet | None = None) -> FormExpr:
    """Accessor for one assembled kernel by kind."""
    if kind in ("K_I", "B_I"):
        if I is None:
            raise KernelError(f"kind {kind} needs an index set")
        table = bundle.K_I if kind == "K_I" else bundle.B_I
        try:
            return table[I]
        except KeyError:
            raise KernelError(f"no kernel stored for {I}") from None
    if kind == "K":
        return bundle.K
    if kind == "E":
        return bundle.E
    if kind == "R":
        return bundle.R
    raise KernelError(f"unknown kernel kind {kind!r}")


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


class SplitResidual:
    """A residual kept as separately checkable pieces.

    `parts[0]` is the bookkeeping difference between the aggregate residual
    and the per-index pieces; it must cancel term by stored term, so its
    zero test never clears denominators.  The remaining parts each involve
    only the barrier denominators of one index set, which keeps the exact
    clearing tractable.  The whole residual vanishes iff every part does.
    """

    __slots__ = ("parts",)

    def __init__(self, parts):
        self.parts = list(parts)

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.parts)

    @property
    def terms(self):
        merged: dict = {}
        for p in self.parts:
            for key, poly in p.terms.items():
                cur = merged.get(key)
                merged[key] = poly if cur is None else cur + poly
        return merged


def _two_seventeen_residual(bundle: "KernelBundle") -> SplitResidual:
    """Residual of: dbar E equals K minus R.

    The aggregate left-minus-right is regrouped into one closed identity
    per index set (its cone simplex plus the cone prisms), so every hard
    zero test clears only that instance's denominators.  What the
    regrouping leaves over is returned as the bookkeeping part; it cancels
    at the stored-term level exactly when the signed boundary chains
    telescope away, and `SplitResidual.is_zero` checks that too.
    """
    k = bundle.model.k
    pieces = []
    diff = bundle.R - bundle.K
    for J in index_sets_prime(k, k):
        sig = bundle.sigmas[J]
        cs = cone(bundle.apex, sig)
        extra = (bundle.omega(cs, with_b=False)
                 + bundle.omega(_boundary_with_device(cs), with_b=True))
        piece = bundle.dbar_omega(cs, with_b=True) + extra
        for i in range(bundle.m):
            cp = cone(bundle.apex, prism(subdivide(sig, i)))
            bnd = bundle.omega(boundary(cp), with_b=False)
            piece = piece + bundle.dbar_omega(cp, with_b=False) - bnd
            extra = extra - bnd
        pieces.append(piece)
        diff = diff - J.sgn * extra
    return SplitResidual([diff] + pieces)


def verify_identity(bundle: KernelBundle, name: str, I: IndexSet | None = None,
                    chain: Chain | None = None):
    """Left minus right of one structural identity, canonicalized.

    A zero return certifies the identity symbolically; callers assert.
    Most names return a FormExpr; "two_seventeen" returns a SplitResidual
    so its zero test can run per index set.
    """
    n, k, q = bundle.model.n, bundle.model.k, bundle.model.q
    if name == "koppelman_chain":
        if chain is None:
            raise KernelError("koppelman_chain needs an explicit chain")
        return bundle.dbar_omega(chain, with_b=False) - bundle.omega(
            boundary(chain), with_b=False)
    if name == "two_seventeen":
        return _two_seventeen_residual(bundle)
    if I is None:
        raise KernelError(f"identity {name} needs an index set")
    sig = bundle.sigmas[I]
    if name == "two_two":
        return (bundle.dbar_omega(sig, with_b=True)
                + bundle.omega(sig, with_b=False)
                + bundle.omega(_boundary_with_device(sig), with_b=True))
    if name == "two_three":
        res = bundle.omega(sig, with_b=False) - bundle.omega(
            subdivide(sig, bundle.m), with_b=False)
        for i in range(bundle.m):
            res = res + bundle.dbar_omega(prism(subdivide(sig, i)), with_b=False)
            res = res + bundle.omega(prism(subdivide(boundary(sig), i)),
                                     with_b=False)
        return res
    if name == "lemma23i":
        res = (bundle.dbar_omega(sig, with_b=True) - bundle.B_I[I]
               + bundle.omega(subdivide(sig, bundle.m), with_b=False))
        for i in range(bundle.m):
            res = res - bundle.dbar_omega(prism(subdivide(sig, i)), with_b=False)
        return res
    if name == "lemma22i":
        om = bundle.omega(subdivide(sig, bundle.m), with_b=False)
        acc = FormExpr.zero(n, bundle.reg)
        for r in range(n - k - q + 1, n + 1):
            for s0 in range(n + 1):
                acc = acc + om.bidegree_part(s0, r)
        return acc
    if name == "lemma22ii":
        om = bundle.omega(subdivide(sig, bundle.m), with_b=False)
        acc = FormExpr.zero(n, bundle.reg)
        for r in range(n - k - q + 1, n + 1):
            for s0 in range(n + 1):
                acc = acc + dbar(om.bidegree_part(s0, r - 1), slot="z")
        return acc
    raise KernelError(f"unknown identity {name!r}")


# ---------------------------------------------------------------------------
# solution kernels
# ---------------------------------------------------------------------------


class SolutionKernel:
    """One homogeneity piece of R, oriented and possibly argument-swapped."""

    __slots__ = ("r", "expr", "orientation_sign", "swapped")

    def __init__(self, r, expr, orientation_sign, swapped):
        self.r = r
        self.expr = expr
        self.orientation_sign = orientation_sign
        self.swapped = swapped

    def __repr__(self):
        tag = "swapped" if self.swapped else "direct"
        return f"SolutionKernel(r={self.r}, sign={self.orientation_sign}, {tag})"


def extract_solution_kernel(bundle: KernelBundle, r: int) -> SolutionKernel:
    """The degree-r solving kernel, including its orientation sign."""
    n, k, q = bundle.model.n, bundle.model.k, bundle.model.q
    sign = -1 if (r * (k + 1)) % 2 else 1
    if n - k - q <= r <= n - k:
        expr = sign * bundle.R.bidegree_part(0, r)
        return SolutionKernel(r, expr, sign, False)
    if 0 <= r <= q - 1:
        expr = sign * bundle.R.bidegree_part(n, n - k - 1 - r).swap_slots()
        return SolutionKernel(r, expr, sign, True)
    raise ValueError(
        f"degree {r} outside [0,{q - 1}] and [{n - k - q},{n - k}]")
