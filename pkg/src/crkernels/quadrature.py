"""Monte Carlo probes for the assembled kernels on a graph patch.

The symbolic layer certifies identities between rational double forms.
This module asks the complementary question: do those forms behave like
the singular integral kernels they are supposed to be?  Everything runs
on one graph chart of the model manifold around its base point.  The
chart solves the defining functions for the normal real parts, which the
quadric models make linear, so embedded points satisfy the equations to
machine rounding and the chart Jacobian is available in closed form.

Integrals are estimated by mixture importance sampling: a bulk ball, a
stack of dyadic shells around each singular point, and a small core ball
with a radially weighted draw that keeps the estimator variance finite
against the strongest integrable singularities.  Allocation, seeding,
and the reduction order are fixed by the SamplePlan, so every estimate
is reproducible bit for bit.

Kernel evaluation is double routed.  The fast route compiles a FormExpr
into monomial tables of the moving variable and turns each batch into
matrix products; the slow route is FormExpr.evaluate at single points.
Probes cross-check the two on a handful of points before trusting the
fast one.
"""

import itertools
import math

import numpy as np

from .polyform import FormExpr


_CHUNK = 8192
_SCHEME = "philox/chunk8k/pairwise"
_NODE_BATCH = 8

# Normalization of the reproducing identity, one constant per ambient
# dimension and codimension.  Measured once with measure_normalization on
# bump data (interior points, both the degree-zero recovery route and the
# top-degree derivative route, agreeing to Monte Carlo error), then
# snapped to the closed form 1/(2*pi*i)**n that the measurements single
# out.  The homotopy check is meaningful only because this value is not
# refitted per run.
HOMOTOPY_NORMALIZATION = {(3, 1): 1j / (8 * math.pi ** 3)}


class QuadratureError(Exception):
    """Geometry, plan, or evaluator contract violated."""


class ToleranceError(QuadratureError):
    """Standard error above the requested tolerance at full sample budget."""


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _ball_volume(d: int, r: float) -> float:
    return _sphere_area(d) / d * r ** d


def _pairwise_sum(parts):
    """Fixed-shape pairwise reduction; order independent of chunk arrival."""
    items = list(parts)
    if not items:
        return 0.0
    while len(items) > 1:
        items = [sum(items[i:i + 2]) for i in range(0, len(items), 2)]
    return items[0]


# ---------------------------------------------------------------------------
# patch
# ---------------------------------------------------------------------------


class Patch:
    """Graph chart of the model manifold around its base point.

    Chart variables are the real and imaginary parts of the tangential
    complex coordinates followed by the imaginary parts of the normal
    ones; the normal real parts are solved from the defining functions.
    The sampling domain is the chart ball of radius `cutoff`, which sits
    inside the box [-cutoff, cutoff]^dim required of test-form supports.
    Embedded points stay well inside the ball where the barrier
    inequalities were calibrated.

    The orientation sign pins the chart's dt-order against the boundary
    orientation of the positive side of the defining function, with the
    outward normal leading, matching how the jump construction orients
    the manifold piece.
    """

    def __init__(self, model, cutoff=0.1):
        if model.k != 1:
            raise QuadratureError(
                "numeric patches are wired for hypersurface-type models only")
        self.model = model
        self.n = int(model.n)
        self.k = 1
        self.dim = 2 * self.n - 1
        self.cutoff = float(cutoff)
        if not 0 < self.cutoff <= 0.1:
            raise QuadratureError(
                "cutoff must sit in (0, 0.1] so embedded points stay inside "
                "the calibrated barrier ball")
        if any(complex(v) != 0 for v in model.base_point):
            raise QuadratureError("graph charts are centered at the origin")
        rho = model.rho_hat[0]
        self._rho = rho
        n = self.n
        self._dw = [rho.derivative(j) for j in range(n)]
        self._dcw = [rho.derivative(n + j) for j in range(n)]
        lead = list(self._dw[n - 1].terms())
        if (len(lead) != 1 or any(lead[0][0])
                or complex(lead[0][1]) != 1.0):
            raise QuadratureError(
                "defining function is not monic linear in the last normal "
                "coordinate; no graph solve available")
        for p in (self._dw[n - 1], self._dcw[n - 1]):
            for g in range(4 * n):
                if not p.derivative(g).is_zero():
                    raise QuadratureError(
                        "normal coordinate enters the defining function "
                        "nonlinearly")
        self.orientation_sign = self._orientation()

    # -- embedding ---------------------------------------------------------

    def _zcols(self, t):
        t = np.asarray(t, dtype=float)
        squeeze = t.ndim == 1
        if squeeze:
            t = t[None, :]
        if t.shape[-1] != self.dim:
            raise QuadratureError(f"chart points need {self.dim} coordinates")
        n = self.n
        cols = [t[:, 2 * j] + 1j * t[:, 2 * j + 1] for j in range(n - 1)]
        y = t[:, self.dim - 1]
        zeros = [np.zeros_like(y, dtype=complex) for _ in range(n)]
        probe = cols + [1j * y]
        h = self._rho.evaluate(probe, zeros)
        x = -0.5 * np.real(h)
        cols.append(x + 1j * y)
        return cols, squeeze

    def embed(self, t):
        """Complex ambient points for chart points, shape (N, n)."""
        cols, squeeze = self._zcols(t)
        out = np.stack(cols, axis=-1)
        return out[0] if squeeze else out

    def residuals(self, t):
        """|rho| at the embedded points; the chart solve keeps it at rounding."""
        cols, squeeze = self._zcols(t)
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        vals = np.abs(np.stack([p.evaluate(cols, zeros)
                                for p in self.model.rho_hat], axis=-1))
        return vals[0] if squeeze else vals

    def _h_gradient(self, cols):
        """Real chart gradient of the solved height, shape (N, dim)."""
        n = self.n
        zeros = [np.zeros_like(cols[0]) for _ in range(n)]
        grad = np.zeros((cols[0].shape[0], self.dim), dtype=float)
        for j in range(n - 1):
            dw = self._dw[j].evaluate(cols, zeros)
            dcw = self._dcw[j].evaluate(cols, zeros)
            grad[:, 2 * j] = np.real(dw + dcw)
            grad[:, 2 * j + 1] = np.real(1j * (dw - dcw))
        return grad

    def jacobian(self, t):
        """d(embedding)/d(chart), complex rows per ambient coordinate.

        Shape (N, n, dim).  Tangential rows are constant; the normal row
        couples through the solved height.
        """
        cols, squeeze = self._zcols(t)
        count = cols[0].shape[0]
        n = self.n
        rows = np.zeros((count, n, self.dim), dtype=complex)
        for j in range(n - 1):
            rows[:, j, 2 * j] = 1.0
            rows[:, j, 2 * j + 1] = 1j
        rows[:, n - 1, :] = -0.5 * self._h_gradient(cols)
        rows[:, n - 1, self.dim - 1] += 1j
        return rows[0] if squeeze else rows

    def jacobian_rank(self, t):
        """Minimum real rank of the chart differential over the batch."""
        rows = np.atleast_3d(self.jacobian(t))
        real = np.concatenate([rows.real, rows.imag], axis=1)
        sv = np.linalg.svd(real, compute_uv=False)
        ranks = (sv > 1e-9 * sv[:, :1]).sum(axis=1)
        return int(ranks.min())

    def contains(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return np.linalg.norm(t, axis=-1) <= self.cutoff

    # -- tangential complex structure ---------------------------------------

    def frame_coefficients(self, t):
        """Normal-slot weights of the antiholomorphic tangent frame.

        The frame vector over tangential index j is d/d(conj w_j) plus
        c_j times d/d(conj w_n); tangency to the manifold forces
        c_j = -(d rho / d conj w_j).  Shape (N, n-1).
        """
        cols, squeeze = self._zcols(t)
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        c = np.stack([-self._dcw[j].evaluate(cols, zeros)
                      for j in range(self.n - 1)], axis=-1)
        return c[0] if squeeze else c

    def frame_vectors(self, t):
        """Chart components of the frame, shape (N, n-1, dim) complex.

        Directional derivatives along row j of the returned array, taken
        of any ambient function composed with the embedding, agree with
        the frame derivative of that function on the manifold.  For
        quadric models the frame commutes (the mixed conjugate Hessian of
        the height is symmetric), so no bracket corrections are needed
        downstream.
        """
        c = np.atleast_2d(self.frame_coefficients(t))
        count = c.shape[0]
        vec = np.zeros((count, self.n - 1, self.dim), dtype=complex)
        for j in range(self.n - 1):
            vec[:, j, 2 * j] = 0.5
            vec[:, j, 2 * j + 1] = 0.5j
            vec[:, j, self.dim - 1] = 0.5j * c[:, j]
        return vec

    def frame_pairings(self, t):
        """dz-bar values on the frame: (N, n, n-1) complex array."""
        c = np.atleast_2d(self.frame_coefficients(t))
        count = c.shape[0]
        pair = np.zeros((count, self.n, self.n - 1), dtype=complex)
        for j in range(self.n - 1):
            pair[:, j, j] = 1.0
        pair[:, self.n - 1, :] = c
        return pair

    def dbar_weights(self):
        """Wirtinger weights of the chart projection, shape (n, dim).

        Chart functions extend to the ambient space as cylinders over the
        projection (x', y', y_n); the weights turn chart gradients into
        ambient conj-z derivatives of that extension.
        """
        w = np.zeros((self.n, self.dim), dtype=complex)
        for j in range(self.n - 1):
            w[j, 2 * j] = 0.5
            w[j, 2 * j + 1] = 0.5j
        w[self.n - 1, self.dim - 1] = 0.5j
        return w

    def drift_covector(self, t):
        """Linear tilt of the singular strip around one chart point.

        The barrier denominators vanish to second order only along a
        strip whose normal-coordinate center moves linearly with the
        tangential offset; for a quadric the imaginary part of the
        leading barrier term is exactly the normal offset plus this
        linear form.  Returns the real covector ell with strip center
        y = ell . (tangential offset); the wedge strata follow it.
        """
        t = np.asarray(t, dtype=float)
        cols, _ = self._zcols(t[None, :])
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        ell = np.zeros(self.dim - 1)
        for j in range(self.n - 1):
            c = complex(self._dw[j].evaluate(cols, zeros)[0])
            ell[2 * j] = -c.imag
            ell[2 * j + 1] = -c.real
        return ell

    def dbar_rho_components(self, t):
        """Ambient conj-z coefficients of d-bar of the defining function."""
        cols, squeeze = self._zcols(t)
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        vals = np.stack([self._dcw[j].evaluate(cols, zeros)
                         for j in range(self.n)], axis=-1)
        return vals[0] if squeeze else vals

    def rho_values(self, t):
        cols, squeeze = self._zcols(t)
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        vals = np.real(self._rho.evaluate(cols, zeros))
        return vals[0] if squeeze else vals

    # -- orientation ---------------------------------------------------------

    def _orientation(self):
        center = np.zeros(self.dim)
        cols, _ = self._zcols(center)
        zeros = [np.zeros_like(cols[0]) for _ in range(self.n)]
        grad = np.zeros(2 * self.n)
        for j in range(self.n):
            dw = complex(self._dw[j].evaluate(cols, zeros)[0])
            dcw = complex(self._dcw[j].evaluate(cols, zeros)[0])
            grad[2 * j] = (dw + dcw).real
            grad[2 * j + 1] = (1j * (dw - dcw)).real
        rows = self.jacobian(center)
        frame = np.zeros((2 * self.n, 2 * self.n))
        frame[:, 0] = -grad
        for i in range(self.dim):
            col = rows[:, i]
            frame[0::2, i + 1] = col.real
            frame[1::2, i + 1] = col.imag
        det = np.linalg.det(frame)
        if abs(det) < 1e-12:
            raise QuadratureError("degenerate chart frame at the base point")
        return 1 if det > 0 else -1


# ---------------------------------------------------------------------------
# sampling plans and strata
# ---------------------------------------------------------------------------


class SamplePlan:
    """Budget, stratification, seed, and reduction scheme of one probe.

    `fractions` allocates the total: the first entry to the bulk region,
    the last to the core ball around each singular point, the rest to
    dyadic shells in between.  They must sum to one.  The scheme string
    names the deterministic evaluation order (Philox streams per stratum,
    fixed chunk size, pairwise partial reduction); it is stored so report
    files carry their own reproducibility contract.
    """

    __slots__ = ("total", "fractions", "seed", "scheme")

    def __init__(self, total, fractions=None, seed=0, scheme=_SCHEME):
        self.total = int(total)
        if self.total <= 0:
            raise QuadratureError("sample total must be positive")
        if fractions is None:
            fractions = (0.28,) + (0.08,) * 8 + (0.08,)
        self.fractions = tuple(float(f) for f in fractions)
        if len(self.fractions) < 3:
            raise QuadratureError("need bulk, at least one shell, and a core")
        if any(f <= 0 for f in self.fractions):
            raise QuadratureError("stratum fractions must be positive")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise QuadratureError("stratum fractions must sum to one")
        self.seed = int(seed)
        if scheme != _SCHEME:
            raise QuadratureError(f"unknown reduction scheme {scheme!r}")
        self.scheme = scheme

    @property
    def shells(self):
        return len(self.fractions) - 2

    def __repr__(self):
        return (f"SamplePlan(total={self.total}, shells={self.shells}, "
                f"seed={self.seed}, scheme={self.scheme!r})")


class _Stratum:
    """One mixture component: geometry, allocation, and exact density.

    Kinds: "ball" and "shell" are uniform over the region; "core" draws
    the radius so density grows like r**-2 toward the center; "wedge" is
    adapted to the parabolic anisotropy of the kernel singularities on a
    hypersurface graph: the tangential block is drawn radially uniform on
    spheres (density ~ s**(1-dim)) and the normal offset y with density
    proportional to 1/(s**2 + |y|) up to the cap.  Near the singular
    point the barrier denominators shrink like s**2 + |y|, and the wedge
    density matches that, which is what keeps the estimator variance of
    the kernel integrands finite.  Every kind has a closed-form density,
    so the mixture weights are exact.
    """

    __slots__ = ("kind", "center", "inner", "outer", "ycap", "drift", "frac",
                 "count")

    def __init__(self, kind, center, inner, outer, frac, count, ycap=0.0,
                 drift=None):
        self.kind = kind
        self.center = np.asarray(center, dtype=float)
        self.inner = float(inner)
        self.outer = float(outer)
        self.ycap = float(ycap)
        if drift is None and kind == "wedge":
            drift = np.zeros(self.center.size - 1)
        self.drift = drift
        self.frac = float(frac)
        self.count = int(count)

    @property
    def paired(self):
        return self.kind != "ball"

    def sample(self, rng, count):
        d = self.center.size
        if self.kind == "wedge":
            dp = d - 1
            half = count // 2
            s = rng.uniform(self.inner, self.outer, half)
            direction = rng.standard_normal((half, dp))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            u = rng.random(half)
            s_safe = np.maximum(s, 1e-12)
            mag = s_safe ** 2 * np.expm1(
                u * np.log1p(self.ycap / s_safe ** 2))
            tang = direction * s[:, None]
            y = tang @ self.drift + mag
            out = np.empty((count, d))
            out[0::2, :dp] = tang
            out[1::2, :dp] = -tang
            out[0::2, dp] = y
            out[1::2, dp] = -y
            return self.center + out
        half = count // 2 if self.paired else count
        direction = rng.standard_normal((half, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        u = rng.random(half)
        if self.kind == "ball":
            r = self.outer * u ** (1.0 / d)
            return self.center + direction * r[:, None]
        if self.kind == "shell":
            lo, hi = self.inner ** d, self.outer ** d
            r = (lo + u * (hi - lo)) ** (1.0 / d)
        else:
            r = self.outer * u ** (1.0 / 3.0)
        off = direction * r[:, None]
        out = np.empty((count, d))
        out[0::2] = off
        out[1::2] = -off
        return self.center + out

    def density(self, t):
        d = self.center.size
        if self.kind == "wedge":
            dp = d - 1
            diff = t - self.center
            s = np.linalg.norm(diff[:, :dp], axis=1)
            y = np.abs(diff[:, dp] - diff[:, :dp] @ self.drift)
            ok = (s > self.inner) & (s <= self.outer) & (y <= self.ycap)
            s_safe = np.maximum(s, 1e-300)
            norm = (2.0 * (self.outer - self.inner) * _sphere_area(dp)
                    * s_safe ** (dp - 1)
                    * np.log1p(self.ycap / s_safe ** 2)
                    * (s_safe ** 2 + y))
            return np.where(ok, 1.0 / norm, 0.0)
        r = np.linalg.norm(t - self.center, axis=1)
        if self.kind == "ball":
            vol = _ball_volume(d, self.outer)
            return np.where(r <= self.outer, 1.0 / vol, 0.0)
        if self.kind == "shell":
            vol = _ball_volume(d, self.outer) - _ball_volume(d, self.inner)
            ok = (r >= self.inner) & (r <= self.outer)
            return np.where(ok, 1.0 / vol, 0.0)
        area = _sphere_area(d)
        safe = np.maximum(r, 1e-300)
        dens = 3.0 / (area * self.outer ** 3 * safe ** (d - 3))
        return np.where(r <= self.outer, dens, 0.0)


def _singular_strata(plan, centers, eps0, bulk=None, drifts=None):
    """Shell, core, and wedge strata at each center, plus optional bulk.

    `bulk` is (center, radius) or None.  Each shell and core allocation
    from the plan is split between the isotropic family and the wedge
    family matched to the parabolic singularity scaling, then divided
    evenly across the singular centers.  Without a bulk region the bulk
    fraction is folded into the shells so the fractions still sum to one.
    `drifts` optionally gives one tangential covector per center; the
    wedge strata then follow the tilted strip where the denominator of
    the kernel actually degenerates instead of the flat slab.
    """
    fracs = list(plan.fractions)
    shells = plan.shells
    share = 1.0 / max(len(centers), 1)
    if drifts is None:
        drifts = [None] * len(centers)
    strata = []
    if bulk is not None:
        strata.append(_Stratum("ball", bulk[0], 0.0, bulk[1], fracs[0], 0))
        shell_fracs = fracs[1:-1]
    else:
        boost = fracs[0] / shells
        shell_fracs = [f + boost for f in fracs[1:-1]]
    ycap = eps0 ** 2
    for center, drift in zip(centers, drifts):
        for j in range(shells):
            lo = eps0 * 2.0 ** (-j - 1)
            hi = eps0 * 2.0 ** (-j)
            half = 0.5 * shell_fracs[j] * share
            strata.append(_Stratum("shell", center, lo, hi, half, 0))
            strata.append(_Stratum("wedge", center, lo, hi, half, 0,
                                   ycap=ycap, drift=drift))
        lo = eps0 * 2.0 ** (-shells)
        half = 0.5 * fracs[-1] * share
        strata.append(_Stratum("core", center, 0.0, lo, half, 0))
        strata.append(_Stratum("wedge", center, 0.0, lo, half, 0, ycap=ycap,
                               drift=drift))
    total = sum(s.frac for s in strata)
    for s in strata:
        s.frac /= total
    assigned = 0
    for s in strata[:-1]:
        s.count = max(1, int(round(s.frac * plan.total)))
        if s.paired:
            s.count += s.count % 2
        assigned += s.count
    strata[-1].count = max(2, plan.total - assigned)
    if strata[-1].paired:
        strata[-1].count += strata[-1].count % 2
    norm = sum(s.count for s in strata)
    for s in strata:
        s.frac = s.count / norm
    return strata


def _run_mixture(plan, strata, integrand, chunk=_CHUNK, detail=None):
    """Mixture importance-sampled estimates of a dict-valued integrand.

    `integrand(t)` maps a chunk of points (N, dim) to {key: complex (N,)}.
    Returns ({key: estimate}, {key: stderr}, total samples).  Estimates
    combine per-stratum means of g / mixture-density with the allocation
    weights; partial sums reduce pairwise in fixed chunk order.  Passing
    a dict as `detail` fills it with per-stratum (weighted mean, variance
    share, count) triples keyed by (integrand key, stratum index), which
    the variance-budget tests read.
    """
    sums: dict = {}
    sqs: dict = {}
    for idx, stratum in enumerate(strata):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence((plan.seed, idx))))
        step = chunk - chunk % 2 if stratum.paired else chunk
        done = 0
        while done < stratum.count:
            take = min(step, stratum.count - done)
            t = stratum.sample(rng, take)
            dens = np.zeros(take)
            for s in strata:
                dens += s.frac * s.density(t)
            vals = integrand(t)
            for key, g in vals.items():
                h = g / dens
                if stratum.paired:
                    h = h.reshape(-1, 2).mean(axis=1)
                sums.setdefault(key, {}).setdefault(idx, []).append(
                    np.sum(h, dtype=complex))
                sqs.setdefault(key, {}).setdefault(idx, []).append(
                    float(np.sum(np.abs(h) ** 2)))
            done += take
    est: dict = {}
    se: dict = {}
    for key in sums:
        total = 0j
        var = 0.0
        for idx, stratum in enumerate(strata):
            n_s = stratum.count // 2 if stratum.paired else stratum.count
            mean = _pairwise_sum(sums[key].get(idx, [])) / n_s
            m2 = _pairwise_sum(sqs[key].get(idx, [])) / n_s
            total += stratum.frac * mean
            spread = max(m2 - abs(mean) ** 2, 0.0)
            share = stratum.frac ** 2 * spread / n_s
            var += share
            if detail is not None:
                detail[(key, idx)] = (stratum.frac * mean, share, n_s)
        est[key] = complex(total)
        se[key] = math.sqrt(var)
    return est, se, sum(s.count for s in strata)


# ---------------------------------------------------------------------------
# compiled kernel evaluation
# ---------------------------------------------------------------------------


class CompiledForm:
    """Batched evaluator for a rational kernel form with one slot moving.

    Construction factors every numerator and denominator monomial into a
    moving part (indexed in a shared monomial table) and a fixed-slot
    part (collapsed to a scalar when the fixed point is bound).  A batch
    then costs one matrix product per bound point.  This is the fast
    route; `crosscheck` compares it against the pointwise FormExpr
    evaluation route on supplied points and refuses to continue on
    disagreement, so the two implementations guard each other.
    """

    def __init__(self, expr: FormExpr, fixed="z"):
        if fixed not in ("z", "zeta"):
            raise QuadratureError("fixed slot must be 'z' or 'zeta'")
        self.expr = expr
        self.n = expr.n
        self.fixed = fixed
        n = self.n
        if fixed == "z":
            self._vary_lanes = list(range(0, 2 * n))
            self._fixed_lanes = list(range(2 * n, 4 * n))
        else:
            self._vary_lanes = list(range(2 * n, 4 * n))
            self._fixed_lanes = list(range(0, 2 * n))
        self._mono_index: dict = {}
        self._polys = []
        self._poly_ids: dict = {}
        self._terms = []
        for (mask, den), num in sorted(expr.terms.items(),
                                       key=lambda kv: (kv[0][0], kv[0][1])):
            if num.is_zero():
                continue
            num_id = self._add_poly(num)
            den_ids = tuple((self._add_poly(expr.reg.poly(bid)), e)
                            for bid, e in den)
            self._terms.append((mask, num_id, den_ids))
        self.n_polys = len(self._polys)
        self.n_monos = len(self._mono_index)

    def _add_poly(self, poly):
        key = id(poly)
        got = self._poly_ids.get(key)
        if got is not None:
            return got
        entries = []
        for exps, c in poly.terms():
            vary = tuple(exps[g] for g in self._vary_lanes)
            row = self._mono_index.setdefault(vary, len(self._mono_index))
            fixed = tuple((g, exps[g]) for g in self._fixed_lanes if exps[g])
            entries.append((row, fixed, complex(c)))
        pid = len(self._polys)
        self._polys.append(entries)
        self._poly_ids[key] = pid
        return pid

    # -- batched route -------------------------------------------------------

    def _lane_values(self, cols, lanes):
        n = self.n
        out = {}
        for g in lanes:
            base = g % (2 * n)
            j = base % n
            val = cols[j]
            if base >= n:
                val = np.conj(val)
            out[g] = val
        return out

    def context(self, vary_cols):
        """Monomial table of the moving slot for one batch of points."""
        count = np.broadcast(*[np.asarray(c) for c in vary_cols]).shape
        count = count[0] if count else 1
        lanes = self._lane_values(vary_cols, self._vary_lanes)
        table = np.ones((self.n_monos, count), dtype=complex)
        rows = np.array(list(self._mono_index.keys()), dtype=np.int64)
        if rows.size == 0:
            return table
        for pos, g in enumerate(self._vary_lanes):
            exps = rows[:, pos]
            for e in np.unique(exps):
                if e == 0:
                    continue
                sel = exps == e
                table[sel] *= lanes[g][None, :] ** int(e)
        return table

    def bind(self, fixed_cols):
        """Scalar-weight matrix for one bound point of the fixed slot."""
        lanes = {g: complex(v) for g, v in
                 self._lane_values(fixed_cols, self._fixed_lanes).items()}
        B = np.zeros((self.n_polys, self.n_monos), dtype=complex)
        for pid, entries in enumerate(self._polys):
            for row, fixed, c in entries:
                w = c
                for g, e in fixed:
                    w *= lanes[g] ** e
                B[pid, row] += w
        return B

    def coefficients(self, poly_values):
        """Per-wedge-monomial coefficient arrays from batched poly values."""
        out: dict = {}
        for mask, num_id, den_ids in self._terms:
            v = poly_values[num_id].copy()
            for pid, e in den_ids:
                v /= poly_values[pid] ** e
            if mask in out:
                out[mask] += v
            else:
                out[mask] = v
        return out

    # -- pointwise route and the guard ---------------------------------------

    def crosscheck(self, zeta_points, z_points, tol=1e-10):
        """Compare the batched route against FormExpr.evaluate pointwise."""
        for zeta, z in zip(zeta_points, z_points):
            slow = self.expr.evaluate(tuple(zeta), tuple(z))
            if self.fixed == "z":
                ctx = self.context([np.array([c]) for c in zeta])
                B = self.bind(list(z))
            else:
                ctx = self.context([np.array([c]) for c in z])
                B = self.bind(list(zeta))
            vals = B @ ctx
            fast = self.coefficients(vals)
            scale = max(slow.norm, 1e-30)
            for mask in set(slow.coeffs) | set(fast):
                a = complex(slow.coeffs.get(mask, 0.0))
                b = complex(fast[mask][0]) if mask in fast else 0.0
                if abs(a - b) > tol * max(scale, abs(a), abs(b)):
                    raise QuadratureError(
                        f"evaluator routes disagree on mask {mask:#x}: "
                        f"{a!r} vs {b!r}")
        return True


def _crosscheck_points(patch, count=3, seed=7):
    """Deterministic generic chart point pairs for evaluator guards."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    pts = []
    for _ in range(count):
        a = rng.uniform(-0.6, 0.6, patch.dim) * patch.cutoff
        b = rng.uniform(-0.6, 0.6, patch.dim) * patch.cutoff
        pts.append((patch.embed(a), patch.embed(b)))
    zetas = [p[0] for p in pts]
    zs = [p[1] for p in pts]
    return zetas, zs


# ---------------------------------------------------------------------------
# test forms
# ---------------------------------------------------------------------------


def _bump(s2):
    """Smooth cutoff of the squared relative radius, 1 at 0, flat zero at 1."""
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    u = s2[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u))
    return out


def _bump_ds2(s2):
    """Derivative of the cutoff with respect to the squared radius."""
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    u = s2[inside]
    out[inside] = -np.exp(1.0 - 1.0 / (1.0 - u)) / (1.0 - u) ** 2
    return out


class BumpForm:
    """Compactly supported (0, r) form with polynomial-times-bump entries.

    Components map strictly increasing tuples of conjugate-coordinate
    indices to polynomials in the chart variables, given as {exponent
    tuple: complex coefficient}.  Every coefficient function is the
    polynomial times a bump in the chart distance from `center`, extended
    to the ambient space as a cylinder over the chart projection.  That
    extension keeps the ambient d-bar in closed form, which is what the
    extension-independence and homotopy checks lean on.
    """

    def __init__(self, patch, r, center, radius, components):
        self.patch = patch
        self.n = patch.n
        self.r = int(r)
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.center.size != patch.dim:
            raise QuadratureError("test form center must be a chart point")
        if self.radius <= 0:
            raise QuadratureError("test form radius must be positive")
        if np.linalg.norm(self.center) + self.radius >= patch.cutoff:
            raise QuadratureError(
                "test form support must sit strictly inside the patch box")
        self.components = {}
        for key, poly in components.items():
            key = tuple(int(i) for i in key)
            if len(key) != self.r or sorted(set(key)) != list(key):
                raise QuadratureError(f"bad component index tuple {key}")
            if any(not 0 <= i < self.n for i in key):
                raise QuadratureError(f"component index out of range in {key}")
            self.components[key] = {tuple(int(e) for e in exps): complex(c)
                                    for exps, c in poly.items()}

    def scaled(self, factor):
        comps = {key: {e: factor * c for e, c in poly.items()}
                 for key, poly in self.components.items()}
        return BumpForm(self.patch, self.r, self.center, self.radius, comps)

    def _poly_eval(self, poly, t):
        acc = np.zeros(t.shape[0], dtype=complex)
        for exps, c in poly.items():
            term = np.full(t.shape[0], c)
            for i, e in enumerate(exps):
                if e:
                    term *= t[:, i] ** e
            acc += term
        return acc

    def _poly_grad(self, poly, t, i):
        acc = np.zeros(t.shape[0], dtype=complex)
        for exps, c in poly.items():
            e = exps[i] if i < len(exps) else 0
            if not e:
                continue
            term = np.full(t.shape[0], c * e)
            for j, ej in enumerate(exps):
                p = ej - 1 if j == i else ej
                if p:
                    term *= t[:, j] ** p
            acc += term
        return acc

    def _s2(self, t):
        d = t - self.center[None, :]
        return np.sum(d * d, axis=1) / self.radius ** 2

    def values(self, t):
        """Component arrays at chart points, {index tuple: (N,) complex}."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        psi = _bump(self._s2(t))
        return {key: self._poly_eval(poly, t) * psi
                for key, poly in self.components.items()}

    def component_gradients(self, t):
        """Chart gradients of every coefficient function, closed form."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        s2 = self._s2(t)
        psi = _bump(s2)
        dpsi = _bump_ds2(s2)
        out = {}
        for key, poly in self.components.items():
            p = self._poly_eval(poly, t)
            grads = np.zeros((t.shape[0], self.patch.dim), dtype=complex)
            for i in range(self.patch.dim):
                radial = 2.0 * (t[:, i] - self.center[i]) / self.radius ** 2
                grads[:, i] = (self._poly_grad(poly, t, i) * psi
                               + p * dpsi * radial)
            out[key] = grads
        return out

    def ambient_dbar(self):
        """The ambient d-bar as an evaluator of the same duck type."""
        return _AmbientDbar(self)


def _wedge_insert(j, key):
    """Insert index j into an increasing tuple; (sign, tuple) or None."""
    if j in key:
        return None
    pos = 0
    while pos < len(key) and key[pos] < j:
        pos += 1
    sign = -1 if pos % 2 else 1
    return sign, key[:pos] + (j,) + key[pos:]


class _AmbientDbar:
    """Closed-form ambient d-bar of a BumpForm, evaluated on the chart."""

    def __init__(self, form):
        self.form = form
        self.patch = form.patch
        self.n = form.n
        self.r = form.r + 1
        self.center = form.center
        self.radius = form.radius

    def values(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        grads = self.form.component_gradients(t)
        weights = self.patch.dbar_weights()
        out: dict = {}
        for key, grad in grads.items():
            for j in range(self.n):
                ins = _wedge_insert(j, key)
                if ins is None:
                    continue
                sign, new_key = ins
                contrib = sign * (grad @ weights[j])
                if new_key in out:
                    out[new_key] += contrib
                else:
                    out[new_key] = contrib.copy()
        return out


# ---------------------------------------------------------------------------
# pullbacks and norms
# ---------------------------------------------------------------------------


def _zeta_rows(jac, conj_jac, bits):
    return [jac[:, b, :] if b < jac.shape[1] else conj_jac[:, b - jac.shape[1], :]
            for b in bits]


def _mask_bits(mask, lo, hi):
    return [b - lo for b in range(lo, hi) if mask >> b & 1]


def _full_det(rows):
    return np.linalg.det(np.stack(rows, axis=1))


def _minor_dets(rows, dim):
    """Determinant arrays of all column minors matching the row count."""
    stack = np.stack(rows, axis=1)
    deg = stack.shape[1]
    out = {}
    for subset in itertools.combinations(range(dim), deg):
        out[subset] = np.linalg.det(stack[:, :, subset])
    return out


def _patch_norm(coeffs, jac, conj_jac, n, dim, pull):
    """Max pulled-back coefficient magnitude per sample.

    The integration slot's covectors are pulled through the chart; the
    other slot's stay ambient.  This is the chart-coordinate companion of
    the symbolic layer's max-coefficient norm, equivalent to the metric
    norm up to chart-uniform constants, which is all exponent fits need.
    """
    values: dict = {}
    minor_cache: dict = {}
    for mask, coeff in coeffs.items():
        if pull == "zeta":
            pulled = _mask_bits(mask, 0, 2 * n)
            kept = mask >> (2 * n)
        else:
            pulled = _mask_bits(mask, 2 * n, 4 * n)
            kept = mask & ((1 << (2 * n)) - 1)
        key = tuple(pulled)
        if key not in minor_cache:
            if len(pulled) > dim:
                minor_cache[key] = None
            elif pulled:
                rows = _zeta_rows(jac, conj_jac, pulled)
                minor_cache[key] = _minor_dets(rows, dim)
            else:
                minor_cache[key] = {(): 1.0}
        minors = minor_cache[key]
        if minors is None:
            continue
        for subset, det in minors.items():
            vkey = (kept, subset)
            add = coeff * det
            if vkey in values:
                values[vkey] += add
            else:
                values[vkey] = np.array(add, dtype=complex, copy=True)
    if not values:
        return None
    norm = None
    for v in values.values():
        a = np.abs(v)
        norm = a if norm is None else np.maximum(norm, a)
    return norm


# ---------------------------------------------------------------------------
# operator application
# ---------------------------------------------------------------------------


class OperatorValue:
    """Monte Carlo estimate of one operator application at one point."""

    __slots__ = ("components", "stderr", "samples")

    def __init__(self, components, stderr, samples):
        self.components = components
        self.stderr = stderr
        self.samples = samples

    def norm(self):
        return max((abs(v) for v in self.components.values()), default=0.0)

    def __repr__(self):
        keys = sorted(self.components)
        return f"OperatorValue({len(keys)} components, {self.samples} samples)"


def _component_key(mask, n):
    """Conjugate-z index tuple of a pure (0, s) wedge mask in the z slot."""
    lo, hi = 3 * n, 4 * n
    if mask & ~(((1 << n) - 1) << lo):
        raise QuadratureError(f"mask {mask:#x} carries unexpected covectors")
    return tuple(b - lo for b in range(lo, hi) if mask >> b & 1)


def _apply_many(f, kern, nodes_t, patch, plan, center_t, eps_frac=0.35):
    """Shared-sample operator estimates at several chart points.

    All nodes reuse the identical sample stream (strata centered at
    `center_t`), so differences between nearby nodes see correlated noise
    cancel; the finite-difference layer depends on that.
    """
    n, dim = patch.n, patch.dim
    cf = CompiledForm(kern.expr, fixed="z")
    zetas, zs = _crosscheck_points(patch)
    cf.crosscheck(zetas, zs)
    nodes_t = [np.asarray(t, dtype=float) for t in nodes_t]
    for t in nodes_t:
        if np.linalg.norm(t) > patch.cutoff:
            raise QuadratureError("evaluation point left the patch")
    binds = []
    for t in nodes_t:
        z_pt = patch.embed(t)
        binds.append(cf.bind(list(z_pt)))
    bind_stack = np.stack(binds, axis=0)
    eps0 = eps_frac * patch.cutoff
    strata = _singular_strata(plan, nodes_t, eps0,
                              bulk=(f.center, f.radius),
                              drifts=[patch.drift_covector(t)
                                      for t in nodes_t])
    width = cf.n_monos + _NODE_BATCH * max(cf.n_polys, 1)
    chunk = max(256, min(_CHUNK, 6_000_000 // max(width, 1)))
    zeta_bits_cache: dict = {}

    def integrand(t):
        cols, _ = patch._zcols(t)
        jac = patch.jacobian(t)
        cjac = np.conj(jac)
        ctx = cf.context(cols)
        fvals = f.values(t)
        out: dict = {}
        det_cache: dict = {}
        for lo in range(0, len(nodes_t), _NODE_BATCH):
            hi = min(len(nodes_t), lo + _NODE_BATCH)
            vals = bind_stack[lo:hi] @ ctx
            for b in range(lo, hi):
                coeffs = cf.coefficients(vals[b - lo])
                for mask, coeff in coeffs.items():
                    bits = zeta_bits_cache.get(mask)
                    if bits is None:
                        bits = tuple(_mask_bits(mask, 0, 2 * n))
                        zeta_bits_cache[mask] = bits
                    zmask = mask >> (2 * n) << (2 * n)
                    for key_f, fv in fvals.items():
                        if len(key_f) + len(bits) != dim:
                            continue
                        dkey = (key_f, bits)
                        det = det_cache.get(dkey)
                        if det is None:
                            rows = [cjac[:, j, :] for j in key_f]
                            rows += _zeta_rows(jac, cjac, bits)
                            det = _full_det(rows)
                            det_cache[dkey] = det
                        okey = (b, _component_key(zmask, n))
                        add = fv * coeff * det
                        if okey in out:
                            out[okey] += add
                        else:
                            out[okey] = add
        if not out:
            out[(0, ())] = np.zeros(t.shape[0], dtype=complex)
        return out

    est, se, used = _run_mixture(plan, strata, integrand, chunk=chunk)
    sign = patch.orientation_sign
    results = []
    for b in range(len(nodes_t)):
        comps = {key[1]: sign * v for key, v in est.items() if key[0] == b}
        errs = {key[1]: s for key, s in se.items() if key[0] == b}
        results.append(OperatorValue(comps, errs, used))
    return results


def apply_operator(f, kern, z_t, patch, plan, se_tol=None):
    """Estimate of the integral of f against one solution kernel at z.

    Returns an OperatorValue holding per-component complex estimates and
    standard errors.  With `se_tol` set, raises ToleranceError when any
    component's standard error still exceeds it at the full budget.
    """
    result = _apply_many(f, kern, [z_t], patch, plan, z_t)[0]
    if se_tol is not None:
        worst = max(result.stderr.values(), default=0.0)
        if worst > se_tol:
            raise ToleranceError(
                f"standard error {worst:.3e} above requested {se_tol:.3e} "
                f"after {result.samples} samples")
    return result


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


class ScalingFit:
    """Norm-integral table over shrinking balls and the fitted slope."""

    __slots__ = ("kind", "slope", "rows")

    def __init__(self, kind, slope, rows):
        self.kind = kind
        self.slope = slope
        self.rows = rows

    def __repr__(self):
        return f"ScalingFit(kind={self.kind!r}, slope={self.slope:.3f})"


def _fit_slope(xs, ys):
    A = np.stack([np.ones(len(xs)), np.asarray(xs)], axis=1)
    sol, *_ = np.linalg.lstsq(A, np.asarray(ys), rcond=None)
    return float(sol[1])


def scaling_probe(expr, kind, z_t, patch, plan, eps_list=(0.2, 0.1, 0.05, 0.025)):
    """Norm-integral scaling of one kernel piece around a chart point.

    Estimates the integral of the chart-pulled max-coefficient norm over
    balls |t - z_t| <= eps * cutoff and fits the log-log slope.  For the
    kinds whose bounds carry the logarithmic factor (K and E) the factor
    is divided out before fitting, so the returned slope targets the pure
    power.  Radii are relative to the patch cutoff; slopes are invariant
    under that normalization.
    """
    if kind not in ("K", "E", "R"):
        raise QuadratureError(f"unknown kernel kind {kind!r}")
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise QuadratureError("need at least four radii")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise QuadratureError("radii must strictly decrease")
    z_t = np.asarray(z_t, dtype=float)
    if np.linalg.norm(z_t) > 0.5 * patch.cutoff:
        raise QuadratureError("scaling center too close to the patch rim")
    n, dim = patch.n, patch.dim
    cf = CompiledForm(expr, fixed="z")
    zetas, zs = _crosscheck_points(patch)
    cf.crosscheck(zetas, zs)
    B = cf.bind(list(patch.embed(z_t)))
    rows = []
    logs = []
    k_model = patch.model.k
    chunk = max(256, min(_CHUNK,
                         6_000_000 // max(cf.n_monos + cf.n_polys, 1)))
    drift = patch.drift_covector(z_t)
    for eps_rel in eps_list:
        eps = eps_rel * patch.cutoff
        strata = _singular_strata(plan, [z_t], eps, bulk=None,
                                  drifts=[drift])

        def integrand(t):
            cols, _ = patch._zcols(t)
            jac = patch.jacobian(t)
            cjac = np.conj(jac)
            ctx = cf.context(cols)
            coeffs = cf.coefficients(B @ ctx)
            norm = _patch_norm(coeffs, jac, cjac, n, dim, pull="zeta")
            if norm is None:
                norm = np.zeros(t.shape[0])
            return {"I": norm.astype(complex)}

        est, se, _ = _run_mixture(plan, strata, integrand, chunk=chunk)
        value = est["I"].real
        rows.append((eps_rel, value, se["I"]))
        adj = math.log(max(value, 1e-300))
        if kind in ("K", "E"):
            adj -= k_model * math.log(1.0 + abs(math.log(eps_rel)))
        logs.append((math.log(eps_rel), adj))
    slope = _fit_slope([x for x, _ in logs], [y for _, y in logs])
    return ScalingFit(kind, slope, rows)


class HolderFit:
    """Difference-integral tables and fitted exponents, both slot orders."""

    __slots__ = ("exponent", "swapped_exponent", "rows", "swapped_rows")

    def __init__(self, exponent, swapped_exponent, rows, swapped_rows):
        self.exponent = exponent
        self.swapped_exponent = swapped_exponent
        self.rows = rows
        self.swapped_rows = swapped_rows

    def __repr__(self):
        return (f"HolderFit(exponent={self.exponent:.3f}, "
                f"swapped={self.swapped_exponent:.3f})")


def holder_probe(expr, pairs_t, patch, plan, eps_frac=0.25):
    """Continuity exponents of a kernel in each argument separately.

    For every pair the probe integrates the chart norm of the kernel
    difference over the patch, once moving the first slot and fixing the
    second at the pair points, then with the roles swapped, and fits the
    log of each integral against the log separation.
    """
    if len(pairs_t) < 3:
        raise QuadratureError("need at least three pairs for a fit")
    n, dim = patch.n, patch.dim
    zetas, zs = _crosscheck_points(patch)
    rows_direct = []
    rows_swapped = []
    for fixed in ("z", "zeta"):
        cf = CompiledForm(expr, fixed=fixed)
        cf.crosscheck(zetas, zs)
        pull = "zeta" if fixed == "z" else "z"
        chunk = max(256, min(_CHUNK,
                             6_000_000 // max(cf.n_monos + 2 * cf.n_polys, 1)))
        for t1, t2 in pairs_t:
            t1 = np.asarray(t1, dtype=float)
            t2 = np.asarray(t2, dtype=float)
            sep = float(np.linalg.norm(t1 - t2))
            if sep <= 0:
                raise QuadratureError("holder pairs must be distinct")
            B1 = cf.bind(list(patch.embed(t1)))
            B2 = cf.bind(list(patch.embed(t2)))
            strata = _singular_strata(
                plan, [t1, t2], eps_frac * patch.cutoff,
                bulk=(np.zeros(dim), patch.cutoff),
                drifts=[patch.drift_covector(t1),
                        patch.drift_covector(t2)])

            def integrand(t):
                cols, _ = patch._zcols(t)
                jac = patch.jacobian(t)
                cjac = np.conj(jac)
                ctx = cf.context(cols)
                c1 = cf.coefficients(B1 @ ctx)
                c2 = cf.coefficients(B2 @ ctx)
                diff = {}
                for mask in set(c1) | set(c2):
                    a = c1.get(mask)
                    b = c2.get(mask)
                    if a is None:
                        diff[mask] = -b
                    elif b is None:
                        diff[mask] = a
                    else:
                        diff[mask] = a - b
                norm = _patch_norm(diff, jac, cjac, n, dim, pull=pull)
                if norm is None:
                    norm = np.zeros(t.shape[0])
                return {"D": norm.astype(complex)}

            est, se, _ = _run_mixture(plan, strata, integrand, chunk=chunk)
            row = (sep, est["D"].real, se["D"])
            (rows_direct if fixed == "z" else rows_swapped).append(row)
    exp_direct = _fit_slope([math.log(r[0]) for r in rows_direct],
                            [math.log(max(r[1], 1e-300)) for r in rows_direct])
    exp_swapped = _fit_slope([math.log(r[0]) for r in rows_swapped],
                             [math.log(max(r[1], 1e-300)) for r in rows_swapped])
    return HolderFit(exp_direct, exp_swapped, rows_direct, rows_swapped)


# ---------------------------------------------------------------------------
# tangential derivative checks
# ---------------------------------------------------------------------------


def _frame_values(patch, t, comps):
    """Contract ambient (0, s) coefficients with frame tuples at chart points.

    `comps` maps increasing ambient index tuples to (N,) arrays.  Returns
    {frame index tuple: (N,) array} over increasing tuples of tangential
    frame indices, the well-defined tangential part of the form.
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    pair = patch.frame_pairings(t)
    count = t.shape[0]
    s = len(next(iter(comps))) if comps else 0
    if s == 0:
        return {(): next(iter(comps.values())) if comps
                else np.zeros(count, dtype=complex)}
    out = {}
    for frame_key in itertools.combinations(range(patch.n - 1), s):
        acc = np.zeros(count, dtype=complex)
        for amb_key, coeff in comps.items():
            block = pair[:, amb_key, :][:, :, frame_key]
            acc += coeff * np.linalg.det(block)
        out[frame_key] = acc
    return out


def dbar_b_numeric(f, patch, t_points, shift=None):
    """Tangential values of the ambient d-bar of a test form.

    Returns {frame tuple: array} at the given chart points: the ambient
    d-bar of the cylinder extension, contracted with tuples of the
    antiholomorphic tangent frame.  That contraction is exactly the part
    of the form that survives restriction to the manifold, so it cannot
    depend on the extension.  With `shift` given (another test form G of
    the same degree), the extension evaluated is f + rho * G instead; the
    returned values change only at rounding level, which is the
    extension-independence contract made checkable.
    """
    t = np.atleast_2d(np.asarray(t_points, dtype=float))
    amb = f.ambient_dbar().values(t)
    if shift is not None:
        if shift.r != f.r:
            raise QuadratureError("extension shift must match the degree")
        rho = patch.rho_values(t)
        for key, arr in shift.ambient_dbar().values(t).items():
            add = rho * arr
            amb[key] = amb.get(key, 0) + add
        drho = patch.dbar_rho_components(t)
        for key, arr in shift.values(t).items():
            for j in range(patch.n):
                ins = _wedge_insert(j, key)
                if ins is None:
                    continue
                sign, new_key = ins
                add = sign * drho[:, j] * arr
                amb[new_key] = amb.get(new_key, 0) + add
    return _frame_values(patch, t, amb)


# ---------------------------------------------------------------------------
# homotopy check
# ---------------------------------------------------------------------------


class HomotopyReport:
    """Residual table of the reproducing identity at the test points."""

    __slots__ = ("rows", "residual", "reference", "variant")

    def __init__(self, rows, residual, reference, variant):
        self.rows = rows
        self.residual = residual
        self.reference = reference
        self.variant = variant

    @property
    def relative(self):
        return self.residual / self.reference if self.reference else math.inf

    def __repr__(self):
        return (f"HomotopyReport(variant={self.variant!r}, "
                f"relative={self.relative:.3f})")


def _stencil(center, step, dim):
    nodes = [np.array(center, dtype=float)]
    for i in range(dim):
        for s in (step, -step, 2 * step, -2 * step):
            node = np.array(center, dtype=float)
            node[i] += s
            nodes.append(node)
    return nodes


def _richardson(values, step, dim):
    """First partials from the 21-node stencil, two-step extrapolation."""
    out = np.zeros((dim,) + np.shape(values[0]), dtype=complex)
    for i in range(dim):
        base = 1 + 4 * i
        d1 = (values[base] - values[base + 1]) / (2 * step)
        d2 = (values[base + 2] - values[base + 3]) / (4 * step)
        out[i] = (4.0 * d1 - d2) / 3.0
    return out


def measure_normalization(f, kern, patch, plan, points_t, grid_step=0.02):
    """Empirical complex ratios reference/raw of the reproducing identity.

    Runs the homotopy machinery with unit normalization and returns the
    per-point, per-component ratios between the test form's tangential
    values and the differentiated raw operator output.  Used once to pin
    HOMOTOPY_NORMALIZATION; kept public so the pinning is reproducible.
    """
    m = patch.n - 1
    if f.r == m and kern.r == m - 1:
        rows = _homotopy_rows(f, kern, patch, plan, points_t, grid_step, 1.0)
    elif f.r == 0 and kern.r == 0:
        g = f.ambient_dbar()
        rows = []
        for p_idx, t_c in enumerate(points_t):
            t_c = np.asarray(t_c, dtype=float)
            val = _apply_many(g, kern, [t_c], patch, plan, t_c)[0]
            u = -val.components.get((), 0j)
            ref = complex(f.values(t_c[None, :])[()][0])
            rows.append((p_idx, (), u, ref))
    else:
        raise QuadratureError(
            f"degree pairing (f.r={f.r}, kern.r={kern.r}) is not a wired "
            "variant")
    ratios = []
    for _, _, lhs, ref in rows:
        if abs(lhs) > 0:
            ratios.append(ref / lhs)
    return ratios


def _homotopy_rows(f, kern, patch, plan, points_t, grid_step, scale):
    """Shared evaluation core of the top-degree homotopy check."""
    n, dim = patch.n, patch.dim
    rows = []
    for p_idx, t_c in enumerate(points_t):
        t_c = np.asarray(t_c, dtype=float)
        nodes = _stencil(t_c, grid_step, dim)
        if any(np.linalg.norm(nd) > patch.cutoff for nd in nodes):
            raise QuadratureError("stencil leaves the patch")
        values = _apply_many(f, kern, nodes, patch, plan, t_c)
        pair_nodes = [patch.frame_pairings(nd)[0] for nd in nodes]
        m = patch.n - 1
        g = []
        for val, pair in zip(values, pair_nodes):
            comps = np.zeros(m, dtype=complex)
            for j in range(m):
                acc = 0j
                for l in range(n):
                    u_l = val.components.get((l,))
                    if u_l is not None:
                        acc += u_l * pair[l, j]
                comps[j] = acc
            g.append(comps)
        partials = _richardson(g, grid_step, dim)
        vec = patch.frame_vectors(t_c[None, :])[0]
        frame_deriv = np.zeros((m, m), dtype=complex)
        for a in range(m):
            for j in range(m):
                frame_deriv[a, j] = np.sum(vec[a] * partials[:, j])
        f_tang = _frame_values(patch, t_c[None, :], f.values(t_c[None, :]))
        for a, b in itertools.combinations(range(m), 2):
            lhs = frame_deriv[a, b] - frame_deriv[b, a]
            ref = complex(f_tang[(a, b)][0])
            rows.append((p_idx, (a, b), scale * lhs, ref))
    return rows


def homotopy_check(f, kern, patch, plan, points_t, grid_step=0.02, scale=None):
    """Residual of the reproducing identity against a solution kernel.

    Top-degree variant (f of degree (0, n-1) on the manifold, kern the
    degree-below solving kernel): the tangential derivative of the
    operator output must reproduce f, since top-degree forms have no
    tangential d-bar and compact support kills the boundary term.
    Degree-zero variant (f a bump function, kern the degree-zero kernel):
    applying the operator to the ambient d-bar of f must reproduce -f.
    Reports max residual over points against max reference magnitude.
    """
    key = (patch.n, patch.model.k)
    if scale is None:
        if key not in HOMOTOPY_NORMALIZATION:
            raise QuadratureError(
                f"no calibrated normalization for dimensions {key}")
        scale = HOMOTOPY_NORMALIZATION[key]
    m = patch.n - 1
    if f.r == m and kern.r == m - 1:
        rows = _homotopy_rows(f, kern, patch, plan, points_t, grid_step, scale)
        variant = "top"
    elif f.r == 0 and kern.r == 0:
        g = f.ambient_dbar()
        rows = []
        for p_idx, t_c in enumerate(points_t):
            t_c = np.asarray(t_c, dtype=float)
            val = _apply_many(g, kern, [t_c], patch, plan, t_c)[0]
            u = -scale * val.components.get((), 0j)
            ref = complex(f.values(t_c[None, :])[()][0])
            rows.append((p_idx, (), u, ref))
        variant = "recovery"
    else:
        raise QuadratureError(
            f"degree pairing (f.r={f.r}, kern.r={kern.r}) is not a wired "
            "variant")
    residual = max(abs(lhs - ref) for _, _, lhs, ref in rows)
    reference = max(abs(ref) for _, _, _, ref in rows)
    table = [(p, comp, complex(lhs), complex(ref), abs(lhs - ref))
             for p, comp, lhs, ref in rows]
    return HomotopyReport(table, residual, reference, variant)


# ---------------------------------------------------------------------------
# estimator self-test and CSV output
# ---------------------------------------------------------------------------


def reference_shell_check(patch, plan, eps_rel=0.5):
    """Estimator audit against a closed-form singular integral.

    Integrates |t|^-(2n-k-2) over the chart ball of radius eps_rel times
    cutoff, whose exact value is area(S^(dim-1)) * eps^2 / 2, and returns
    (estimate, stderr, exact).  A sound estimator lands within a few
    standard errors; the acceptance tests pin that down.
    """
    dim = patch.dim
    power = 2 * patch.n - patch.model.k - 2
    if dim - power != 2:
        raise QuadratureError("reference integrand is wired for 2n-k-2 decay")
    eps = eps_rel * patch.cutoff
    center = np.zeros(dim)
    strata = _singular_strata(plan, [center], eps, bulk=None)

    def integrand(t):
        r = np.linalg.norm(t, axis=1)
        return {"I": (np.maximum(r, 1e-300) ** (-power)).astype(complex)}

    est, se, _ = _run_mixture(plan, strata, integrand)
    exact = _sphere_area(dim) * eps ** 2 / 2.0
    return est["I"].real, se["I"], exact


def reference_wedge_check(patch, plan, eps_rel=0.5):
    """Estimator audit against an anisotropic closed-form integral.

    Integrates (s**2 + |y|)**(-5/2) over the parabolic cylinder s <= eps,
    |y| <= eps**2, where s is the tangential radius; the exact value is
    8 pi**2 eps (1 - 2**-0.5).  This exercises the wedge strata and their
    densities against the same singularity shape the kernels carry.
    """
    if patch.dim != 5:
        raise QuadratureError("wedge reference is wired for 5 chart dims")
    eps = eps_rel * patch.cutoff
    center = np.zeros(patch.dim)
    strata = _singular_strata(plan, [center], eps, bulk=None)

    def integrand(t):
        s = np.linalg.norm(t[:, :4], axis=1)
        y = np.abs(t[:, 4])
        inside = (s <= eps) & (y <= eps ** 2)
        base = np.maximum(s ** 2 + y, 1e-300)
        return {"I": np.where(inside, base ** -2.5, 0.0).astype(complex)}

    est, se, _ = _run_mixture(plan, strata, integrand)
    exact = 8.0 * math.pi ** 2 * eps * (1.0 - 2.0 ** -0.5)
    return est["I"].real, se["I"], exact


def _fmt(x):
    if isinstance(x, complex):
        return f"{x.real:.12e}{x.imag:+.12e}j"
    return f"{x:.12e}"


def scaling_csv(fits):
    """CSV of scaling tables; one row per radius per kernel kind."""
    lines = [
        "# scaling probe: norm integral of a kernel piece over shrinking "
        "chart balls",
        "# columns: kind = kernel piece id; eps_rel = ball radius over patch "
        "cutoff; estimate = mixture Monte Carlo value; stderr = mixture "
        "standard error; slope = fitted log-log exponent after removing the "
        "logarithmic factor where the bound carries one",
        "kind,eps_rel,estimate,stderr,slope",
    ]
    for fit in fits:
        for eps_rel, value, err in fit.rows:
            lines.append(f"{fit.kind},{_fmt(eps_rel)},{_fmt(value)},"
                         f"{_fmt(err)},{_fmt(fit.slope)}")
    return "\n".join(lines) + "\n"


def holder_csv(fit):
    """CSV of the continuity tables for both argument orders."""
    lines = [
        "# holder probe: integral of the kernel difference norm over the "
        "patch, against the pair separation",
        "# columns: variant = which argument moves (second or first); "
        "separation = chart distance of the pair; estimate = mixture Monte "
        "Carlo value; stderr = mixture standard error; exponent = fitted "
        "log-log slope for that variant",
        "variant,separation,estimate,stderr,exponent",
    ]
    for sep, value, err in fit.rows:
        lines.append(f"second,{_fmt(sep)},{_fmt(value)},{_fmt(err)},"
                     f"{_fmt(fit.exponent)}")
    for sep, value, err in fit.swapped_rows:
        lines.append(f"first,{_fmt(sep)},{_fmt(value)},{_fmt(err)},"
                     f"{_fmt(fit.swapped_exponent)}")
    return "\n".join(lines) + "\n"


def homotopy_csv(report):
    """CSV of per-point homotopy residuals."""
    lines = [
        "# homotopy check: differentiated operator output against the test "
        f"form, variant {report.variant}",
        "# columns: point = test point index; component = tangential frame "
        "tuple; operator = normalized operator-side value; reference = test "
        "form value; residual = absolute difference",
        "point,component,operator,reference,residual",
    ]
    for p, comp, lhs, ref, res in report.rows:
        comp_txt = "/".join(str(c) for c in comp) or "-"
        lines.append(f"{p},{comp_txt},{_fmt(lhs)},{_fmt(ref)},{_fmt(res)}")
    return "\n".join(lines) + "\n"
