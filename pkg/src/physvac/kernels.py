"""Boundary-adapted regularization kernels on dyadic layers.

The kernel at frequency index h mollifies at width 2^-h r^(1/2) in the
bulk, capped at 2^-2h inside the boundary strip, sampling shifted one
width into the interior so outputs extend past the free boundary while
inputs stay inside it. Vanishing moments through order 2M make the
shifted sampling reproduce polynomials, which is what lets the shift
coexist with high-order accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import roots_legendre

from .errors import BoundaryLost, DegenerateBoundary, IllConditionedMoments, NegativeInterior, ScaleTooFine
from .grid import (
    Field1D,
    Grid1D,
    State,
    derivative,
    graded_grid,
    interp_matrix,
    make_state,
    sample_at,
)

ENLARGE_C = 0.125  # domain enlargement c * 2^-2h; "small universal constant"
_BUMP_PANELS = (-1.0, -0.92, -0.65, 0.0, 0.65, 0.92, 1.0)


def _smoothstep(t):
    t = np.asarray(t, dtype=np.float64)
    f = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    g = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return f / (f + g)


def _template(u):
    """Base bump on (-1, 1), C-infinity, not normalized."""
    u = np.asarray(u, dtype=np.float64)
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    return np.where(inside, np.exp(-1.0 / np.maximum(1.0 - uu**2, 1e-300)), 0.0)


def _bump_quad(nq: int = 16):
    """Composite Gauss nodes/weights on (-1,1), panels clustered at the
    edges where the exp cutoff loses analyticity."""
    t, w = roots_legendre(nq)
    us, ws = [], []
    for a, b in zip(_BUMP_PANELS[:-1], _BUMP_PANELS[1:]):
        us.append(0.5 * (a + b) + 0.5 * (b - a) * t)
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(us), np.concatenate(ws)


@dataclass(frozen=True)
class BumpFunction:
    """Shifted bump with vanishing moments 1..2M about the origin.

    Support lies in (e - delta, e + delta) with |e| = 1 the shift
    direction; the template is built at e = +1 and mirrored on use. The
    polynomial correction q makes int z^a phi(z) dz = delta_{a0} for
    a <= 2M, so the kernel acts like evaluation at z = 0 to order 2M.

    The correction is stored in factored form (leading coefficient, real
    roots, quadratic factors): the polynomial reaches ~delta^-(2M+1) in
    size and an expanded-basis evaluation would lose the moments to
    cancellation; the product form is pointwise relatively accurate.
    """

    M: int
    delta: float
    center: float
    lead: float
    lin_roots: np.ndarray
    quad_factors: np.ndarray  # rows (p, q) for u^2 + p u + q
    solve_residual: float
    moment_residual: float
    u_nodes: np.ndarray = field(repr=False)
    u_weights: np.ndarray = field(repr=False)

    def q(self, u):
        u = np.asarray(u, dtype=np.float64)
        out = np.full(u.shape, self.lead)
        for r0 in self.lin_roots:
            out = out * (u - r0)
        for p, q0 in self.quad_factors:
            out = out * (u * u + p * u + q0)
        return out

    def density(self, u):
        """phi(z) dz expressed in the u variable: q(u) phi0(u) * delta du."""
        return self.q(u) * _template(u) * self.delta

    def quadrature(self):
        """(z_q, w_q) with sum w ~ 1 and sum w z^a ~ 0 for 1 <= a <= 2M."""
        z = self.center + self.delta * self.u_nodes
        w = self.density(self.u_nodes) * self.u_weights
        return z, w

    def moments(self, alpha_max: int, nq: int = 40) -> np.ndarray:
        """Independent fine-quadrature z-moments (index 0 is mass).

        fsum keeps the audit's own summation error below the huge internal
        cancellation of the corrected density.
        """
        u, wq = _bump_quad(nq)
        w = self.density(u) * wq
        z = self.center + self.delta * u
        return np.array([math.fsum(w * z**a) for a in range(alpha_max + 1)])


_TEMPLATE_MOMENTS = {}
_BUMP_CACHE = {}


def _template_moments_mp(n_max: int):
    """High-precision even moments int u^n phi0(u) du of the template.

    The correction coefficients reach delta^-(2M+1) ~ 1e5, so the linear
    system is solved in extended precision and only the final coefficient
    table is rounded to float64.
    """
    import mpmath as mp

    if n_max in _TEMPLATE_MOMENTS:
        return _TEMPLATE_MOMENTS[n_max]
    with mp.workdps(50):
        phi = lambda u: mp.e ** (-1 / (1 - u * u)) if abs(u) < 1 else mp.mpf(0)
        moms = []
        for n in range(n_max + 1):
            if n % 2 == 1:
                moms.append(mp.mpf(0))
            else:
                moms.append(2 * mp.quad(lambda u: u**n * phi(u), [0, mp.mpf(9) / 10, 1]))
    _TEMPLATE_MOMENTS[n_max] = moms
    return moms


def make_bump(M: int = 4, delta: float = 0.25, center: float = 1.0) -> BumpFunction:
    """Solve the moment-correction system for the bump.

    With center c the conditions reduce to u-moments
    M_j = (-c/delta)^j / delta. The default c = 1 is the boundary-shifted
    bump of the construction; c = 0 gives the symmetric interior mollifier
    (its odd moments vanish by parity and the correction stays small).
    """
    import mpmath as mp

    if M < 0 or M > 6:
        raise ValueError("need 0 <= M <= 6")
    if center not in (0.0, 1.0):
        raise ValueError("center must be 0 or 1")
    if delta <= 0 or delta > (0.25 if center == 1.0 else 0.5):
        raise ValueError("need 0 < delta <= 1/4 (support must stay near e)")
    key = (M, float(delta), float(center))
    if key in _BUMP_CACHE:
        return _BUMP_CACHE[key]
    deg = 2 * M + 1
    moms = _template_moments_mp(2 * deg)
    with mp.workdps(60):
        d = mp.mpf(delta)
        c = mp.mpf(center)
        targets = mp.matrix([(-c / d) ** j / d for j in range(deg)])
        # moment matrix in the monomial basis: G[j, i] = int u^(j+i) phi0 du
        G = mp.zeros(deg, deg)
        for j in range(deg):
            for i in range(deg):
                G[j, i] = moms[j + i]
        try:
            sol = mp.lu_solve(G, targets)
        except ZeroDivisionError as exc:
            raise IllConditionedMoments("correction system singular") from exc
        resid = G * sol - targets
        solve_residual = float(max(abs(x) for x in resid))
        if solve_residual > 1e-10:
            raise IllConditionedMoments(
                f"correction system residual {solve_residual:.2e}"
            )
        # factor the correction polynomial for cancellation-free evaluation
        power = [sol[i] for i in range(deg)]
        while power and power[-1] == 0:
            power.pop()
        lead = float(power[-1])
        roots = mp.polyroots(list(reversed(power)), maxsteps=200, extraprec=120)
        lin, quad, used = [], [], [False] * len(roots)
        for a, ra in enumerate(roots):
            if used[a]:
                continue
            if abs(mp.im(ra)) < 1e-30:
                lin.append(float(mp.re(ra)))
                used[a] = True
            else:
                for b in range(a + 1, len(roots)):
                    if not used[b] and abs(roots[b] - mp.conj(ra)) < 1e-20 * (1 + abs(ra)):
                        quad.append((float(-2 * mp.re(ra)), float(abs(ra) ** 2)))
                        used[a] = used[b] = True
                        break
                else:
                    raise IllConditionedMoments("unpaired complex root in correction")
    cond = np.linalg.cond(np.array([[float(G[j, i]) for i in range(deg)] for j in range(deg)]))
    if cond > 1e12 and solve_residual > 1e-10:
        raise IllConditionedMoments(f"correction system condition number {cond:.2e}")
    u, wq = _bump_quad(24)
    bump = BumpFunction(
        M=M,
        delta=float(delta),
        center=float(center),
        lead=lead,
        lin_roots=np.asarray(lin),
        quad_factors=np.asarray(quad).reshape(-1, 2),
        solve_residual=solve_residual,
        moment_residual=0.0,
        u_nodes=u,
        u_weights=wq,
    )
    # float64 re-quadrature of the moments; limited by eps * total variation
    # of the corrected density (~3e7 at M = 4), so ~1e-7 there is expected
    mom = bump.moments(2 * M, nq=48)
    res = max(abs(mom[0] - 1.0), float(np.max(np.abs(mom[1:]))) if M > 0 else 0.0)
    if res > 1e-6:
        raise IllConditionedMoments(f"moment residual {res:.2e} after correction solve")
    object.__setattr__(bump, "moment_residual", res)
    _BUMP_CACHE[key] = bump
    return bump


def _enforce_row_moments(x, y, w, wrow, order: int, passes: int = 6):
    """Minimum-norm weighted update making the discrete row moments exact.

    The continuous kernel satisfies the moment identities analytically,
    but its float64 samples carry ~eps * TV defects; the discrete kernel
    must satisfy the axioms itself, so the defect is projected out. The
    constraints are posed in a Chebyshev basis on the row's offset range
    (sum w p(xi) = p(0) for every polynomial of degree <= order), which
    keeps the projection well conditioned for one-sided rows.
    """
    xi = (y - x) / wrow
    lo, hi = float(np.min(xi)), float(np.max(xi))
    c, s = 0.5 * (hi + lo), max(0.5 * (hi - lo), 1e-12)
    V = np.polynomial.chebyshev.chebvander((xi - c) / s, order).T
    tgt = np.polynomial.chebyshev.chebvander(np.array([-c / s]), order)[0]
    wmax = float(np.max(np.abs(w))) + 1e-300
    # benign rows (small weights, tiny defect) exit on one cheap check
    d = V @ w - tgt
    if wmax < 10.0 and float(np.max(np.abs(d))) < 1e-12:
        return w
    scale = np.abs(tgt) + 1.0
    best = None
    for it in range(passes):
        d = np.array([math.fsum(w * V[a]) for a in range(order + 1)]) - tgt
        defect = float(np.max(np.abs(d / scale)))
        if best is None or defect < best[0]:
            best = (defect, w.copy())
        if defect < 1e-14:
            break
        # weighted min-norm update first; flat weighting once the weighted
        # Gram runs out of effective rank on few-node boundary rows
        D = np.sqrt(np.abs(w) + 1e-300) if it < passes // 2 else np.full(w.size, wmax)
        z, *_ = np.linalg.lstsq(V * D[None, :], d, rcond=None)
        w = w - D * z
    return best[1]


@dataclass(frozen=True)
class LayerPartition:
    """Smooth partition of unity in the dyadic depth t = log2(1/r)/2.

    Cut l separates layer l from l+1 with transition width one dyadic
    level; everything past t = h belongs to the boundary strip. chi_l is
    supported where the matched kernel width is 2^-(h+l) (equivalently
    r ~ 2^-2l), and the strip uses the capped width 2^-2h.
    """

    h: float
    cuts: np.ndarray

    @staticmethod
    def build(h: float) -> "LayerPartition":
        if h < 0.5:
            raise ValueError("need h >= 1/2")
        n_layers = max(int(math.ceil(h)), 1)
        cuts = np.minimum(np.arange(n_layers) + 0.5, h)
        return LayerPartition(h=float(h), cuts=cuts)

    @property
    def n_layers(self) -> int:
        return self.cuts.size

    def weights(self, t: np.ndarray) -> np.ndarray:
        """Array (n_layers + 1, len(t)); last row is the strip chi_{>h}."""
        t = np.asarray(t, dtype=np.float64)
        steps = np.stack([_smoothstep(t - c + 0.5) for c in self.cuts])
        out = np.empty((self.n_layers + 1, t.size))
        out[0] = 1.0 - steps[0]
        for l in range(1, self.n_layers):
            out[l] = steps[l - 1] - steps[l]
        out[-1] = steps[-1]
        return out

    def width(self, layer: int) -> float:
        if layer >= self.n_layers:  # strip
            return 2.0 ** (-2.0 * self.h)
        return 2.0 ** -(self.h + layer)


@dataclass(frozen=True)
class GoodKernel:
    """Assembled discrete regularization operator at scale h.

    `matrix` maps source-node samples to output-node values on the
    enlarged grid; `rows` keeps the quadrature-level sampling (y points,
    weights, per-point kernel values and widths) for audits and dumps.
    """

    h: float
    bump: BumpFunction
    source: Grid1D
    out_grid: Grid1D
    matrix: csr_matrix
    rows: list
    partition: LayerPartition

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return self.matrix @ samples

    def row_moments(self, i: int, alpha_max: int) -> np.ndarray:
        """Discrete moments sum K_ij ((x_j - x_i)/rho)^alpha of the assembled
        operator row i, nondimensionalized by the row's support radius rho
        (kernel width plus interpolation-stencil reach)."""
        x = self.out_grid.nodes[i]
        sl = slice(self.matrix.indptr[i], self.matrix.indptr[i + 1])
        cols = self.matrix.indices[sl]
        w = self.matrix.data[sl]
        xi = self.source.nodes[cols] - x
        rho = float(np.max(np.abs(xi))) or 1.0
        xi = xi / rho
        return np.array([math.fsum(w * xi**a) for a in range(alpha_max + 1)])

    def dump_csv(self, path: str, stride: int = 1) -> None:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            wr = _csv.writer(fh)
            wr.writerow(["x", "y", "K"])
            for i in range(0, self.out_grid.n, stride):
                x = self.out_grid.nodes[i]
                y, _, kvals, _ = self.rows[i]
                for yy, kk in zip(y, kvals):
                    wr.writerow([repr(float(x)), repr(float(yy)), repr(float(kk))])


def _dyadic_depth(r: Field1D, xq: np.ndarray, rmax: float) -> np.ndarray:
    """t(x) = log2(1/r)/2 with linear extension of r beyond the hull."""
    x0, x1 = r.grid.span
    xq = np.asarray(xq, dtype=np.float64)
    inside = np.clip(xq, x0, x1)
    vals = sample_at(r, inside)
    rx = derivative(r, 1)
    slope_l = float(rx.samples[0])
    slope_r = float(rx.samples[-1])
    vals = np.where(xq < x0, vals + slope_l * (xq - x0), vals)
    vals = np.where(xq > x1, vals + slope_r * (xq - x1), vals)
    vals = np.maximum(vals / max(rmax, 1e-300), 1e-30)
    return -0.5 * np.log2(vals)


def build_kernel(
    r: Field1D,
    h: float,
    bump: BumpFunction | None = None,
    *,
    n_out: int | None = None,
    enlarge: float = ENLARGE_C,
    interp_stencil: int | None = None,
) -> GoodKernel:
    """Assemble the discrete good kernel for the domain defined by r.

    The grid of r must span the closed fluid domain (r ~ 0 at the ends).
    Output nodes live on the 2^-2h-enlarged domain; every sampling point
    is shifted one local width into the interior.
    """
    bump = bump or make_bump()
    sym = make_bump(bump.M, 0.5, center=0.0)
    eps_h = 2.0 ** (-2.0 * h)
    src = r.grid
    min_cell = float(np.min(src.cells()))
    if eps_h < 4.0 * min_cell:
        raise ScaleTooFine(
            f"2^-2h = {eps_h:.3e} below 4 grid cells (min cell {min_cell:.3e})"
        )
    gl, gr = src.span
    out_grid = graded_grid(gl - enlarge * eps_h, gr + enlarge * eps_h, n_out or src.n + 16)
    part = LayerPartition.build(h)
    # shifted rows sample at spread widths: a narrow window one width away
    # is a Chebyshev extrapolation with gain ~cosh(2M acosh(1/delta)), fatal
    # under iteration; spreading the reads keeps the gain O(1) while the
    # half-width start keeps the boundary extrapolation gap short
    spread = (0.5, 1.0, 2.0)
    # worst inward reach: a row two widths from its boundary reading
    # through the widest spread window
    if (2.0 + spread[-1] * (1.0 + bump.delta)) * 2.0 ** (-h) > 0.98 * (gr - gl):
        raise ScaleTooFine("kernel reach exceeds the domain; h too coarse")
    rmax = float(np.max(r.samples))
    t = _dyadic_depth(r, out_grid.nodes, rmax)
    chis = part.weights(t)

    mid = 0.5 * (gl + gr)
    wblend = 0.1 * (gr - gl)
    lam = 1.0 - _smoothstep((out_grid.nodes - (mid - wblend)) / (2.0 * wblend))

    zq, _ = bump.quadrature()
    zs, wsym = sym.quadrature()
    # shifted rows start from the uncorrected positive template; the
    # discrete polynomial correction happens in the row projection below,
    # which is the construction lemma in discrete form. Solving the
    # continuous correction first and sampling it would carry its
    # delta^-(2M+1) total variation into every iterate.
    wq = _template(bump.u_nodes) * bump.u_weights
    wq = wq / float(np.sum(wq))
    dens_sh = _template(bump.u_nodes) / float(
        np.dot(bump.u_weights, _template(bump.u_nodes))
    )
    dens_sy = sym.density(sym.u_nodes)
    stencil = interp_stencil or (2 * bump.M + 2)
    rows = []
    all_y, all_w, row_ptr = [], [], [0]
    for i, x in enumerate(out_grid.nodes):
        ys, ws, kv, widths = [], [], [], []
        for layer in range(part.n_layers + 1):
            eta = chis[layer, i]
            if eta < 1e-12:
                continue
            w_l = part.width(layer)
            # symmetric mollifier only where its full window fits with a
            # 2x margin; elsewhere the shifted bump reads into the interior
            dist = min(x - gl, gr - x)
            share = 1.0 - float(_smoothstep(dist / w_l - 1.0))
            if eta * (1.0 - share) > 1e-12:
                ys.append(x + w_l * zs)
                ws.append(eta * (1.0 - share) * wsym)
                kv.append(eta * (1.0 - share) * dens_sy / w_l)
                widths.append(np.full(zs.size, w_l))
            for lam_side, sgn in ((lam[i], +1.0), (1.0 - lam[i], -1.0)):
                if eta * share * lam_side < 1e-12:
                    continue
                for fac in spread:
                    ws_l = fac * w_l
                    ys.append(x + sgn * ws_l * zq)
                    ws.append(eta * share * lam_side * wq / len(spread))
                    kv.append(eta * share * lam_side * dens_sh / (ws_l * len(spread)))
                    widths.append(np.full(zq.size, ws_l))
        y = np.concatenate(ys)
        w = np.concatenate(ws)
        widths = np.concatenate(widths)
        rows.append((y, w, np.concatenate(kv), widths))
        all_y.append(y)
        all_w.append(w)
        row_ptr.append(row_ptr[-1] + y.size)
    ys = np.concatenate(all_y)
    if np.any(ys < gl - 1e-12 * src.length) or np.any(ys > gr + 1e-12 * src.length):
        raise ScaleTooFine("kernel sampling reaches outside the source domain")
    P = interp_matrix(src, ys, stencil=stencil)
    data = np.concatenate(all_w)
    indices = np.arange(ys.size)
    W = csr_matrix(
        (data, indices, np.asarray(row_ptr)), shape=(out_grid.n, ys.size)
    )
    mat = (W @ P).tocsr()
    # moment enforcement acts on the composed node-value operator, killing
    # both density rounding and interpolation roundoff in one projection
    for i in range(out_grid.n):
        sl = slice(mat.indptr[i], mat.indptr[i + 1])
        cols = mat.indices[sl]
        wrow = float(np.max(rows[i][3]))
        mat.data[sl] = _enforce_row_moments(
            out_grid.nodes[i], src.nodes[cols], mat.data[sl], wrow, 2 * bump.M
        )
    ker = GoodKernel(
        h=float(h),
        bump=bump,
        source=src,
        out_grid=out_grid,
        matrix=mat,
        rows=rows,
        partition=part,
    )
    object.__setattr__(ker, "sym_bump", sym)
    return ker


def regularize(
    fields, r: Field1D, h: float, bump: BumpFunction | None = None, kernel: GoodKernel | None = None
):
    """Apply the scale-h regularization to fields on the domain of r.

    Returns (enlarged_fields, kernel); outputs live on the enlarged grid
    and read inputs only outside the 2^-2h boundary layer.
    """
    if kernel is None:
        kernel = build_kernel(r, h, bump)
    out = []
    for f in fields:
        vals = kernel.apply(f.samples)
        out.append(Field1D(kernel.out_grid, vals, budget=f.budget))
    return out, kernel


def regularize_state(
    state: State, h: float, bump: BumpFunction | None = None, n_out: int | None = None
) -> State:
    """Regularize (r, v) and restrict to the positive set of the new r."""
    kernel = build_kernel(state.r, h, bump, n_out=n_out)
    rh = kernel.apply(state.r.samples)
    vh = kernel.apply(state.v.samples)
    try:
        return make_state(rh, vh, state.kappa, kernel.out_grid, budget=state.r.budget)
    except (DegenerateBoundary, NegativeInterior) as exc:
        raise BoundaryLost(f"regularized r lost its boundary: {exc}") from exc


def audit_moments(kernel: GoodKernel, alpha_max: int | None = None, stride: int = 7) -> float:
    """Worst scaled row moment residual over sampled output nodes."""
    alpha_max = alpha_max or 2 * kernel.bump.M
    worst = 0.0
    for i in range(0, kernel.out_grid.n, stride):
        mom = kernel.row_moments(i, alpha_max)
        worst = max(worst, abs(mom[0] - 1.0), float(np.max(np.abs(mom[1:]))))
    return worst


def audit_support(kernel: GoodKernel, r: Field1D, const: float = 4.0) -> float:
    """Max of |x-y| / (2^-2h + 2^-h r(y)^(1/2)) over all sampling points;
    the support property requires this to stay below a fixed constant."""
    eps_h = 2.0 ** (-2.0 * kernel.h)
    worst = 0.0
    for i, x in enumerate(kernel.out_grid.nodes):
        y, w, _, _ = kernel.rows[i]
        live = np.abs(w) > 0
        if not live.any():
            continue
        ry = np.maximum(sample_at(r, y[live]), 0.0)
        bound = eps_h + 2.0 ** (-kernel.h) * np.sqrt(ry)
        worst = max(worst, float(np.max(np.abs(x - y[live]) / bound)))
    return worst


def audit_locality(kernel: GoodKernel, r: Field1D) -> float:
    """Largest depth gap between an output node and its sampling points;
    inputs must come from the interior side (t(y) < t(x) + O(1))."""
    rmax = float(np.max(r.samples))
    tx = _dyadic_depth(r, kernel.out_grid.nodes, rmax)
    worst = -np.inf
    for i in range(kernel.out_grid.n):
        y, w, _, _ = kernel.rows[i]
        live = np.abs(w) > 1e-14
        ty = _dyadic_depth(r, y[live], rmax)
        worst = max(worst, float(np.max(ty - min(tx[i], kernel.h + 1.0))))
    return worst


def audit_reg_bounds(state: State, h: float, j: int, k: int = 1, bump=None) -> dict:
    """Measured LHS / (2^{2jh} RHS) ratios for the regularization,
    difference, and error bounds at one scale.

    The regularization bound needs j >= 0; the other two need -k <= j <= 0.
    Ratios are reported for whichever applies; inapplicable entries are
    omitted.
    """
    from .wspace import h2k_norm

    out = {}
    base, _ = h2k_norm(state.r, state.v, state.r, state.kappa, k)
    sh = regularize_state(state, h, bump=bump)
    if j >= 0:
        hi, _ = h2k_norm(sh.r, sh.v, sh.r, sh.kappa, k + j)
        out["reg+"] = hi / (2.0 ** (2 * j * h) * base)
    if -k <= j <= 0:
        sh1 = regularize_state(state, h + 1, bump=bump)
        from .grid import resample

        common = state.grid
        dr = resample(sh1.r, common).samples - resample(sh.r, common).samples
        dv = resample(sh1.v, common).samples - resample(sh.v, common).samples
        dr_f = Field1D(common, dr, budget=state.r.budget)
        dv_f = Field1D(common, dv, budget=state.v.budget)
        diff, _ = h2k_norm(dr_f, dv_f, state.r, state.kappa, k + j)
        out["reg-"] = diff / (2.0 ** (2 * j * h) * base)
        er = state.r.samples - resample(sh.r, common).samples
        ev = state.v.samples - resample(sh.v, common).samples
        er_f = Field1D(common, er, budget=state.r.budget)
        ev_f = Field1D(common, ev, budget=state.v.budget)
        err, _ = h2k_norm(er_f, ev_f, state.r, state.kappa, k + j)
        out["reg:err"] = err / (2.0 ** (2 * j * h) * base)
    return out
