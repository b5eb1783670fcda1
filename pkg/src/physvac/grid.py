"""Discretized 1D fluid domains, fields, high-order differentiation, resampling.

The free boundary is where the defining function r vanishes; waves move on
the degenerate metric r^{-1} dx^2, so graded grids cluster nodes near the
endpoints with density proportional to dist^{-1/2}.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateBoundary,
    InsufficientResolution,
    NegativeInterior,
    OutOfHull,
)

# Finite-difference accuracy: good variables for k = 3 need six spatial
# derivatives, hence p = 6 interior; one-sided stencils drop to p = 4.
P_INTERIOR = 6
P_BOUNDARY = 4
RESAMPLE_STENCIL = 8  # local Lagrange, degree 7
DEFAULT_BUDGET = 6

ExactFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes plus a grading descriptor."""

    nodes: np.ndarray
    grading: str = "uniform"  # "uniform" | "graded" | "custom"

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 16:
            raise ValueError(f"need >= 16 strictly increasing nodes, got {nodes.size}")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.grading not in ("uniform", "graded", "custom"):
            raise ValueError(f"unknown grading {self.grading!r}")
        if self.grading == "graded":
            w = np.diff(nodes)
            m = nodes.size // 4
            if np.any(np.diff(w[:m]) < -1e-12 * w[0]) or np.any(
                np.diff(w[-m:]) > 1e-12 * w[-1]
            ):
                raise ValueError("graded grid must refine monotonically toward endpoints")
        object.__setattr__(self, "_stencils", {})

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    def cells(self) -> np.ndarray:
        return np.diff(self.nodes)

    def descriptor(self) -> dict:
        return {"grading": self.grading, "n": int(self.n), "span": list(self.span)}


def uniform_grid(a: float, b: float, n: int) -> Grid1D:
    return Grid1D(np.linspace(a, b, n), grading="uniform")


def graded_grid(a: float, b: float, n: int) -> Grid1D:
    """Boundary-graded grid with node density ~ dist^(-1/2) near each end.

    The smoothstep map m(t) = t^2 (3 - 2t) has spacing ~ sqrt(dist) at both
    ends, which resolves the sqrt(r) structure of waves near the vacuum.
    """
    t = np.linspace(0.0, 1.0, n)
    m = t * t * (3.0 - 2.0 * t)
    return Grid1D(a + (b - a) * m, grading="graded")


def custom_grid(nodes: np.ndarray) -> Grid1D:
    return Grid1D(np.asarray(nodes, dtype=np.float64), grading="custom")


def fornberg_weights(x0: float, xs: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 on nodes xs."""
    n = xs.size
    if m >= n:
        raise ValueError("stencil too small for derivative order")
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _diff_stencils(grid: Grid1D, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-node stencil index and weight tables for one derivative order."""
    cache = grid._stencils
    key = ("d", order)
    if key in cache:
        return cache[key]
    x = grid.nodes
    n = x.size
    n_int = order + P_INTERIOR
    n_bnd = order + P_BOUNDARY
    idx = np.empty((n, n_int), dtype=np.intp)
    wts = np.zeros((n, n_int))
    half = (n_int - 1) // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - n_int)
        size = n_int
        if lo == 0 or lo == n - n_int:
            # one-sided window: shorter stencil for robustness on graded ends
            size = n_bnd
            lo = min(max(i - (size - 1) // 2, 0), n - size)
        sl = slice(lo, lo + size)
        idx[i, :size] = np.arange(lo, lo + size)
        idx[i, size:] = lo  # padded, zero weight
        wts[i, :size] = fornberg_weights(x[i], x[sl], order)
    cache[key] = (idx, wts)
    return idx, wts


@dataclass(frozen=True)
class Field1D:
    """Samples of a scalar field on a grid.

    `budget` is the highest derivative order trusted from these samples.
    `exact` optionally evaluates the m-th derivative anywhere (used by the
    polynomial oracles); it makes derivative/resample exact.
    """

    grid: Grid1D
    samples: np.ndarray
    budget: int = DEFAULT_BUDGET
    exact: ExactFn | None = field(default=None, compare=False)

    def __post_init__(self):
        s = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "samples", s)
        if s.shape != (self.grid.n,):
            raise ValueError("one sample per node required")
        if not np.all(np.isfinite(s)):
            raise ValueError("field samples must be finite")

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes


def field_from_fn(grid: Grid1D, fn: ExactFn, budget: int = 64) -> Field1D:
    return Field1D(grid, fn(grid.nodes, 0), budget=budget, exact=fn)


def poly_field(grid: Grid1D, poly: np.polynomial.Polynomial) -> Field1D:
    derivs = {0: poly}

    def ev(xq, m):
        if m not in derivs:
            derivs[m] = poly.deriv(m) if m <= poly.degree() else None
        p = derivs[m]
        if p is None or m > poly.degree():
            return np.zeros_like(np.asarray(xq, dtype=float))
        return p(xq)

    return field_from_fn(grid, ev)


def derivative(f: Field1D, order: int) -> Field1D:
    """Finite-difference derivative of declared accuracy (p>=4 one-sided)."""
    if order == 0:
        return f
    if order < 0:
        raise ValueError("derivative order must be >= 0")
    if f.exact is not None:
        fn = f.exact
        shifted: ExactFn = lambda xq, m, _o=order: fn(xq, m + _o)
        return Field1D(f.grid, fn(f.grid.nodes, order), budget=f.budget, exact=shifted)
    if order > f.budget:
        raise InsufficientResolution(
            f"derivative order {order} exceeds smoothness budget {f.budget}"
        )
    if f.grid.n < 4 * order:
        raise InsufficientResolution(
            f"grid has {f.grid.n} nodes; need >= {4 * order} for order {order}"
        )
    idx, wts = _diff_stencils(f.grid, order)
    vals = np.einsum("ij,ij->i", wts, f.samples[idx])
    return Field1D(f.grid, vals, budget=max(f.budget - order, 0))


def sample_at(f: Field1D, xq: np.ndarray, stencil: int = RESAMPLE_STENCIL) -> np.ndarray:
    """Evaluate a field at arbitrary points by local Lagrange interpolation."""
    xq = np.atleast_1d(np.asarray(xq, dtype=np.float64))
    if f.exact is not None:
        return f.exact(xq, 0)
    x = f.grid.nodes
    n = x.size
    stencil = min(stencil, n)
    lo_span = x[min(stencil, n) - 1] - x[0]
    hi_span = x[-1] - x[-min(stencil, n)]
    if np.any(xq < x[0] - lo_span) or np.any(xq > x[-1] + hi_span):
        raise OutOfHull("resample target beyond source hull plus one stencil width")
    pos = np.searchsorted(x, xq)
    start = np.clip(pos - stencil // 2, 0, n - stencil)
    cols = start[:, None] + np.arange(stencil)[None, :]
    xs = x[cols]
    fs = f.samples[cols]
    # barycentric weights per query stencil
    diff = xs[:, :, None] - xs[:, None, :]
    np.einsum("qii->qi", diff)[:] = 1.0
    w = 1.0 / np.prod(diff, axis=2)
    d = xq[:, None] - xs
    hit = np.isclose(d, 0.0, rtol=0.0, atol=1e-300)
    d = np.where(hit, 1.0, d)
    num = np.sum(w * fs / d, axis=1)
    den = np.sum(w / d, axis=1)
    out = num / den
    if np.any(hit):
        rows, colsh = np.nonzero(hit)
        out[rows] = fs[rows, colsh]
    return out


def interp_matrix(grid: Grid1D, xq: np.ndarray, stencil: int = RESAMPLE_STENCIL):
    """Sparse matrix mapping node values to interpolated values at xq."""
    from scipy.sparse import csr_matrix

    xq = np.atleast_1d(np.asarray(xq, dtype=np.float64))
    x = grid.nodes
    n = x.size
    stencil = min(stencil, n)
    pos = np.searchsorted(x, xq)
    start = np.clip(pos - stencil // 2, 0, n - stencil)
    cols = start[:, None] + np.arange(stencil)[None, :]
    xs = x[cols]
    diff = xs[:, :, None] - xs[:, None, :]
    np.einsum("qii->qi", diff)[:] = 1.0
    wb = 1.0 / np.prod(diff, axis=2)
    d = xq[:, None] - xs
    hit = np.isclose(d, 0.0, rtol=0.0, atol=1e-300)
    d = np.where(hit, 1.0, d)
    lag = wb / d
    lag = lag / np.sum(lag, axis=1)[:, None]
    rows_hit, cols_hit = np.nonzero(hit)
    if rows_hit.size:
        lag[rows_hit, :] = 0.0
        lag[rows_hit, cols_hit] = 1.0
    rows = np.repeat(np.arange(xq.size), stencil)
    return csr_matrix((lag.ravel(), (rows, cols.ravel())), shape=(xq.size, n))


def resample(f: Field1D, target: Grid1D, stencil: int = RESAMPLE_STENCIL) -> Field1D:
    """Interpolate a field onto a target grid (order matches FD accuracy)."""
    if target is f.grid or (
        target.n == f.grid.n and np.array_equal(target.nodes, f.grid.nodes)
    ):
        return Field1D(target, f.samples.copy(), budget=f.budget, exact=f.exact)
    vals = sample_at(f, target.nodes, stencil=stencil)
    return Field1D(target, vals, budget=f.budget, exact=f.exact)


def rho_r_convert(value, kappa: float, direction: str = "rho_to_r"):
    """Convert between density and the defining variable r = ((k+1)/k) rho^k."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    v = np.asarray(value, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("conversion defined for nonnegative values")
    c = (kappa + 1.0) / kappa
    if direction == "rho_to_r":
        out = c * v**kappa
    elif direction == "r_to_rho":
        out = (v / c) ** (1.0 / kappa)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return float(out) if np.isscalar(value) else out


@dataclass(frozen=True)
class State:
    """The pair (r, v) on a vacuum interval, with kappa and located boundaries.

    r has units of velocity^2 under the parabolic scaling; the sound speed
    is c_s^2 = kappa * r, so r must vanish simply at both boundaries.
    """

    r: Field1D
    v: Field1D
    kappa: float
    bounds: tuple[float, float]

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.r.grid is not self.v.grid and not np.array_equal(
            self.r.grid.nodes, self.v.grid.nodes
        ):
            raise ValueError("r and v must share a grid")

    @property
    def grid(self) -> Grid1D:
        return self.r.grid

    @property
    def domain_length(self) -> float:
        return self.bounds[1] - self.bounds[0]

    def rx(self) -> Field1D:
        return derivative(self.r, 1)

    def vx(self) -> Field1D:
        return derivative(self.v, 1)


def _bisect_root(f: Field1D, lo: float, hi: float, tol: float) -> float:
    if f.exact is not None:
        ev = lambda x: float(f.exact(np.array([x]), 0)[0])
    else:
        # freeze the local interpolation stencil once; bisection then runs
        # on a scalar barycentric evaluation
        x = f.grid.nodes
        n = x.size
        st = min(RESAMPLE_STENCIL, n)
        pos = int(np.searchsorted(x, 0.5 * (lo + hi)))
        start = min(max(pos - st // 2, 0), n - st)
        xs = x[start : start + st]
        fs = f.samples[start : start + st]
        diff = xs[:, None] - xs[None, :]
        np.fill_diagonal(diff, 1.0)
        wb = 1.0 / np.prod(diff, axis=1)

        def ev(xq):
            d = xq - xs
            if np.any(d == 0.0):
                return float(fs[np.argmin(np.abs(d))])
            lag = wb / d
            return float(np.sum(lag * fs) / np.sum(lag))

    flo, fhi = ev(lo), ev(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        # interpolant does not change sign inside the sample bracket; fall
        # back to the sample-level bracket endpoint closest to zero
        return lo if abs(flo) < abs(fhi) else hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = ev(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def make_state(
    r_values,
    v_values,
    kappa: float,
    grid: Grid1D,
    *,
    budget: int = DEFAULT_BUDGET,
    r_exact: ExactFn | None = None,
    v_exact: ExactFn | None = None,
    collar_frac: float = 0.1,
    c0_frac: float = 1e-3,
    regrid: bool | None = None,
) -> State:
    """Build a State, locating the boundaries by root bracketing on r.

    r may dip negative beyond the roots (regularized states); it must stay
    positive on a single interval inside. If the located roots are interior
    to the grid, fields are resampled onto a fresh graded grid over the
    domain unless regrid=False.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    r = np.asarray(r_values, dtype=np.float64)
    v = np.asarray(v_values, dtype=np.float64)
    x = grid.nodes
    ztol = 1e-12 * max(1.0, float(np.max(np.abs(r))))
    pos = np.nonzero(r > ztol)[0]
    if pos.size == 0:
        raise DegenerateBoundary("r has no positive region")
    i0, i1 = int(pos[0]), int(pos[-1])
    interior = r[i0 : i1 + 1]
    if np.any(interior < -ztol):
        raise NegativeInterior("r is negative strictly inside the domain")
    if np.any(interior <= ztol):
        raise DegenerateBoundary("r vanishes on a subinterval inside the domain")
    if i0 == 0 and r[0] > ztol:
        raise DegenerateBoundary("r positive at the left grid edge; boundary not captured")
    if i1 == x.size - 1 and r[-1] > ztol:
        raise DegenerateBoundary("r positive at the right grid edge; boundary not captured")

    rf = Field1D(grid, r, budget=budget, exact=r_exact)
    vf = Field1D(grid, v, budget=budget, exact=v_exact)
    tol = 1e-14 * grid.length
    if i0 == 0:
        gm = float(x[0])
    else:
        gm = _bisect_root(rf, float(x[i0 - 1]), float(x[i0]), tol)
    if i1 == x.size - 1:
        gp = float(x[-1])
    else:
        gp = _bisect_root(rf, float(x[i1]), float(x[i1 + 1]), tol)
    if gp - gm <= 0:
        raise DegenerateBoundary("located boundaries do not bound an interval")

    # nondegeneracy screen: |dr/dx| >= c0 within the boundary collars
    rx = derivative(rf, 1).samples
    sup_slope = float(np.max(np.abs(rx)))
    if sup_slope == 0.0:
        raise DegenerateBoundary("r is flat; no nondegenerate boundary")
    c0 = c0_frac * sup_slope
    rmax = float(np.max(r))
    collar = (r <= collar_frac * rmax) & (np.arange(x.size) >= i0) & (
        np.arange(x.size) <= i1
    )
    for side, g in (("left", gm), ("right", gp)):
        near = collar & (np.abs(x - g) <= 0.5 * (gp - gm))
        if near.any() and np.min(np.abs(rx[near])) < c0:
            raise DegenerateBoundary(
                f"|dr/dx| < c0 = {c0:.3e} in the {side} boundary collar"
            )

    ends_match = abs(gm - x[0]) <= tol and abs(gp - x[-1]) <= tol
    if regrid is None:
        regrid = not ends_match
    if regrid and not ends_match:
        fresh = graded_grid(gm, gp, grid.n)
        rf = resample(rf, fresh)
        vf = resample(vf, fresh)
        rs = rf.samples.copy()
        rs[0] = 0.0
        rs[-1] = 0.0
        rs[1:-1] = np.maximum(rs[1:-1], 0.0)
        rf = Field1D(fresh, rs, budget=rf.budget, exact=rf.exact)
    return State(rf, vf, float(kappa), (gm, gp))


def translate_state(state: State, c: float) -> State:
    """Shift a state in space; norms built on it are exactly invariant."""
    g = Grid1D(state.grid.nodes + c, grading=state.grid.grading)
    r = Field1D(g, state.r.samples.copy(), budget=state.r.budget)
    v = Field1D(g, state.v.samples.copy(), budget=state.v.budget)
    return State(r, v, state.kappa, (state.bounds[0] + c, state.bounds[1] + c))


def save_state(state: State, stem: str) -> None:
    """Write <stem>.csv columns (x, r, v) and a <stem>.json header."""
    with open(stem + ".csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "r", "v"])
        for x, r, v in zip(state.grid.nodes, state.r.samples, state.v.samples):
            w.writerow([repr(float(x)), repr(float(r)), repr(float(v))])
    header = {
        "schema": 1,
        "kappa": state.kappa,
        "bounds": list(state.bounds),
        "grid": state.grid.descriptor(),
    }
    with open(stem + ".json", "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_state(stem: str) -> State:
    with open(stem + ".json") as fh:
        header = json.load(fh)
    xs, rs, vs = [], [], []
    with open(stem + ".csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            xs.append(float(row[0]))
            rs.append(float(row[1]))
            vs.append(float(row[2]))
    grid = Grid1D(np.asarray(xs), grading=header["grid"]["grading"])
    return make_state(np.asarray(rs), np.asarray(vs), header["kappa"], grid)
