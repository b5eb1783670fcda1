"""Nonlinear distance functionals between states on different domains.

D_H is nondegenerate at the free boundary and controls the boundary gap;
the degenerate variant D~_H replaces the weights by a homogeneous pair
(a, b) = (A(nu/mu), mu a / 2) whose profile carries one moment condition,
enforced by a correction constant solved at build time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import (
    DegenerateDenominator,
    DomainsDisjoint,
    KappaMismatch,
    NoRoot,
)
from .grid import Field1D, Grid1D, State, sample_at
from .wspace import weight_quadrature

LIPSCHITZ_GATE = 0.2  # boundary Hausdorff gap vs min domain length


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=np.float64)
    f = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    g = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return f / (f + g)


def _smoothstep_prime(t):
    t = np.asarray(t, dtype=np.float64)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    f = np.exp(-1.0 / tt)
    g = np.exp(-1.0 / (1.0 - tt))
    fp = f / tt**2
    gp = -g / (1.0 - tt) ** 2
    val = (fp * g - f * gp) / (f + g) ** 2
    return np.where(inside, val, 0.0)


def _plateau(theta):
    """Even profile: 1 on |theta|<=1/4, smooth descent to 0 at |theta|=1/2."""
    u = (0.5 - np.abs(np.asarray(theta, dtype=np.float64))) / 0.25
    return _smoothstep(u)


def _plateau_prime(theta):
    th = np.asarray(theta, dtype=np.float64)
    return _smoothstep_prime((0.5 - np.abs(th)) / 0.25) * (-np.sign(th) / 0.25)


def _bump(theta):
    """Even nonnegative bump supported in 1/4 < |theta| < 1/2, max 1."""
    u = (np.abs(np.asarray(theta, dtype=np.float64)) - 0.375) / 0.125
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - uu**2)), 0.0)


def _bump_prime(theta):
    th = np.asarray(theta, dtype=np.float64)
    u = (np.abs(th) - 0.375) / 0.125
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    base = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - uu**2)), 0.0)
    dbase = base * (-2.0 * uu / np.maximum((1.0 - uu**2) ** 2, 1e-300))
    return dbase * np.sign(th) / 0.125


@dataclass(frozen=True)
class WeightProfile:
    """Homogeneous weight pair for the degenerate distance functional.

    a(mu, nu) = A(nu/mu) with A = plateau + C * bump, b = mu a / 2.  The
    correction C makes the mu-moment integral of a_mu vanish, which by
    0-homogeneity reduces to a theta-integral.
    """

    kappa: float
    C: float

    @property
    def sigma(self) -> float:
        return 1.0 / self.kappa

    def A(self, theta):
        return _plateau(theta) + self.C * _bump(theta)

    def A_prime(self, theta):
        return _plateau_prime(theta) + self.C * _bump_prime(theta)

    def a(self, mu, nu):
        mu = np.asarray(mu, dtype=np.float64)
        nu = np.asarray(nu, dtype=np.float64)
        theta = np.where(mu > 0, nu / np.maximum(mu, 1e-300), 1.0)
        return np.where(mu > 0, self.A(theta), 0.0)

    def b(self, mu, nu):
        return 0.5 * np.asarray(mu) * self.a(mu, nu)


def _theta_moment(sigma: float, C: float, nq: int = 120) -> float:
    """int_0^{1/2} theta^{-sigma} A'(theta) dtheta for A = plateau + C bump.

    The full mu-moment at fixed nu equals -(nu^sigma) times this value.
    """
    t, w = roots_legendre(nq)
    lo, hi = 0.25, 0.5
    x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t
    ww = 0.5 * (hi - lo) * w
    integ = x ** (-sigma) * (_plateau_prime(x) + C * _bump_prime(x))
    return float(np.dot(ww, integ))


def make_weight_profile(kappa: float, tol: float = 1e-12) -> WeightProfile:
    """Solve for the correction constant so the moment condition holds."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    sigma = 1.0 / kappa
    f = lambda C: _theta_moment(sigma, C)
    c_lo, c_hi = 0.0, 1.0
    f_lo = f(c_lo)
    tries = 0
    while f(c_hi) * f_lo > 0:
        c_hi *= 2.0
        tries += 1
        if tries > 60:
            raise NoRoot("could not bracket the moment-correction constant")
    C = brentq(f, c_lo, c_hi, xtol=tol, rtol=8.9e-16)
    prof = WeightProfile(kappa=float(kappa), C=float(C))
    res = _theta_moment(sigma, C, nq=240)
    if abs(res) > 1e-10:
        raise NoRoot(f"moment residual {res:.2e} after solving for C")
    return prof


def moment_residual_mu(profile: WeightProfile, nu: float, nq: int = 12) -> float:
    """Independent audit: direct mu-quadrature of int mu^sigma a_mu dmu at
    fixed nu, with a_mu by central finite differences.

    Composite panels cluster on [2 nu, 4.5 nu] where a_mu lives; the sparse
    tail out to 1000 nu is integrated too (it contributes zero).
    """
    sigma = profile.sigma
    lo = (nu / 0.5) * (1.0 + 1e-6)
    hi = 1e3 * nu
    edges = np.concatenate(
        [np.linspace(lo, 4.5 * nu, 61), np.geomspace(4.5 * nu, hi, 11)[1:]]
    )
    t, w = roots_legendre(nq)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mu = 0.5 * (b + a) + 0.5 * (b - a) * t
        ww = 0.5 * (b - a) * w
        h = 1e-6 * mu
        a_mu = (profile.a(mu + h, nu) - profile.a(mu - h, nu)) / (2.0 * h)
        total += float(np.dot(ww, mu**sigma * a_mu))
    return total


def _overlap(s1: State, s2: State) -> tuple[float, float]:
    if abs(s1.kappa - s2.kappa) > 1e-12:
        raise KappaMismatch(f"kappa mismatch: {s1.kappa} vs {s2.kappa}")
    lo = max(s1.bounds[0], s2.bounds[0])
    hi = min(s1.bounds[1], s2.bounds[1])
    if hi <= lo:
        raise DomainsDisjoint("domains do not overlap")
    gap = max(
        abs(s1.bounds[0] - s2.bounds[0]), abs(s1.bounds[1] - s2.bounds[1])
    )
    min_len = min(s1.domain_length, s2.domain_length)
    if gap > LIPSCHITZ_GATE * min_len:
        raise DomainsDisjoint(
            f"boundaries not Lipschitz-close: gap {gap:.3g} > "
            f"{LIPSCHITZ_GATE} * {min_len:.3g}"
        )
    return lo, hi


def _merged_grid(s1: State, s2: State, lo: float, hi: float) -> Grid1D:
    nodes = np.concatenate([s1.grid.nodes, s2.grid.nodes, [lo, hi]])
    nodes = np.unique(nodes[(nodes >= lo) & (nodes <= hi)])
    nodes[0], nodes[-1] = lo, hi
    keep = np.concatenate([[True], np.diff(nodes) > 1e-13 * (hi - lo)])
    nodes = nodes[keep]
    if nodes.size < 16:
        nodes = np.linspace(lo, hi, 16)
    return Grid1D(nodes, grading="custom")


def _pair_quadrature(s1: State, s2: State, power: float):
    """Quadrature points/weights for int (r1+r2)^power (...) dx on the
    common domain, plus the four field samples at the points."""
    lo, hi = _overlap(s1, s2)
    grid = _merged_grid(s1, s2, lo, hi)
    r1g = np.maximum(sample_at(s1.r, grid.nodes), 0.0)
    r2g = np.maximum(sample_at(s2.r, grid.nodes), 0.0)
    wfield = Field1D(grid, r1g + r2g, budget=1)
    xq, wq = weight_quadrature(wfield, power)
    r1 = np.maximum(sample_at(s1.r, xq), 0.0)
    r2 = np.maximum(sample_at(s2.r, xq), 0.0)
    v1 = sample_at(s1.v, xq)
    v2 = sample_at(s2.v, xq)
    return xq, wq, r1, r2, v1, v2


def distance_DH(s1: State, s2: State) -> float:
    """Nondegenerate distance
    int (r1+r2)^{sigma-1} ((r1-r2)^2 + kappa (r1+r2)(v1-v2)^2) dx."""
    kappa = s1.kappa
    sigma = 1.0 / kappa
    _, wq, r1, r2, v1, v2 = _pair_quadrature(s1, s2, sigma - 1.0)
    mu = r1 + r2
    dr2 = (r1 - r2) ** 2
    dv2 = (v1 - v2) ** 2
    return float(np.dot(wq, dr2 + kappa * mu * dv2))


def distance_DH_tilde(s1: State, s2: State, profile: WeightProfile) -> float:
    """Degenerate distance with boundary-vanishing weights a, b = mu a/2."""
    kappa = s1.kappa
    if abs(profile.kappa - kappa) > 1e-12:
        raise KappaMismatch("profile built for a different kappa")
    sigma = 1.0 / kappa
    _, wq, r1, r2, v1, v2 = _pair_quadrature(s1, s2, sigma - 1.0)
    mu = r1 + r2
    nu = r1 - r2
    a = profile.a(mu, nu)
    b = 0.5 * mu * a
    return float(np.dot(wq, a * nu**2 + kappa * b * (v1 - v2) ** 2))


def boundary_gap(s1: State, s2: State) -> float:
    """Sum over the two common-boundary points of (r1+r2)^{sigma+2}."""
    lo, hi = _overlap(s1, s2)
    sigma = 1.0 / s1.kappa
    pts = np.array([lo, hi])
    r1 = np.maximum(sample_at(s1.r, pts), 0.0)
    r2 = np.maximum(sample_at(s2.r, pts), 0.0)
    return float(np.sum((r1 + r2) ** (sigma + 2.0)))


def equivalence_ratio(s1: State, s2: State, profile: WeightProfile) -> float:
    """(D_H + boundary gap) / D~_H; the content of the equivalence lemma."""
    d = distance_DH(s1, s2)
    g = boundary_gap(s1, s2)
    dt = distance_DH_tilde(s1, s2, profile)
    lo, hi = _overlap(s1, s2)
    sup_mu = float(
        np.max(np.maximum(sample_at(s1.r, s1.grid.nodes), 0.0))
        + np.max(np.maximum(sample_at(s2.r, s2.grid.nodes), 0.0))
    )
    scale = sup_mu ** (profile.sigma + 1.0) * (hi - lo)
    if dt < 1e-14 * max(scale, 1e-300):
        raise DegenerateDenominator("states too close; degenerate distance vanishes")
    return (d + g) / dt
