"""Independent reference solutions.

Two oracles: the exact affine family v = beta x, r = alpha (1 - x^2/R^2),
whose evolution closes to a three-dimensional ODE system, and a staggered
Lagrangian mass-coordinate solver. They are cross-validated against each
other before either is allowed to judge the time stepper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from .errors import DomainsDisjoint, OdeBlowup, TimestepCollapse
from . import distance as _distance
from .grid import (
    Field1D,
    State,
    graded_grid,
    make_state,
    poly_field,
    rho_r_convert,
    sample_at,
)
from .wspace import h_norm


@dataclass(frozen=True)
class AffineParams:
    alpha: float
    beta: float
    R: float
    kappa: float

    def __post_init__(self):
        if self.alpha <= 0 or self.R <= 0 or self.kappa <= 0:
            raise ValueError("alpha, R, kappa must be positive")


def _affine_rhs(t, y, kappa):
    alpha, beta, R = y
    return [-kappa * alpha * beta, 2.0 * alpha / R**2 - beta**2, beta * R]


class AffineSolution:
    """Integrated affine trajectory; exact solution family of the system.

    Substituting v = beta x, r = alpha (1 - x^2/R^2) into the equations
    closes to R' = beta R, alpha' = -kappa alpha beta,
    beta' = 2 alpha / R^2 - beta^2.
    """

    def __init__(
        self, params0: AffineParams, t_max: float, t_min: float = 0.0, rtol=1e-12, atol=1e-14
    ):
        self.params0 = params0
        self.kappa = params0.kappa
        self.t_max = float(t_max)
        self.t_min = float(min(t_min, 0.0))
        y0 = [params0.alpha, params0.beta, params0.R]
        kw = dict(
            args=(self.kappa,), method="DOP853", rtol=rtol, atol=atol, dense_output=True
        )
        sol = solve_ivp(_affine_rhs, (0.0, self.t_max), y0, **kw)
        if not sol.success:
            raise OdeBlowup(f"affine ODE integration failed: {sol.message}")
        self._sol = sol
        self._sol_back = None
        if self.t_min < 0.0:
            back = solve_ivp(_affine_rhs, (0.0, self.t_min), y0, **kw)
            if not back.success:
                raise OdeBlowup(f"affine ODE backward integration failed: {back.message}")
            self._sol_back = back

    def params(self, t: float) -> AffineParams:
        if not self.t_min - 1e-12 <= t <= self.t_max + 1e-12:
            raise ValueError("t outside integrated range")
        if t < 0.0 and self._sol_back is not None:
            alpha, beta, R = self._sol_back.sol(max(t, self.t_min))
        else:
            alpha, beta, R = self._sol.sol(min(max(t, 0.0), self.t_max))
        if alpha <= 0 or R <= 0:
            raise OdeBlowup(f"affine trajectory degenerate at t={t}")
        return AffineParams(float(alpha), float(beta), float(R), self.kappa)

    def state(self, t: float, n: int = 192) -> State:
        p = self.params(t)
        grid = graded_grid(-p.R, p.R, n)
        pr = Polynomial([p.alpha, 0.0, -p.alpha / p.R**2])
        pv = Polynomial([0.0, p.beta])
        r = poly_field(grid, pr)
        v = poly_field(grid, pv)
        return make_state(
            r.samples, v.samples, self.kappa, grid, r_exact=r.exact, v_exact=v.exact
        )

    def pde_residual(self, ts, n: int = 512) -> float:
        """Sup residual of the ansatz in the PDE, using the ODE right side
        for the time derivatives; must be roundoff-small before the oracle
        is trusted."""
        worst = 0.0
        for t in ts:
            p = self.params(t)
            da, db, dR = _affine_rhs(t, [p.alpha, p.beta, p.R], self.kappa)
            x = np.linspace(-p.R, p.R, n)
            shape = 1.0 - x**2 / p.R**2
            r_t = da * shape + 2.0 * p.alpha * x**2 * dR / p.R**3
            r_x = -2.0 * p.alpha * x / p.R**2
            v = p.beta * x
            v_t = db * x
            res1 = r_t + v * r_x + self.kappa * (p.alpha * shape) * p.beta
            res2 = v_t + v * p.beta + r_x
            worst = max(worst, float(np.max(np.abs(res1))), float(np.max(np.abs(res2))))
        return worst

    def mass(self, t: float, nq: int = 2000) -> float:
        p = self.params(t)
        x = np.linspace(-p.R, p.R, nq)
        r = p.alpha * (1.0 - x**2 / p.R**2)
        rho = rho_r_convert(np.maximum(r, 0.0), self.kappa, "r_to_rho")
        return float(np.trapezoid(rho, x))


def affine_state(params0: AffineParams, t: float, n: int = 192) -> State:
    """State of the affine solution at time t (integrating from params0)."""
    if t == 0.0:
        return AffineSolution(params0, max(t, 1e-9)).state(0.0, n)
    return AffineSolution(params0, t).state(t, n)


def _mass_grid(state: State, nm: int):
    """Uniform-mass cell edges and edge velocities from an Eulerian state."""
    a, b = state.bounds
    xs = np.linspace(a, b, 8 * nm + 1)
    r = np.maximum(sample_at(state.r, xs), 0.0)
    rho = rho_r_convert(r, state.kappa, "r_to_rho")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(xs))])
    total = cum[-1]
    targets = np.linspace(0.0, total, nm + 1)
    edges = np.interp(targets, cum, xs)
    edges[0], edges[-1] = a, b
    u = sample_at(state.v, edges)
    dm = np.diff(targets)
    return edges, u, dm, total


def lagrangian_reference(
    state0: State, T: float, resolution: int, cfl: float = 0.3, n_out: int | None = None
) -> State:
    """Fixed-mass-grid staggered solver advanced to time T.

    Solves d tau/dt = du/dm, du/dt = -dp/dm with p = tau^-(kappa+1) and the
    physical-vacuum endpoint pressure p -> 0, by RK4 in time on the method
    of lines; second order in the mass spacing.
    """
    kappa = state0.kappa
    gamma = kappa + 1.0
    edges, u, dm, _ = _mass_grid(state0, resolution)
    dm_edge = np.empty(resolution + 1)
    dm_edge[1:-1] = 0.5 * (dm[1:] + dm[:-1])
    dm_edge[0] = 0.5 * dm[0]
    dm_edge[-1] = 0.5 * dm[-1]

    def rhs(y):
        x = y[: resolution + 1]
        vel = y[resolution + 1 :]
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise TimestepCollapse("mass cells inverted")
        tau = dx / dm
        p = tau**-gamma
        dp = np.empty(resolution + 1)
        dp[1:-1] = p[1:] - p[:-1]
        dp[0] = p[0] - 0.0
        dp[-1] = 0.0 - p[-1]
        return np.concatenate([vel, -dp / dm_edge])

    y = np.concatenate([edges, u])
    t = 0.0
    steps = 0
    while t < T - 1e-14:
        x = y[: resolution + 1]
        dx = np.diff(x)
        tau = dx / dm
        rho = 1.0 / tau
        cs = np.sqrt(gamma * rho**kappa)
        dt = cfl * float(np.min(dx / cs))
        if dt < 1e-12 * max(T, 1.0):
            raise TimestepCollapse(f"CFL step collapsed to {dt}")
        dt = min(dt, T - t)
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        steps += 1
        if steps > 2_000_000:
            raise TimestepCollapse("step budget exhausted")

    x = y[: resolution + 1]
    vel = y[resolution + 1 :]
    tau = np.diff(x) / dm
    r_cells = rho_r_convert(1.0 / tau, kappa, "rho_to_r")
    xc = 0.5 * (x[:-1] + x[1:])
    xs = np.concatenate([[x[0]], xc, [x[-1]]])
    rs = np.concatenate([[0.0], r_cells, [0.0]])
    n_out = n_out or state0.grid.n
    grid = graded_grid(float(x[0]), float(x[-1]), n_out)
    r_interp = np.interp(grid.nodes, xs, rs)
    # quadratic-in-rho endpoint model keeps the simple vacuum profile exact
    v_interp = np.interp(grid.nodes, x, vel)
    r_interp[0] = 0.0
    r_interp[-1] = 0.0
    return make_state(r_interp, v_interp, kappa, grid, budget=3)


def compare(s1: State, s2: State) -> dict:
    """Sup gap, energy-space gap and distance functional on the common domain."""
    lo = max(s1.bounds[0], s2.bounds[0])
    hi = min(s1.bounds[1], s2.bounds[1])
    if hi <= lo:
        raise DomainsDisjoint("states share no common domain")
    n = max(s1.grid.n, s2.grid.n)
    grid = graded_grid(lo, hi, n)
    r1 = sample_at(s1.r, grid.nodes)
    r2 = sample_at(s2.r, grid.nodes)
    v1 = sample_at(s1.v, grid.nodes)
    v2 = sample_at(s2.v, grid.nodes)
    sup_gap = max(float(np.max(np.abs(r1 - r2))), float(np.max(np.abs(v1 - v2))))
    rbar = Field1D(grid, np.maximum(0.5 * (r1 + r2), 0.0))
    dr = Field1D(grid, r1 - r2)
    dv = Field1D(grid, v1 - v2)
    kappa = s1.kappa
    h_gap = h_norm(dr, dv, rbar, kappa)
    d_h = _distance.distance_DH(s1, s2)
    return {"sup_gap": sup_gap, "h_gap": h_gap, "d_h": d_h}


@dataclass(frozen=True)
class OracleGate:
    """Outcome of the affine-vs-Lagrangian cross-validation."""

    resolutions: tuple
    h_gaps: tuple
    sup_gaps: tuple
    order: float
    passed: bool


def cross_validate(
    params0: AffineParams,
    T: float,
    resolutions=(100, 200, 400),
    n_grid: int = 256,
    min_order: float = 1.9,
) -> OracleGate:
    """Refinement study of the two oracles against each other.

    If the fitted convergence order of the Lagrangian solver toward the
    affine solution falls below `min_order`, the gate fails and no stepper
    verdict may be issued.
    """
    sol = AffineSolution(params0, T)
    ref = sol.state(T, n_grid)
    state0 = sol.state(0.0, n_grid)
    hs, sups = [], []
    for nm in resolutions:
        lag = lagrangian_reference(state0, T, nm, n_out=n_grid)
        gaps = compare(ref, lag)
        hs.append(gaps["h_gap"])
        sups.append(gaps["sup_gap"])
    logs = np.log(np.asarray(hs))
    logn = np.log(np.asarray(resolutions, dtype=float))
    order = float(-np.polyfit(logn, logs, 1)[0])
    return OracleGate(
        resolutions=tuple(resolutions),
        h_gaps=tuple(hs),
        sup_gaps=tuple(sups),
        order=order,
        passed=order >= min_order,
    )
