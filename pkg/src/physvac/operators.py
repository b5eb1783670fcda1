"""Degenerate elliptic transition operators in weighted inner products.

Everything is assembled from bilinear forms built on the weighted
quadrature, never from the strong operators: stiffness matrices come out
symmetric positive semidefinite by construction, which is what the
self-adjointness and nonnegativity statements assert in the continuum.
Boundary conditions are never imposed; the vanishing weight supplies all
the decay.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import SpectralFailure, WeightFailure
from .grid import Field1D, Grid1D, _diff_stencils, interp_matrix, sample_at
from .wspace import WeightedNormSpec, weight_quadrature, weighted_norm

DESK_SCALE_MAX = 2048


def _diff_matrix(grid: Grid1D):
    from scipy.sparse import csr_matrix

    idx, wts = _diff_stencils(grid, 1)
    n, s = idx.shape
    rows = np.repeat(np.arange(n), s)
    return csr_matrix((wts.ravel(), (rows, idx.ravel())), shape=(n, n))


@dataclass
class WeightedOperator:
    """Symmetric realization of a transition operator.

    The generalized pencil (stiffness, mass) represents the nonnegative
    operator -L in the inner product <f, g> = int r^{2 tau} f g dx;
    `apply` returns the native L (so L1 applied to s gives
    kappa r s'' + (1 + b kappa) r' s' up to discretization).
    """

    kind: str
    kappa: float
    b: float
    two_tau: float
    grid: Grid1D
    r: Field1D
    stiffness: np.ndarray
    mass: np.ndarray
    _mass_chol: tuple = field(default=None, repr=False)
    _spectral: tuple = field(default=None, repr=False)

    def apply(self, samples: np.ndarray) -> np.ndarray:
        if self._mass_chol is None:
            self._mass_chol = cho_factor(self.mass)
        return -cho_solve(self._mass_chol, self.stiffness @ samples)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(f @ (self.mass @ g))

    def selfadjoint_defect(self, f: np.ndarray, g: np.ndarray) -> float:
        """|<Lf, g> - <f, Lg>| / scale in the operator's inner product."""
        a = float(f @ (self.stiffness @ g))
        bb = float(g @ (self.stiffness @ f))
        scale = max(abs(a), abs(bb), 1e-300)
        return abs(a - bb) / scale

    def spectral(self):
        if self._spectral is not None:
            return self._spectral
        if self.grid.n > DESK_SCALE_MAX:
            raise SpectralFailure(f"n = {self.grid.n} beyond desk scale")
        try:
            lam, U = eigh(self.stiffness, self.mass)
        except np.linalg.LinAlgError as exc:
            raise SpectralFailure(f"generalized eigensolve failed: {exc}") from exc
        self._spectral = (lam, U)
        return self._spectral


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns orthonormal in the weighted inner product
    op: WeightedOperator

    def residual(self, i: int) -> float:
        lam = self.eigenvalues[i]
        u = self.vectors[:, i]
        res = self.op.stiffness @ u - lam * (self.op.mass @ u)
        return float(np.linalg.norm(res) / (1.0 + abs(lam)))


def spectral_decomposition(op: WeightedOperator, tol: float = 1e-8) -> SpectralDecomposition:
    lam, U = op.spectral()
    lmax = float(np.max(np.abs(lam))) or 1.0
    if np.min(lam) < -tol * lmax:
        raise SpectralFailure(f"negative eigenvalue {np.min(lam):.3e} of the pencil")
    return SpectralDecomposition(lam, U, op)


def _quad_operators(r: Field1D, nq: int = 8):
    grid = r.grid
    xq, _ = weight_quadrature(r, 0.0, nq=nq)
    P = interp_matrix(grid, xq)
    D = _diff_matrix(grid)
    return xq, P, P @ D


def assemble_L1(r: Field1D, kappa: float, b: float = 0.0) -> WeightedOperator:
    """First transition operator kappa r s'' + (1 + b kappa) r' s'.

    For b = 0 this is the exact divergence form
    kappa r^{-(1-k)/k} d(r^{1/k} d .), symmetric in L^2(r^{(1-k)/k});
    general b shifts the weight to r^{(1 + b k - k)/k}.
    """
    if kappa <= 0:
        raise WeightFailure("kappa must be positive")
    two_tau = (1.0 + b * kappa - kappa) / kappa
    if two_tau <= -1.0:
        raise WeightFailure(f"operator weight exponent {two_tau} not integrable")
    grid = r.grid
    xq, P, PD = _quad_operators(r)
    _, w_mass = weight_quadrature(r, two_tau)
    _, w_stiff = weight_quadrature(r, two_tau + 1.0)
    M = P.T @ (P.multiply(w_mass[:, None]))
    S = kappa * (PD.T @ (PD.multiply(w_stiff[:, None])))
    M = np.asarray(M.todense())
    S = np.asarray(S.todense())
    return WeightedOperator(
        kind="L1" if b == 0.0 else "L1b",
        kappa=float(kappa),
        b=float(b),
        two_tau=two_tau,
        grid=grid,
        r=r,
        stiffness=0.5 * (S + S.T),
        mass=0.5 * (M + M.T),
    )


def assemble_L2_tilde(r: Field1D, kappa: float, b: float = 0.0) -> WeightedOperator:
    """Second-order reduction kappa r w'' + (1 + kappa + b kappa) r' w' of
    the velocity transition operator, symmetric in L^2(r^{1/kappa})."""
    op = assemble_L1(r, kappa, b=b + 1.0)
    op.kind = "L2tilde"
    op.b = float(b)
    return op


def assemble_L2L3(r: Field1D, kappa: float) -> WeightedOperator:
    """Velocity transition operator kappa d(r dw) + d(r' w) via the
    integrated-by-parts form; in 1D the curl operator L3 vanishes
    identically, so this is the full L2 + L3.

    -<L2 w, w~> = int r^{1/k - 1} (sqrt(k) r w' + r' w / sqrt(k))^2-type
    products, a manifestly PSD factored form.
    """
    if kappa <= 0:
        raise WeightFailure("kappa must be positive")
    grid = r.grid
    xq, P, PD = _quad_operators(r)
    _, w_mass = weight_quadrature(r, 1.0 / kappa)
    _, w_q = weight_quadrature(r, 1.0 / kappa - 1.0)
    rq = np.maximum(sample_at(r, xq), 0.0)
    rxq = sample_at(Field1D(grid, np.asarray((_diff_matrix(grid) @ r.samples))), xq)
    sk = math.sqrt(kappa)
    G = (PD.multiply((sk * rq)[:, None])) + (P.multiply((rxq / sk)[:, None]))
    S = G.T @ (G.multiply(w_q[:, None]))
    M = P.T @ (P.multiply(w_mass[:, None]))
    S = np.asarray(S.todense())
    M = np.asarray(M.todense())
    return WeightedOperator(
        kind="L2L3",
        kappa=float(kappa),
        b=0.0,
        two_tau=1.0 / kappa,
        grid=grid,
        r=r,
        stiffness=0.5 * (S + S.T),
        mass=0.5 * (M + M.T),
    )


def default_chi(lam):
    """Smooth positive multiplier in (0, 1): ~ 1 - lam near 0, ~ 1/lam at
    infinity."""
    return 1.0 / (1.0 + np.asarray(lam, dtype=np.float64))


class SpectralMultiplier:
    """chi_eps(L) f = sum chi(eps lam_i) <f, u_i> u_i via the pencil."""

    def __init__(self, op: WeightedOperator, chi=default_chi, eps: float = 1.0):
        self.op = op
        self.eps = float(eps)
        lam, U = op.spectral()
        lam = np.maximum(lam, 0.0)
        self.factors = np.asarray(chi(self.eps * lam))
        if np.any(self.factors < 0) or np.any(self.factors > 1.0 + 1e-12):
            raise ValueError("multiplier must take values in [0, 1]")
        self._U = U
        self._UtM = U.T @ op.mass

    def apply(self, samples: np.ndarray) -> np.ndarray:
        coeffs = self._UtM @ samples
        return self._U @ (self.factors * coeffs)


def functional_calculus(op: WeightedOperator, chi=default_chi, eps: float = 1.0):
    return SpectralMultiplier(op, chi=chi, eps=eps)


def dump_spectrum(op: WeightedOperator, path: str) -> None:
    lam, _ = op.spectral()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "lambda"])
        for i, l in enumerate(lam):
            w.writerow([i, repr(float(l))])


def audit_coercivity(op: WeightedOperator, ensemble) -> dict:
    """Elliptic-estimate ratios over an ensemble of smooth fields.

    For the s-operator: ||s||_{H^{2,sigma+1/2}} over
    ||L1 s||_{H^{0,sigma-1/2}} + ||s||_{H^{0,sigma+1/2}}, sigma = 1/(2k);
    for the w-operators the (L2+L3) analogue with weights one half higher.
    """
    kappa = op.kappa
    sigma = 1.0 / (2.0 * kappa)
    if op.kind in ("L1", "L1b"):
        up, mid, low = sigma + 0.5, sigma - 0.5, sigma + 0.5
    else:
        up, mid, low = sigma + 1.0, sigma, sigma + 1.0
    ratios = []
    for f in ensemble:
        samples = f.samples if isinstance(f, Field1D) else np.asarray(f)
        ff = Field1D(op.grid, samples, budget=4)
        lf = Field1D(op.grid, op.apply(samples), budget=2)
        num = weighted_norm(ff, op.r, WeightedNormSpec(2, up))
        den = weighted_norm(lf, op.r, WeightedNormSpec(0, mid)) + weighted_norm(
            ff, op.r, WeightedNormSpec(0, low)
        )
        ratios.append(num / den if den > 0 else 0.0)
    return {
        "kind": op.kind,
        "sigma": sigma,
        "ratios": ratios,
        "max_ratio": max(ratios) if ratios else 0.0,
    }
