"""Synthetic initial states built from polynomials.

Polynomial profiles carry exact derivative evaluators, which keeps the
symbolic-numeric cross checks at quadrature accuracy instead of finite
difference accuracy; randomized ensembles rescale their perturbations so
the pointwise control norm stays under a requested cap.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .grid import State, graded_grid, make_state, poly_field
from .wspace import control_A


def poly_state(pr: Polynomial, pv: Polynomial, kappa: float, span, n: int = 192) -> State:
    """State from polynomial r and v profiles; pr must vanish at the span
    endpoints and stay positive inside."""
    grid = graded_grid(span[0], span[1], n)
    r = poly_field(grid, pr)
    v = poly_field(grid, pv)
    return make_state(
        r.samples, v.samples, kappa, grid, r_exact=r.exact, v_exact=v.exact, budget=32
    )


def parabolic_state(kappa: float, alpha: float = 0.5, R: float = 1.0, n: int = 192) -> State:
    pr = Polynomial([alpha, 0.0, -alpha / R**2])
    return poly_state(pr, Polynomial([0.0]), kappa, (-R, R), n)


def random_state(
    rng: np.random.Generator,
    kappa: float,
    n: int = 160,
    span=(-1.0, 1.0),
    alpha: float = 0.5,
    amp_r: float = 0.05,
    amp_v: float = 0.05,
    deg: int = 4,
    a_max: float | None = None,
) -> State:
    """Random smooth state: a parabola modulated by a small polynomial,
    plus a small polynomial velocity.

    If a_max is given, the perturbation amplitudes are shrunk until the
    control norm A fits under it (deterministic given the generator).
    """
    a, b = span
    base = Polynomial([-a * b, a + b, -1.0])  # (x - a)(b - x) >= 0 on span
    scale = 4.0 * alpha / (b - a) ** 2
    for _ in range(12):
        q = Polynomial([1.0] + list(amp_r * rng.uniform(-1.0, 1.0, deg)))
        pr = base * q * scale
        pv = Polynomial(amp_v * rng.uniform(-1.0, 1.0, deg))
        samples = pr(np.linspace(a, b, 64)[1:-1])
        if np.any(samples <= 0):
            amp_r *= 0.5
            continue
        st = poly_state(pr, pv, kappa, span)
        if a_max is None or control_A(st) <= a_max:
            if st.grid.n != n:
                st = poly_state(pr, pv, kappa, span, n)
            return st
        amp_r *= 0.5
        amp_v *= 0.5
    raise RuntimeError("could not fit the control-norm cap; lower amp or a_max")


def ensemble(
    rng: np.random.Generator, count: int, kappa: float, a_max: float | None = 0.1, **kw
) -> list[State]:
    return [random_state(rng, kappa, a_max=a_max, **kw) for _ in range(count)]


def rough_state(
    kappa: float,
    amp: float = 0.02,
    mode: int = 12,
    alpha: float = 0.5,
    n: int = 256,
) -> State:
    """Parabola with one controlled rough mode, for the dyadic
    regularization experiment.

    The Chebyshev oscillation is flattened by (1 - x^2)^2 near the
    endpoints: an unwindowed mode has local frequency ~ N^2/sqrt(1 - x^2),
    which diverges at the vacuum and swamps every boundary-collar norm.
    """
    cheb = Chebyshev.basis(mode).convert(kind=Polynomial)
    window = Polynomial([1.0, 0.0, -1.0]) ** 2
    base = Polynomial([alpha, 0.0, -alpha])
    pr = base * (Polynomial([1.0]) + amp * cheb * window)
    pv = amp * (Chebyshev.basis(max(mode - 1, 1)).convert(kind=Polynomial)) * window
    return poly_state(pr, pv, kappa, (-1.0, 1.0), n)


def nearby_pair(
    rng: np.random.Generator,
    kappa: float,
    gap: float = 1e-2,
    n: int = 192,
    alpha: float = 0.5,
) -> tuple[State, State]:
    """Two Lipschitz-close states whose distance functional is ~ gap^2."""
    base = random_state(rng, kappa, n=n, alpha=alpha, a_max=0.08)
    span = base.bounds
    a, b = span
    bump = Polynomial([-a * b, a + b, -1.0]) * (4.0 / (b - a) ** 2)
    dq = Polynomial(list(gap * rng.uniform(-1.0, 1.0, 3)))
    pr2 = _poly_of(base, "r") + bump * dq
    pv2 = _poly_of(base, "v") + Polynomial(list(gap * rng.uniform(-1.0, 1.0, 3)))
    other = poly_state(pr2, pv2, kappa, span, n)
    return base, other


def _poly_of(state: State, which: str) -> Polynomial:
    """Recover the generating polynomial of an exact field by fitting."""
    f = state.r if which == "r" else state.v
    if f.exact is None:
        raise ValueError("state was not built from polynomials")
    x = state.grid.nodes
    deg = 1
    while deg < 40:
        fit = Polynomial.fit(x, f.samples, deg).convert()
        if np.max(np.abs(fit(x) - f.samples)) <= 1e-12 * max(
            1.0, np.max(np.abs(f.samples))
        ):
            return fit
        deg += 1
    raise ValueError("field is not polynomial")
