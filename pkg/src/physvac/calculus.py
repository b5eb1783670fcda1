"""Symbolic material-derivative algebra over the pair (r, v).

Expressions are multilinear in spatial derivatives of r and v, with
coefficients kept as exact polynomials in kappa over the rationals, so the
good-variable recurrences hold exactly and never drift. Closure comes from
the evolution rules

    D_t r = -kappa r v',   D_t v = -r',   D_t d = d D_t - v' d,

where d is the spatial derivative and v' its application to v.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import UnbalancedResidual
from .grid import Field1D, State, derivative

J_CAP = 8  # good variables capped at j = 8 (k <= 4 energies); terms explode beyond


class KPoly:
    """Polynomial in kappa with Fraction coefficients, ascending powers."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=(0,)):
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @staticmethod
    def const(c) -> "KPoly":
        return KPoly((Fraction(c),))

    @staticmethod
    def kappa(power: int = 1, scale=1) -> "KPoly":
        return KPoly((0,) * power + (Fraction(scale),))

    def __bool__(self):
        return bool(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, KPoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __add__(self, other):
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        return KPoly(
            tuple(
                (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
                for i in range(n)
            )
        )

    def __neg__(self):
        return KPoly(tuple(-c for c in self.coeffs))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, KPoly):
            if isinstance(other, (int, Fraction)):
                other = KPoly.const(other)
            else:
                return NotImplemented
        if not self.coeffs or not other.coeffs:
            return KPoly()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return KPoly(tuple(out))

    def __call__(self, kappa: float) -> float:
        out = 0.0
        for c in reversed(self.coeffs):
            out = out * kappa + float(c)
        return out

    def __repr__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for p, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if p == 0:
                parts.append(str(c))
            else:
                k = "k" if p == 1 else f"k^{p}"
                parts.append(k if c == 1 else f"-{k}" if c == -1 else f"{c}*{k}")
        return " + ".join(parts).replace("+ -", "- ")


ONE = KPoly.const(1)
MINUS_KAPPA = KPoly.kappa(1, -1)

Factors = tuple  # sorted tuple of (symbol, order) pairs, with multiplicity


def _factor_order(f) -> Fraction:
    sym, a = f
    return Fraction(a) - (1 if sym == "r" else Fraction(1, 2))


@dataclass(frozen=True)
class Term:
    coeff: KPoly
    factors: Factors

    @property
    def order(self) -> Fraction:
        return sum((_factor_order(f) for f in self.factors), Fraction(0))

    @property
    def nderivs(self) -> int:
        return sum(a for _, a in self.factors)


class Expr:
    """Canonical sum of multilinear terms; immutable after construction."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        clean = {}
        if terms:
            for fac, c in terms.items():
                if c:
                    clean[tuple(sorted(fac))] = c
        self.terms = clean

    @staticmethod
    def var(sym: str, order: int = 0) -> "Expr":
        if sym not in ("r", "v"):
            raise ValueError("symbols are 'r' and 'v'")
        return Expr({((sym, order),): ONE})

    @staticmethod
    def zero() -> "Expr":
        return Expr()

    def is_zero(self) -> bool:
        return not self.terms

    def term_list(self):
        return [Term(c, f) for f, c in sorted(self.terms.items())]

    @property
    def order(self) -> Fraction | None:
        orders = {Term(c, f).order for f, c in self.terms.items()}
        if not orders:
            return None
        if len(orders) > 1:
            raise AssertionError(f"inhomogeneous expression, orders {orders}")
        return orders.pop()

    @property
    def nderivs(self) -> int | None:
        counts = {Term(c, f).nderivs for f, c in self.terms.items()}
        if not counts:
            return None
        if len(counts) > 1:
            raise AssertionError(f"mixed derivative counts {counts}")
        return counts.pop()

    def max_order(self) -> int:
        return max((a for f in self.terms for _, a in f), default=0)

    def __add__(self, other: "Expr") -> "Expr":
        out = dict(self.terms)
        for f, c in other.terms.items():
            out[f] = out[f] + c if f in out else c
        return Expr(out)

    def __neg__(self) -> "Expr":
        return Expr({f: -c for f, c in self.terms.items()})

    def __sub__(self, other: "Expr") -> "Expr":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Expr):
            out = {}
            for f1, c1 in self.terms.items():
                for f2, c2 in other.terms.items():
                    f = tuple(sorted(f1 + f2))
                    c = c1 * c2
                    out[f] = out[f] + c if f in out else c
            return Expr(out)
        c0 = other if isinstance(other, KPoly) else KPoly.const(other)
        return Expr({f: c * c0 for f, c in self.terms.items()})

    __rmul__ = __mul__

    def spatial(self) -> "Expr":
        """Leibniz spatial derivative."""
        out = Expr()
        for fac, c in self.terms.items():
            for i in range(len(fac)):
                sym, a = fac[i]
                bumped = fac[:i] + ((sym, a + 1),) + fac[i + 1 :]
                out = out + Expr({bumped: c})
        return out

    def pretty(self) -> str:
        if not self.terms:
            return "0"
        bits = []
        for t in self.term_list():
            facs = []
            for sym, a in t.factors:
                if a == 0:
                    facs.append(sym)
                elif a <= 3:
                    facs.append(sym + "'" * a)
                else:
                    facs.append(f"{sym}^({a})")
            coeff = repr(t.coeff)
            if any(ch in coeff for ch in "+-") and coeff not in ("-1", "1"):
                coeff = f"({coeff})"
            if coeff == "1":
                bits.append("*".join(facs))
            elif coeff == "-1":
                bits.append("-" + "*".join(facs))
            else:
                bits.append(coeff + "*" + "*".join(facs))
        return " + ".join(bits).replace("+ -", "- ")

    def dump(self) -> list:
        """JSON-friendly dump: coefficient fractions plus factor lists."""
        out = []
        for t in self.term_list():
            out.append(
                {
                    "coeff": [[c.numerator, c.denominator] for c in t.coeff.coeffs],
                    "factors": [[sym, a] for sym, a in t.factors],
                }
            )
        return out


@lru_cache(maxsize=None)
def _dt_factor(sym: str, a: int) -> Expr:
    if a == 0:
        if sym == "r":
            return Expr({(("r", 0), ("v", 1)): MINUS_KAPPA})
        return Expr({(("r", 1),): -ONE})
    lower = _dt_factor(sym, a - 1)
    commutator = Expr({(("v", 1), (sym, a)): -ONE})
    return lower.spatial() + commutator


def dt(e: Expr) -> Expr:
    """Material derivative; a derivation over the term algebra."""
    out = Expr()
    for fac, c in e.terms.items():
        for i in range(len(fac)):
            rest = fac[:i] + fac[i + 1 :]
            piece = _dt_factor(*fac[i]) * Expr({rest: ONE})
            out = out + piece * c
    return out


@lru_cache(maxsize=None)
def dt_power(sym: str, j: int) -> Expr:
    if j == 0:
        return Expr.var(sym)
    return dt(dt_power(sym, j - 1))


R = Expr.var("r")
V = Expr.var("v")
RX = Expr.var("r", 1)


@lru_cache(maxsize=None)
def good_variable(j: int) -> tuple[Expr, Expr]:
    """Corrected iterated material derivatives (s_j, w_j) of (r, v).

    s0 = r, w0 = v; (s1, w1) is the plain time derivative; s2 gains the
    +|r'|^2/2 correction; for j >= 3, s_j = r_j - r' w_{j-1} with w_j = v_j.
    """
    if j < 0:
        raise ValueError("j must be >= 0")
    if j > J_CAP:
        raise ValueError(f"good variables capped at j = {J_CAP}")
    if j == 0:
        return R, V
    if j == 1:
        s1 = dt_power("r", 1) - V * RX
        w1 = dt_power("v", 1) - V * Expr.var("v", 1)
        return s1, w1
    if j == 2:
        s2 = dt_power("r", 2) + Fraction(1, 2) * (RX * RX)
        return s2, dt_power("v", 2)
    _, w_prev = good_variable(j - 1)
    sj = dt_power("r", j) - RX * w_prev
    return sj, dt_power("v", j)


def apply_L1(e: Expr) -> Expr:
    """kappa r e'' + r' e', applied symbolically."""
    d1 = e.spatial()
    return KPoly.kappa() * (R * d1.spatial()) + RX * d1


def apply_L2(e: Expr) -> Expr:
    """kappa d(r e') + d(r' e), applied symbolically."""
    inner = R * e.spatial()
    return KPoly.kappa() * inner.spatial() + (RX * e).spatial()


def source_terms(k: int) -> tuple[Expr, Expr]:
    """Defect of (s_2k, w_2k) as solutions of the reduced linearized system:
    f = D_t s + w r' + kappa r w', g = D_t w + s'."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s2k, w2k = good_variable(2 * k)
    f = dt(s2k) + RX * w2k + KPoly.kappa() * (R * w2k.spatial())
    g = dt(w2k) + s2k.spatial()
    return f, g


def is_balanced_term(factors: Factors) -> bool:
    """At least two factors of the form d^(2+) r or d^(1+) v."""
    high = sum(
        1 for sym, a in factors if (sym == "r" and a >= 2) or (sym == "v" and a >= 1)
    )
    return high >= 2


def assert_balanced(e: Expr, what: str) -> None:
    for t in e.term_list():
        if not is_balanced_term(t.factors):
            raise UnbalancedResidual(f"{what} has endpoint term {t.factors}")


def recurrence_check(j: int) -> tuple[Expr, Expr]:
    """Residuals s_2j - L1 s_(2j-2) and w_2j - L2 w_(2j-2); every term must
    be balanced, otherwise the engine itself is broken."""
    if j < 2:
        raise ValueError("recurrence starts at j = 2")
    s_hi, w_hi = good_variable(2 * j)
    s_lo, w_lo = good_variable(2 * j - 2)
    res_s = s_hi - apply_L1(s_lo)
    res_w = w_hi - apply_L2(w_lo)
    assert_balanced(res_s, f"s-recurrence residual (j={j})")
    assert_balanced(res_w, f"w-recurrence residual (j={j})")
    return res_s, res_w


def evaluate(e: Expr, state: State) -> Field1D:
    """Pointwise evaluation, substituting numeric derivative fields."""
    grid = state.grid
    need_r = {a for f in e.terms for sym, a in f if sym == "r"}
    need_v = {a for f in e.terms for sym, a in f if sym == "v"}
    fields = {}
    for a in need_r:
        fields[("r", a)] = derivative(state.r, a).samples
    for a in need_v:
        fields[("v", a)] = derivative(state.v, a).samples
    out = np.zeros(grid.n)
    for fac, c in e.terms.items():
        piece = np.full(grid.n, c(state.kappa))
        for f in fac:
            piece = piece * fields[f]
        out += piece
    budget = min(state.r.budget, state.v.budget) - e.max_order()
    return Field1D(grid, out, budget=max(budget, 0))
