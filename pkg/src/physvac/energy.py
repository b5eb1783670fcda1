"""Higher-order energy functionals and growth monitoring.

E^{2k} sums the energy-space norms of the even good variables; the
transport component is the curl energy, identically zero in 1D, kept in
the report so the wave/transport split of the construction stays visible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .calculus import evaluate, good_variable
from .grid import Field1D, State
from .wspace import control_A, control_B, h2k_norm, h_norm, weighted_l2_sq

K_MAX = 4


@dataclass(frozen=True)
class EnergyReport:
    k: int
    kappa: float
    wave_components: dict  # j -> ||(s_2j, w_2j)||_H^2
    transport: float
    total: float
    A: float
    B: float
    physical: float
    h2k: float
    t: float | None = None

    def __post_init__(self):
        s = sum(self.wave_components.values()) + self.transport
        if not math.isclose(s, self.total, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("total must equal the sum of components")

    def to_json(self) -> str:
        d = asdict(self)
        d["wave_components"] = {str(k): v for k, v in d["wave_components"].items()}
        return json.dumps(d, sort_keys=True)


def transport_energy(state: State) -> float:
    """Curl energy; the velocity is scalar in 1D so the vorticity vanishes
    identically and the transport component is exactly zero."""
    assert state.v.samples.ndim == 1
    return 0.0


def physical_energy(state: State) -> float:
    """Conserved energy int r^{(1-k)/k} (r^2 + ((k+1)/2) r v^2) dx."""
    kappa = state.kappa
    g = (1.0 - kappa) / kappa
    out = weighted_l2_sq(state.r, state.r, g)
    out += 0.5 * (kappa + 1.0) * weighted_l2_sq(state.v, state.r, g + 1.0)
    return out


def wave_energy(state: State, k: int, t: float | None = None) -> EnergyReport:
    """Evaluate the good variables symbolically and fill the report."""
    if k > K_MAX:
        raise ValueError(f"energies built for k <= {K_MAX}")
    comps = {}
    for j in range(k + 1):
        s_e, w_e = good_variable(2 * j)
        s_f = evaluate(s_e, state)
        w_f = evaluate(w_e, state)
        comps[j] = h_norm(s_f, w_f, state.r, state.kappa) ** 2
    transport = transport_energy(state)
    h2k, _ = h2k_norm(state.r, state.v, state.r, state.kappa, k)
    return EnergyReport(
        k=k,
        kappa=state.kappa,
        wave_components=comps,
        transport=transport,
        total=sum(comps.values()) + transport,
        A=control_A(state),
        B=control_B(state),
        physical=physical_energy(state),
        h2k=h2k,
        t=t,
    )


def coercivity_ratio(state: State, k: int) -> float:
    """E^{2k} over the squared H^{2k} norm; order one while A stays small."""
    rep = wave_energy(state, k)
    return rep.total / rep.h2k**2


@dataclass(frozen=True)
class GronwallFit:
    C: float
    max_violation: float
    n_samples: int


def gronwall_monitor(times, energies, b_values) -> GronwallFit:
    """Least-squares C in log E(t) - log E(0) <= C int_0^t B ds.

    Reports the fitted constant and the worst violation of the fitted
    bound along the trajectory.
    """
    times = np.asarray(times, dtype=np.float64)
    energies = np.asarray(energies, dtype=np.float64)
    b_values = np.asarray(b_values, dtype=np.float64)
    if times.size < 10:
        raise ValueError("need at least 10 reports to fit")
    x = np.concatenate(
        [[0.0], np.cumsum(0.5 * (b_values[1:] + b_values[:-1]) * np.diff(times))]
    )
    y = np.log(energies) - np.log(energies[0])
    denom = float(np.dot(x, x))
    C = float(np.dot(x, y) / denom) if denom > 0 else 0.0
    return GronwallFit(
        C=C, max_violation=float(np.max(y - C * x)), n_samples=int(times.size)
    )


def trajectory_csv(path: str, times, reports) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["t", "E2k", "A", "B", "E_phys", "h2k"])
        for t, rep in zip(times, reports):
            w.writerow(
                [repr(float(t))]
                + [repr(float(v)) for v in (rep.total, rep.A, rep.B, rep.physical, rep.h2k)]
            )
