"""Comparisons between the linear and cubic observers on simulated traces."""
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ._validation import check_matrix, check_vector
from .exceptions import InvalidInputError
from .simulate import SimulationConfig, lyapunov_trace, simulate_pair

SETTLING_FRACTION = 0.02


@dataclass
class ComparisonReport:
    dominance_status: str
    dominance_holds: Optional[bool]
    first_violation_time: Optional[float]
    max_dominance_excess: Optional[float]
    initial_derivative_gap: float
    iae_linear: float
    iae_cubic: float
    settling_time_linear: Optional[float]
    settling_time_cubic: Optional[float]

    def to_dict(self):
        return asdict(self)


def iae(times, e):
    """Trapezoidal integral of the Euclidean error norm."""
    return float(np.trapezoid(np.linalg.norm(e, axis=1), times))


def settling_time(times, e, fraction=SETTLING_FRACTION):
    """First grid time after which ``||e||`` stays below ``fraction * ||e(0)||``; ``None`` if never."""
    norms = np.linalg.norm(e, axis=1)
    if norms[0] == 0.0:
        return 0.0 if np.all(norms == 0.0) else None
    above = np.nonzero(norms >= fraction * norms[0])[0]
    last = above[-1]
    return float(times[last + 1]) if last + 1 < times.size else None


def _initial_slope(times, D):
    """Second-order one-sided derivative at ``t = 0``."""
    h = times[1] - times[0]
    return float((-3.0 * D[0] + 4.0 * D[1] - D[2]) / (2.0 * h))


def summarize(trace):
    """IAE, settling times and the initial Lyapunov-derivative gap, without a dominance verdict."""
    t = trace.times
    return ComparisonReport(
        dominance_status="not-evaluated",
        dominance_holds=None,
        first_violation_time=None,
        max_dominance_excess=None,
        initial_derivative_gap=_initial_slope(t, trace.V_cubic - trace.V_linear),
        iae_linear=iae(t, trace.e_linear),
        iae_cubic=iae(t, trace.e_cubic),
        settling_time_linear=settling_time(t, trace.e_linear),
        settling_time_cubic=settling_time(t, trace.e_cubic),
    )


def check_theorem3(trace, P, alpha, tol=None, G=None):
    """Pointwise check of ``V_c(t_k) <= V_l(t_k) + tol`` with ``V = e' P e``.

    ``tol`` defaults to ``1e-7 * V_l(0)``. The comparison argument only
    covers ``G = -alpha I``; when ``G`` is given and differs, or when
    ``V_c(0) > V_l(0)``, the verdict is ``"not-applicable"`` and only the
    summary metrics are filled in.
    """
    report = summarize(trace)
    P = check_matrix(P, "P", shape=(trace.n_states, trace.n_states))
    Vl = lyapunov_trace(trace.e_linear, P)
    Vc = lyapunov_trace(trace.e_cubic, P)
    if tol is None:
        tol = 1e-7 * Vl[0]
    applicable = Vc[0] <= Vl[0] + tol
    if G is not None:
        G = check_matrix(G, "G", square=True)
        scale = max(1.0, abs(alpha))
        applicable = applicable and np.abs(G + alpha * np.eye(G.shape[0])).max() <= 1e-9 * scale
    if not applicable:
        report.dominance_status = "not-applicable"
        return report
    excess = Vc - Vl - tol
    bad = np.nonzero(excess > 0)[0]
    report.dominance_holds = bool(bad.size == 0)
    report.dominance_status = "holds" if report.dominance_holds else "violated"
    report.first_violation_time = None if bad.size == 0 else float(trace.times[bad[0]])
    report.max_dominance_excess = float(np.max(Vc - Vl))
    return report


def analytic_derivative_gap(design, e0):
    """``dV_c/dt - dV_l/dt`` at a shared initial error ``e0``: ``2 s e0' P N C e0`` with ``s = e0' C' theta C e0``.

    Equals ``-2 gamma s^2`` for the closed-form cubic gain.
    """
    e0 = check_vector(e0, "e0", size=design.G.shape[0])
    Ce = design.effective_C @ e0
    s = Ce @ design.theta @ Ce
    return float(2.0 * s * (e0 @ design.P @ (design.N @ Ce)))


def finite_difference_gap(plant, design, e0, h=1e-4):
    """Same quantity estimated from a short simulation (fourth-order one-sided difference)."""
    e0 = check_vector(e0, "e0", size=plant.n_states)
    x0 = np.zeros(plant.n_states)
    config = SimulationConfig(x0=x0, xhat0=x0 - e0, t_end=10 * h, step_h=h)
    trace = simulate_pair(plant, design, config)
    D = trace.V_cubic - trace.V_linear
    return float((-25.0 * D[0] + 48.0 * D[1] - 36.0 * D[2] + 16.0 * D[3] - 3.0 * D[4]) / (12.0 * h))


def initial_derivative_check(plant, design, e0, verify=False, rtol=1e-4, h=1e-4):
    """Initial Lyapunov-derivative advantage of the cubic observer for a shared error ``e0``.

    With ``verify=True`` the analytic value is compared against a
    finite difference of simulated ``V`` and a mismatch beyond ``rtol``
    raises ``InvalidInputError``.
    """
    gap = analytic_derivative_gap(design, e0)
    if verify:
        fd = finite_difference_gap(plant, design, e0, h=h)
        scale = max(abs(gap), 1e-300)
        if abs(fd - gap) > rtol * scale and abs(fd - gap) > 1e-12:
            raise InvalidInputError(f"finite-difference gap {fd:.6g} disagrees with analytic {gap:.6g}")
    return gap
