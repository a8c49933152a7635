"""Fixed-step RK4 simulation of a plant together with its linear and cubic observers.

Both observers share one design and are integrated on the same grid as the
plant, so their traces differ only through the cubic injection term. The
injection is computed from the output innovation ``r = y - C xhat``, which
equals ``C e`` and is therefore realizable from measurements alone.

Delayed quantities are read from the stored grid. Since the step divides
every delay, the first and last RK4 stages land on stored points; the two
midpoint stages use cubic Hermite interpolation with the stored
derivatives, which keeps the scheme fourth order.
"""
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from . import numerics
from ._validation import check_matrix, check_positive, check_vector
from .exceptions import DivergenceError, InvalidInputError
from .signals import as_signal_list, evaluate

DEFAULT_STEP = 1e-3
DEFAULT_T_END = 10.0
DELAY_TOL = 1e-9


def compatible_step(delays, h):
    """Largest step not exceeding ``h`` that divides every positive delay, or ``None``."""
    delays = [d for d in delays if d > 0]
    if not delays:
        return h
    base = min(delays)
    for q in range(max(1, math.ceil(base / h - 1e-12)), 10 ** 6):
        cand = base / q
        if all(abs(d / cand - round(d / cand)) <= DELAY_TOL * max(1.0, d / cand) for d in delays):
            return cand
    return None


@dataclass
class SimulationConfig:
    """Time grid, initial conditions and signals for one run.

    ``xhat0`` is the initial estimate shared by both observers; the
    observer states start at ``w0 = xhat0 - E y(0)``. Before ``t = 0`` the
    state sits at ``x0`` and all signals are zero (plants with output
    delays instead extend ``x`` backwards by its free response, see
    :func:`simulate_output_delay_pair`).
    """

    x0: np.ndarray
    xhat0: np.ndarray
    t_end: float = DEFAULT_T_END
    step_h: float = DEFAULT_STEP
    inputs: Optional[list] = None
    disturbance: Optional[object] = None

    def __post_init__(self):
        self.x0 = check_vector(self.x0, "x0")
        self.xhat0 = check_vector(self.xhat0, "xhat0", size=self.x0.size)
        self.t_end = check_positive(self.t_end, "t_end")
        self.step_h = check_positive(self.step_h, "step_h")
        if self.t_end < 10 * self.step_h - 1e-15:
            raise InvalidInputError("t_end must cover at least 10 steps")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.step_h))

    def times(self):
        return self.step_h * np.arange(self.n_steps + 1)

    def check_plant(self, plant):
        if self.x0.size != plant.n_states:
            raise InvalidInputError(f"x0 has length {self.x0.size}, plant has {plant.n_states} states")
        for d in plant.delays():
            if d > 0 and abs(d / self.step_h - round(d / self.step_h)) > DELAY_TOL * max(1.0, d / self.step_h):
                suggestion = compatible_step(plant.delays(), self.step_h)
                raise InvalidInputError(
                    f"step {self.step_h:g} does not divide delay {d:g}; try step_h={suggestion!r}")

    def input_signals(self, plant):
        """One list of per-column specs for each input channel."""
        specs = self.inputs if self.inputs is not None else [None] * len(plant.input_channels)
        if len(specs) != len(plant.input_channels):
            raise InvalidInputError(
                f"{len(specs)} input specs given for {len(plant.input_channels)} input channels")
        return [as_signal_list(s, B.shape[1]) for s, (B, _) in zip(specs, plant.input_channels)]

    def disturbance_signals(self, plant):
        if plant.unknown_input is None:
            return []
        return as_signal_list(self.disturbance, plant.unknown_input.shape[1])


@dataclass(frozen=True)
class Trace:
    """Time histories of a plant and both observers on a shared grid.

    Arrays are made read-only on construction.
    """

    times: np.ndarray
    x: np.ndarray
    xhat_linear: np.ndarray
    xhat_cubic: np.ndarray
    e_linear: np.ndarray
    e_cubic: np.ndarray
    V_linear: np.ndarray
    V_cubic: np.ndarray
    y: np.ndarray
    ybar: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def n_states(self):
        return self.x.shape[1]


def lyapunov_trace(e_series, P):
    """``V(t_k) = e_k' P e_k`` for every row of ``e_series``."""
    e = np.atleast_2d(np.asarray(e_series, dtype=float))
    P = check_matrix(P, "P", shape=(e.shape[1], e.shape[1]))
    return np.einsum("ki,ij,kj->k", e, P, e)


def _hermite_mid(x0, x1, f0, f1, h):
    return 0.5 * (x0 + x1) + 0.125 * h * (f0 - f1)


class _History:
    """Stored plant states and derivatives on the grid, with constant pre-history."""

    def __init__(self, x0, n_steps):
        self.x0 = x0
        self.X = np.empty((n_steps + 1, x0.size))
        self.F = np.empty((n_steps + 1, x0.size))

    def at(self, k, m, stage, h):
        """``x(t_k + stage*h - m*h)`` for stage in {0, 0.5, 1}."""
        if stage == 0.5:
            j = k - m
            if j + 1 <= 0:
                return self.x0
            return _hermite_mid(self.X[j], self.X[j + 1], self.F[j], self.F[j + 1], h)
        j = k - m + int(stage)
        return self.x0 if j < 0 else self.X[j]


def _divergence(t):
    return DivergenceError(f"simulation diverged (non-finite state) at t = {t:.6g}", t)


def _injection(r, theta, N):
    s = r @ theta @ r
    return s * (N @ r) if s != 0.0 else None


def _initial_w(design, y0, xhat0):
    return xhat0 - design.E @ y0


def _integrate(plant, design, config, C_out, theta=None):
    """Joint RK4 for plant, linear observer and cubic observer.

    Handles state delays, input delays and unknown inputs. ``C_out`` is the
    measured output matrix, which must equal ``design.effective_C`` for
    the error to decouple from the state.
    """
    config.check_plant(plant)
    n = plant.n_states
    h, K = config.step_h, config.n_steps
    times = config.times()
    A = plant.A
    G, L, E = design.G, design.L, design.E
    theta = design.theta if theta is None else theta
    N = design.N
    Cd = design.effective_C
    state_delays = [(Ai, int(round(tau / h))) for Ai, tau in plant.state_delays]
    J = design.delayed_output_gains
    if state_delays and len(J) != len(state_delays):
        raise InvalidInputError("design lacks delayed-output gains; run design_delay_observer first")
    u_specs = config.input_signals(plant)
    channels = [(B, delta, H, specs) for (B, delta), H, specs
                in zip(plant.input_channels, design.input_feedforward, u_specs)]
    Bd = plant.unknown_input
    d_specs = config.disturbance_signals(plant)

    hist = _History(config.x0, K)
    n2 = 2 * n
    ny = Cd.shape[0]
    LC = L @ C_out
    # innovation r = y - Cd (wc + E y) as one map on the stacked state
    R = np.hstack([C_out - Cd @ (E @ C_out), np.zeros_like(Cd), -Cd])
    cubic = bool(np.any(theta)) and bool(np.any(N))
    if cubic:
        Z0 = np.zeros((n, n))
        # one product gives plant drift, both observers, r and N r
        M = np.vstack([
            np.hstack([A, Z0, Z0]),
            np.hstack([LC, G, Z0]),
            np.hstack([LC, Z0, G]),
            R,
            N @ R,
        ])
    else:
        # without the cubic term the second observer is a copy of the first,
        # which makes theta = 0 traces bit-identical by construction
        M = np.block([[A, np.zeros((n, n))], [LC, G]])
    forced = bool(state_delays or channels or Bd is not None)

    def rhs(t, z, xdel, left=False):
        if cubic:
            v = M @ z
            dz = v[:3 * n]
            r = v[3 * n:3 * n + ny]
            s = r @ theta @ r
            if s != 0.0:
                dz[n2:] -= s * v[3 * n + ny:]
        else:
            dl = M @ z[:n2]
            dz = np.concatenate((dl, dl[n:]))
        if forced:
            f = np.zeros(n2)
            for (Ai, _), xd, Ji in zip(state_delays, xdel, J):
                f[:n] += Ai @ xd
                f[n:] += Ji @ (C_out @ xd)
            for B, delta, H, specs in channels:
                u = evaluate(specs, t - delta, left)
                f[:n] += B @ u
                f[n:] += H @ u
            if Bd is not None:
                f[:n] += Bd @ evaluate(d_specs, t, left)
            dz[:n] += f[:n]
            dz[n:n2] += f[n:]
            dz[n2:] += f[n:]
        return dz

    Z = np.empty((K + 1, 3 * n))
    Z[0, :n] = config.x0
    Z[0, n:n2] = Z[0, n2:] = _initial_w(design, C_out @ config.x0, config.xhat0)
    hist.X = Z[:, :n]
    h2, h6 = 0.5 * h, h / 6.0

    def delayed(k, stage):
        return [hist.at(k, m, stage, h) for _, m in state_delays]

    for k in range(K):
        t, z = times[k], Z[k]
        k1 = rhs(t, z, delayed(k, 0))
        hist.F[k] = k1[:n]
        k2 = rhs(t + h2, z + h2 * k1, delayed(k, 0.5))
        k3 = rhs(t + h2, z + h2 * k2, delayed(k, 0.5))
        k4 = rhs(t + h, z + h * k3, delayed(k, 1), True)
        Z[k + 1] = z + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(Z[k + 1].sum()):
            raise _divergence(times[k + 1])
    X, WL, WC = Z[:, :n].copy(), Z[:, n:n2].copy(), Z[:, n2:].copy()
    return times, X, WL, WC


def _build_trace(times, X, WL, WC, design, Y, Ybar, meta):
    E = design.E
    xl = WL + Ybar @ E.T
    xc = WC + Ybar @ E.T
    el, ec = X - xl, X - xc
    return Trace(
        times=times, x=X, xhat_linear=xl, xhat_cubic=xc, e_linear=el, e_cubic=ec,
        V_linear=lyapunov_trace(el, design.P), V_cubic=lyapunov_trace(ec, design.P),
        y=Y, ybar=Ybar, meta=meta,
    )


def simulate_pair(plant, design, config):
    """Simulate a delay-free plant (optionally with unknown input) and both observers."""
    if plant.output_delays:
        return simulate_output_delay_pair(plant, design, config, mode="oracle")
    if plant.state_delays or any(d > 0 for _, d in plant.input_channels):
        return simulate_delay_pair(plant, design, config)
    times, X, WL, WC = _integrate(plant, design, config, plant.C)
    Y = X @ plant.C.T
    return _build_trace(times, X, WL, WC, design, Y, Y, {"plant_class": plant.plant_class})


def simulate_delay_pair(plant, design, config):
    """Simulate a plant with state and/or input delays against the delayed-output observer."""
    if plant.output_delays:
        raise InvalidInputError("output-delay plants go through simulate_output_delay_pair")
    times, X, WL, WC = _integrate(plant, design, config, plant.C)
    Y = X @ plant.C.T
    return _build_trace(times, X, WL, WC, design, Y, Y, {"plant_class": plant.plant_class})


def _rk4_linear_plant(plant, config, u_specs):
    """Plant-only pass for output-delay plants (no state delays in that class)."""
    h, K = config.step_h, config.n_steps
    times = config.times()
    A = plant.A
    X = np.empty((K + 1, plant.n_states))
    F = np.empty_like(X)
    X[0] = config.x0

    def f(t, x, left=False):
        dx = A @ x
        for (B, delta), specs in zip(plant.input_channels, u_specs):
            dx = dx + B @ evaluate(specs, t - delta, left)
        return dx

    for k in range(K):
        t, x = times[k], X[k]
        k1 = f(t, x)
        F[k] = k1
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3, True)
        X[k + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(X[k + 1]).all():
            raise _divergence(times[k + 1])
    F[K] = f(times[K], X[K])
    return times, X, F


def _half_grid_states(plant, config, X, F, offset_steps):
    """States on the half-step grid from ``t = -offset_steps*h`` to ``t_end``.

    Negative times use the free response ``expm(A t) x0``, the only
    pre-history under which ``x(t) = expm(A d) x(t - d) + (input convolution)``
    holds for every ``t >= 0``.
    """
    h, K = config.step_h, config.n_steps
    n = plant.n_states
    mid = _hermite_mid(X[:-1], X[1:], F[:-1], F[1:], h)
    pos = np.empty((2 * K + 1, n))
    pos[0::2] = X
    pos[1::2] = mid
    if offset_steps == 0:
        return pos
    Phi = numerics.expm(-plant.A * (0.5 * h))
    neg = np.empty((2 * offset_steps, n))
    cur = config.x0
    for q in range(2 * offset_steps - 1, -1, -1):
        cur = Phi @ cur
        neg[q] = cur
    return np.vstack([neg, pos])


def _hold_weights(A, tau):
    """``(int_0^tau e^{As}(1 - s/tau) ds, int_0^tau e^{As} (s/tau) ds)`` via one block exponential."""
    n = A.shape[0]
    M = np.zeros((3 * n, 3 * n))
    M[:n, :n] = A
    M[:n, n:2 * n] = np.eye(n)
    M[n:2 * n, 2 * n:] = np.eye(n)
    Phi = numerics.expm(M * tau)
    full = Phi[:n, n:2 * n]
    lower = Phi[:n, 2 * n:] / tau
    return lower, full - lower


def _convolution_correction(plant, config, u_specs):
    """``sum_i C_i expm(-A d_i) int_{t-d_i}^t expm(A (t-r)) sum_j B_j u_j(r - delta_j) dr`` on the half grid.

    The input is taken as linear between nodes of spacing ``h/2`` (one-sided
    limits at jumps) and the exponential kernel is integrated exactly, so
    grid-aligned steps are handled without error. The kernel is built from
    powers of ``expm(A h/2)`` and applied as an FFT convolution.
    """
    h, K = config.step_h, config.n_steps
    h2 = 0.5 * h
    n = plant.n_states
    out = np.zeros((2 * K + 1, plant.n_outputs))
    if not plant.input_channels:
        return out
    Mmax = max(int(round(d / h2)) for _, d in plant.output_delays)
    if Mmax == 0:
        return out
    # drive samples b(s) on s = q*h2 for q = -Mmax .. 2K
    s = h2 * np.arange(-Mmax, 2 * K + 1)
    b = {side: np.zeros((s.size, n)) for side in ("left", "right")}
    for (B, delta), specs in zip(plant.input_channels, u_specs):
        for side, arr in b.items():
            cols = np.column_stack([sp.sample_for_quadrature(s - delta, side) for sp in specs])
            arr += cols @ B.T
    step = numerics.expm(plant.A * h2)
    powers = np.empty((Mmax, n, n))
    powers[0] = np.eye(n)
    for m in range(1, Mmax):
        powers[m] = step @ powers[m - 1]
    upper_w, lower_w = _hold_weights(plant.A, h2)
    window = slice(Mmax, Mmax + 2 * K + 1)
    for Ci, di in plant.output_delays:
        M = int(round(di / h2))
        if M == 0:
            continue
        # sub-interval m spans r in [t - (m+1) h2, t - m h2]; its upper node takes the left limit
        ka = powers[:M] @ upper_w
        kb = np.concatenate([np.zeros((1, n, n)), powers[:M] @ lower_w])
        conv = fftconvolve(ka, b["left"][:, None, :], axes=0)[window]
        conv += fftconvolve(kb, b["right"][:, None, :], axes=0)[window]
        out += conv.sum(axis=2) @ (Ci @ numerics.expm(-plant.A * di)).T
    return out


def _measured_outputs(plant, config, Xhalf, offset_steps):
    """``y(t) = sum_i C_i x(t - d_i)`` on the half grid."""
    K = config.n_steps
    h2 = 0.5 * config.step_h
    base = 2 * offset_steps
    y = np.zeros((2 * K + 1, plant.n_outputs))
    for Ci, di in plant.output_delays:
        M = int(round(di / h2))
        y += Xhalf[base - M:base - M + 2 * K + 1] @ Ci.T
    return y


def simulate_output_delay_pair(plant, design, config, mode="measurement"):
    """Simulate a plant with delayed outputs against observers driven by ``ybar``.

    ``mode="oracle"`` feeds ``ybar = Cbar x`` with ``Cbar = design.effective_C``;
    ``mode="measurement"`` rebuilds ``ybar`` from the delayed measurements and
    the known inputs, which recovers ``Cbar x`` up to quadrature error when
    ``design.effective_C`` is the true compressed matrix.
    """
    if not plant.output_delays:
        raise InvalidInputError("plant has no output delays")
    if mode not in ("oracle", "measurement"):
        raise InvalidInputError(f"mode must be 'oracle' or 'measurement', got {mode!r}")
    config.check_plant(plant)
    u_specs = config.input_signals(plant)
    times, X, F = _rk4_linear_plant(plant, config, u_specs)
    h, K = config.step_h, config.n_steps
    offset = max(int(round(d / h)) for _, d in plant.output_delays)
    Xhalf = _half_grid_states(plant, config, X, F, offset)
    y_half = _measured_outputs(plant, config, Xhalf, offset)
    Cbar = design.effective_C
    if mode == "oracle":
        ybar_half = Xhalf[2 * offset:] @ Cbar.T
    else:
        ybar_half = y_half + _convolution_correction(plant, config, u_specs)

    G, L, E, N, theta = design.G, design.L, design.E, design.N, design.theta
    H = design.input_feedforward

    def rhs(q, t, wl, wc, left=False):
        yb = ybar_half[q]
        common = L @ yb
        for (B, delta), Hj, specs in zip(plant.input_channels, H, u_specs):
            common = common + Hj @ evaluate(specs, t - delta, left)
        dwl = G @ wl + common
        dwc = G @ wc + common
        inj = _injection(yb - Cbar @ (wc + E @ yb), theta, N)
        if inj is not None:
            dwc = dwc - inj
        return dwl, dwc

    n = plant.n_states
    WL, WC = np.empty((K + 1, n)), np.empty((K + 1, n))
    WL[0] = WC[0] = _initial_w(design, ybar_half[0], config.xhat0)
    for k in range(K):
        t, wl, wc = times[k], WL[k], WC[k]
        a1, c1 = rhs(2 * k, t, wl, wc)
        a2, c2 = rhs(2 * k + 1, t + 0.5 * h, wl + 0.5 * h * a1, wc + 0.5 * h * c1)
        a3, c3 = rhs(2 * k + 1, t + 0.5 * h, wl + 0.5 * h * a2, wc + 0.5 * h * c2)
        a4, c4 = rhs(2 * k + 2, t + h, wl + h * a3, wc + h * c3, True)
        WL[k + 1] = wl + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        WC[k + 1] = wc + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if not (np.isfinite(WL[k + 1]).all() and np.isfinite(WC[k + 1]).all()):
            raise _divergence(times[k + 1])
    meta = {"plant_class": plant.plant_class, "mode": mode}
    return _build_trace(times, X, WL, WC, design, y_half[0::2], ybar_half[0::2], meta)


def simulate_error_ode(G, C_eff, theta, N, e0, config):
    """Integrate the error dynamics ``e' = G e + (e' C' theta C e) N C e`` directly.

    Returns ``(times, e)``.
    """
    G = check_matrix(G, "G", square=True)
    n = G.shape[0]
    C_eff = check_matrix(C_eff, "C_eff", shape=(None, n))
    theta = check_matrix(theta, "theta", shape=(C_eff.shape[0],) * 2)
    N = check_matrix(N, "N", shape=(n, C_eff.shape[0]))
    e0 = check_vector(e0, "e0", size=n)
    h, K = config.step_h, config.n_steps
    times = config.times()

    def f(e):
        de = G @ e
        inj = _injection(C_eff @ e, theta, N)
        return de if inj is None else de + inj

    out = np.empty((K + 1, n))
    out[0] = e0
    for k in range(K):
        e = out[k]
        k1 = f(e)
        k2 = f(e + 0.5 * h * k1)
        k3 = f(e + 0.5 * h * k2)
        k4 = f(e + h * k3)
        out[k + 1] = e + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(out[k + 1]).all():
            raise _divergence(times[k + 1])
    return times, out
