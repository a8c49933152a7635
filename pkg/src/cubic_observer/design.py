"""Observer synthesis for linear, cubic, unknown-input and delayed plants.

Conventions used throughout (``C`` stands for the effective output matrix,
which is the compressed ``Cbar`` for plants with output delays)::

    observer      w' = G w + L y + sum_i J_i y(t - tau_i) + sum_j H_j u(t - delta_j)
                       - (r' theta r) N r,          r = y - C xhat
    estimate      xhat = w + E y

The state-independence condition ``(I - EC) A - G (I - EC) - L C = 0`` is
checked for every design and reported as ``eq3_residual``.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import numerics
from ._validation import check_matrix, check_positive, check_psd
from .exceptions import (
    DelayDesignInfeasibleError,
    DesignRejectedError,
    DimensionError,
    InfeasibleDesignError,
    InvalidInputError,
)

DESIGN_TOL = 1e-6
EXACT_TOL = 1e-8


@dataclass
class PlantModel:
    """LTI plant with optional unknown input, state/input delays and output delays.

    ``state_delays`` holds ``(A_i, tau_i)`` pairs where ``A_i`` already
    includes any scalar weight on a shared delayed-state matrix.
    ``output_delays`` holds ``(C_i, d_i)`` pairs; when given, the measured
    output is ``y(t) = sum_i C_i x(t - d_i)`` and ``C`` may be omitted.
    """

    A: np.ndarray
    C: Optional[np.ndarray] = None
    state_delays: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    input_channels: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    unknown_input: Optional[np.ndarray] = None
    output_delays: Optional[List[Tuple[np.ndarray, float]]] = None

    def __post_init__(self):
        self.A = check_matrix(self.A, "A", square=True)
        n = self.A.shape[0]
        if self.output_delays:
            pairs = []
            for i, (Ci, di) in enumerate(self.output_delays):
                Ci = check_matrix(Ci, f"output_delays[{i}].C", shape=(None, n))
                if pairs and Ci.shape != pairs[0][0].shape:
                    raise DimensionError("all delayed output matrices must share one shape")
                pairs.append((Ci, check_positive(di, f"output_delays[{i}].d", allow_zero=True)))
            _check_distinct([d for _, d in pairs], "output delays")
            self.output_delays = pairs
        else:
            self.output_delays = None
        if self.C is None:
            if self.output_delays is None:
                raise DimensionError("plant needs C or output_delays")
        else:
            self.C = check_matrix(self.C, "C", shape=(None, n))
            if self.output_delays is not None and self.C.shape[0] != self.output_delays[0][0].shape[0]:
                raise DimensionError("C and delayed output matrices disagree on output count")

        delays = []
        for i, (Ai, tau) in enumerate(self.state_delays):
            Ai = check_matrix(Ai, f"state_delays[{i}].A", shape=(n, n))
            delays.append((Ai, check_positive(tau, f"state_delays[{i}].tau")))
        _check_distinct([t for _, t in delays], "state delays")
        self.state_delays = delays

        channels = []
        for j, (Bj, delta) in enumerate(self.input_channels):
            Bj = check_matrix(Bj, f"input_channels[{j}].B", shape=(n, None))
            channels.append((Bj, check_positive(delta, f"input_channels[{j}].delta", allow_zero=True)))
        self.input_channels = channels

        if self.unknown_input is not None:
            self.unknown_input = check_matrix(self.unknown_input, "B_d", shape=(n, None))

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_outputs(self):
        if self.output_delays:
            return self.output_delays[0][0].shape[0]
        return self.C.shape[0]

    @property
    def plant_class(self):
        if self.output_delays:
            return "output_delay"
        if self.state_delays or any(d > 0 for _, d in self.input_channels):
            return "state_input_delay"
        if self.unknown_input is not None:
            return "unknown_input"
        return "lti"

    def delays(self):
        """Every delay value appearing in the plant (zeros included)."""
        out = [t for _, t in self.state_delays] + [d for _, d in self.input_channels]
        if self.output_delays:
            out += [d for _, d in self.output_delays]
        return out

    def effective_output(self):
        """``C`` for delay-free outputs, otherwise the compressed ``Cbar``."""
        if self.output_delays:
            return compute_cbar(self.A, self.output_delays)
        return self.C


def _check_distinct(values, what):
    if len(set(values)) != len(values):
        raise InvalidInputError(f"{what} must be distinct, got {values}")


@dataclass
class ObserverDesign:
    """Parameters shared by the linear observer and its cubic counterpart.

    The linear observer is this design with the cubic term dropped.
    """

    G: np.ndarray
    L: np.ndarray
    E: np.ndarray
    theta: np.ndarray
    N: np.ndarray
    P: np.ndarray
    gamma: float
    effective_C: np.ndarray
    delayed_output_gains: List[np.ndarray] = field(default_factory=list)
    input_feedforward: List[np.ndarray] = field(default_factory=list)
    Q: Optional[np.ndarray] = None
    alpha: Optional[float] = None

    def with_theta(self, theta):
        """Copy with a new output weight; ``N`` is rescaled consistently through the gain formula."""
        N, P = design_cubic_gain(self.G, self.effective_C, theta, self.gamma, self.Q)
        return _replace(self, theta=np.array(theta, dtype=float), N=N, P=P)


def _replace(design, **changes):
    from dataclasses import replace
    return replace(design, **changes)


@dataclass
class DesignReport:
    eq3_residual: float
    rank_CW: Optional[int] = None
    rank_W: Optional[int] = None
    uio_residual: Optional[float] = None
    minimized_uio_residual: Optional[float] = None
    range_residual: Optional[float] = None
    decoupling_failed: bool = False
    delay_constraint_residuals: List[float] = field(default_factory=list)
    input_constraint_residuals: List[float] = field(default_factory=list)
    theorem2_semidefinite_note: bool = False
    equilibrium_check: Optional[dict] = None
    placed_eigenvalues: Optional[np.ndarray] = None
    perturbed_poles: list = field(default_factory=list)
    accepted: bool = True
    messages: List[str] = field(default_factory=list)

    def to_dict(self):
        out = {}
        for key, value in self.__dict__.items():
            if key == "placed_eigenvalues" and value is not None:
                value = spectrum_to_list(value)
            out[key] = value
        return out


def spectrum_to_list(values):
    return [[float(np.real(v)), float(np.imag(v))] for v in np.asarray(values).ravel()]


def _scaled_norm(R, *terms):
    """Frobenius norm of ``R`` relative to the size of the terms that produced it (floored at 1)."""
    scale = sum(np.linalg.norm(t) for t in terms)
    return float(np.linalg.norm(R) / max(1.0, scale))


def eq3_residual(A, G, E, L, C):
    """Scaled norm of ``(I - EC) A - G (I - EC) - L C``."""
    IEC = np.eye(A.shape[0]) - E @ C
    a, b, c = IEC @ A, G @ IEC, L @ C
    return _scaled_norm(a - b - c, a, b, c)


def _cubic_defaults(n, ny, theta, Q):
    theta = np.eye(ny) if theta is None else check_psd(check_matrix(theta, "theta", shape=(ny, ny)), "theta")
    Q = np.eye(n) if Q is None else check_matrix(Q, "Q", shape=(n, n))
    return theta, Q


def _feedforward(plant, E, C):
    IEC = np.eye(plant.n_states) - E @ C
    return [IEC @ Bj for Bj, _ in plant.input_channels]


def design_cubic_gain(G, C_eff, theta=None, gamma=1.0, Q=None):
    """Lyapunov matrix ``P`` and cubic gain ``N = -gamma P^-1 C' theta``.

    With this ``N``, ``P N C + C' N' P = -2 gamma C' theta C``, which is only
    negative semidefinite when ``C`` has fewer rows than columns.
    """
    G = check_matrix(G, "G", square=True)
    C_eff = check_matrix(C_eff, "C_eff", shape=(None, G.shape[0]))
    theta, Q = _cubic_defaults(G.shape[0], C_eff.shape[0], theta, Q)
    gamma = check_positive(gamma, "gamma")
    P = numerics.lyap_solve(G, Q)
    N = -gamma * np.linalg.solve(P, C_eff.T @ theta)
    return N, P


def cubic_condition_residual(P, N, C_eff, theta, gamma):
    """Scaled norm of ``P N C + C' N' P + 2 gamma C' theta C`` (zero for the closed-form gain)."""
    PNC = P @ N @ C_eff
    target = 2.0 * gamma * C_eff.T @ theta @ C_eff
    return _scaled_norm(PNC + PNC.T + target, PNC, target)


def _finish(plant, G, L, E, C, theta, gamma, Q, report, alpha=None, check_equilibrium=False, seed=0):
    N, P = design_cubic_gain(G, C, theta, gamma, Q)
    n, ny = G.shape[0], C.shape[0]
    theta, Q = _cubic_defaults(n, ny, theta, Q)
    sym = P @ N @ C
    sym = sym + sym.T
    report.theorem2_semidefinite_note = bool(np.linalg.eigvalsh(sym).max() > -1e-12 * max(1.0, np.abs(sym).max()))
    design = ObserverDesign(
        G=G, L=L, E=E, theta=theta, N=N, P=P, gamma=float(gamma), effective_C=C,
        input_feedforward=_feedforward(plant, E, C), Q=Q, alpha=alpha,
    )
    report.input_constraint_residuals = [0.0 for _ in design.input_feedforward]
    if check_equilibrium:
        report.equilibrium_check = check_equilibrium_uniqueness(G, C, theta, N, seed=seed)
    return design


def design_linear_fullorder(plant, desired, theta=None, gamma=1.0, Q=None, C_eff=None,
                            seed=0, check_equilibrium=False):
    """Full-order Luenberger design: ``E = 0``, ``L`` from pole placement, ``G = A - L C``."""
    C = plant.effective_output() if C_eff is None else check_matrix(C_eff, "C_eff", shape=(None, plant.n_states))
    L, info = numerics.place_poles(plant.A, C, desired, seed=seed, return_info=True)
    n = plant.n_states
    E = np.zeros((n, C.shape[0]))
    G = plant.A - L @ C
    report = DesignReport(
        eq3_residual=eq3_residual(plant.A, G, E, L, C),
        placed_eigenvalues=numerics.eig(G),
        perturbed_poles=info["perturbed"],
    )
    if info["perturbed"]:
        report.messages.append(f"repeated poles shifted by {numerics.REPEAT_PERTURBATION:g}: {info['perturbed']}")
    design = _finish(plant, G, L, E, C, theta, gamma, Q, report, check_equilibrium=check_equilibrium, seed=seed)
    return design, report


def alpha_compatible_z1(A, C, alpha, other_poles=None, seed=0):
    """Choose ``Z1`` so that ``A + Z1 C`` has ``-alpha`` as an eigenvalue of multiplicity ``n - rank(C)``.

    That makes ``W = alpha I + A + Z1 C`` drop to rank ``rank(C)``, which is
    what the rank test ``rank(CW) = rank(W)`` needs. The remaining
    eigenvalues default to ``-(alpha + 1), -(alpha + 2), ...``.
    """
    A = check_matrix(A, "A", square=True)
    C = check_matrix(C, "C", shape=(None, A.shape[0]))
    alpha = check_positive(alpha, "alpha")
    n, p = A.shape[0], numerics.numerical_rank(C)
    k = n - p
    if k > p:
        raise InfeasibleDesignError(
            f"-alpha needs multiplicity {k} but only {p} independent outputs are available")
    if other_poles is None:
        other_poles = [-(alpha + 1.0 + i) for i in range(n - k)]
    poles = [-alpha] * k + list(other_poles)
    return -numerics.place_poles(A, C, poles, seed=seed)


def _alpha_core(plant, alpha, Z1, Z2, C):
    n, ny = plant.n_states, C.shape[0]
    alpha = check_positive(alpha, "alpha")
    Z1 = check_matrix(Z1, "Z1", shape=(n, ny))
    W = alpha * np.eye(n) + plant.A + Z1 @ C
    CW = C @ W
    # same cutoff as the rank test, so a full-row-rank CW gives proj == 0 exactly
    U, s, _ = np.linalg.svd(CW, full_matrices=True)
    r = int(np.sum(s > numerics.RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    CWp = numerics.pinv(CW, rcond=numerics.RANK_RTOL)
    proj = U[:, r:] @ U[:, r:].T
    base_E = W @ CWp
    if Z2 is not None:
        Z2 = check_matrix(Z2, "Z2", shape=(n, ny))
    return alpha, W, CW, base_E, proj, Z2


def _alpha_gains(plant, alpha, E, C):
    n = plant.n_states
    G = -alpha * np.eye(n)
    IEC = np.eye(n) - E @ C
    # least-squares solve of L C = (I - EC) A - G (I - EC); equals -(I - EC) Z1 when C has full row rank
    L = (IEC @ plant.A - G @ IEC) @ numerics.pinv(C)
    return G, L


def design_linear_alpha(plant, alpha, Z1, Z2=None, theta=None, gamma=1.0, Q=None, C_eff=None,
                        seed=0, check_equilibrium=False):
    """Design with ``G = -alpha I`` from the pseudoinverse parametrization of ``E``.

    ``W = alpha I + A + Z1 C`` and ``E = W (CW)^+ + Z2 (I - CW (CW)^+)``.
    Raises :class:`InfeasibleDesignError` when ``rank(CW) != rank(W)`` and
    :class:`DesignRejectedError` when the state-independence residual exceeds 1e-6.
    """
    C = plant.effective_output() if C_eff is None else check_matrix(C_eff, "C_eff", shape=(None, plant.n_states))
    alpha, W, CW, base_E, proj, Z2 = _alpha_core(plant, alpha, Z1, Z2, C)
    E = base_E if Z2 is None else base_E + Z2 @ proj
    return _alpha_accept(plant, alpha, W, CW, E, C, theta, gamma, Q, seed, check_equilibrium)


def _alpha_accept(plant, alpha, W, CW, E, C, theta, gamma, Q, seed, check_equilibrium, report=None):
    report = report or DesignReport(eq3_residual=np.nan)
    report.rank_W = numerics.numerical_rank(W)
    report.rank_CW = numerics.numerical_rank(CW)
    G, L = _alpha_gains(plant, alpha, E, C)
    report.eq3_residual = eq3_residual(plant.A, G, E, L, C)
    report.placed_eigenvalues = numerics.eig(G)
    if report.rank_CW != report.rank_W:
        report.accepted = False
        report.messages.append(f"rank(CW) = {report.rank_CW} but rank(W) = {report.rank_W}")
        raise InfeasibleDesignError(report.messages[-1], report)
    if report.eq3_residual > DESIGN_TOL:
        report.accepted = False
        report.messages.append(f"state-independence residual {report.eq3_residual:.3g} exceeds {DESIGN_TOL:g}")
        raise DesignRejectedError(report.messages[-1], report.eq3_residual, report)
    design = _finish(plant, G, L, E, C, theta, gamma, Q, report, alpha=alpha,
                     check_equilibrium=check_equilibrium, seed=seed)
    return design, report


def design_unknown_input(plant, alpha, Z1, Z2=None, theta=None, gamma=1.0, Q=None, C_eff=None,
                         seed=0, check_equilibrium=False):
    """``G = -alpha I`` design that also reports decoupling from the unknown input.

    When ``Z2`` is omitted it is chosen to minimize ``||(I - EC) B_d||``
    (the free part of ``E`` does not affect the state-independence
    condition). A nonzero minimum sets ``decoupling_failed`` but the design
    is still returned.
    """
    if plant.unknown_input is None:
        raise InvalidInputError("plant has no unknown-input matrix B_d")
    Bd = plant.unknown_input
    C = plant.effective_output() if C_eff is None else check_matrix(C_eff, "C_eff", shape=(None, plant.n_states))
    alpha, W, CW, base_E, proj, Z2 = _alpha_core(plant, alpha, Z1, Z2, C)
    n = plant.n_states

    # (I - EC) Bd = S - Z2 R  with  S = (I - W (CW)^+ C) Bd,  R = proj C Bd
    S = (np.eye(n) - base_E @ C) @ Bd
    R = proj @ C @ Bd
    Z2_opt = S @ numerics.pinv(R, atol=1e-12 * np.linalg.norm(C) * np.linalg.norm(Bd))
    minimized = _scaled_norm(S - Z2_opt @ R, Bd)
    if Z2 is None:
        Z2 = Z2_opt
    E = base_E + Z2 @ proj

    report = DesignReport(eq3_residual=np.nan)
    F = numerics.pinv(W) @ Bd
    report.range_residual = _scaled_norm(W @ F - Bd, Bd)
    report.uio_residual = _scaled_norm((np.eye(n) - E @ C) @ Bd, Bd)
    report.minimized_uio_residual = minimized
    if report.uio_residual > EXACT_TOL:
        report.decoupling_failed = True
        report.messages.append(
            f"(I - EC) B_d = {report.uio_residual:.3g}; best achievable over Z2 is {minimized:.3g}")
    return _alpha_accept(plant, alpha, W, CW, E, C, theta, gamma, Q, seed, check_equilibrium, report)


def design_delay_observer(plant, base, report=None):
    """Add delayed-output gains ``J_i`` and input feed-forwards ``H_j`` to a delay-free design.

    ``J_i = (I - EC) A_i C^+`` must reproduce ``(I - EC) A_i`` exactly (to 1e-8),
    otherwise :class:`DelayDesignInfeasibleError` names the failing delay.
    """
    C, E = base.effective_C, base.E
    n = plant.n_states
    IEC = np.eye(n) - E @ C
    report = report or DesignReport(eq3_residual=eq3_residual(plant.A, base.G, E, base.L, C))
    if report.eq3_residual > DESIGN_TOL:
        raise DesignRejectedError("base design does not satisfy the state-independence condition",
                                  report.eq3_residual, report)
    Cp = numerics.pinv(C)
    gains, residuals = [], []
    for i, (Ai, _) in enumerate(plant.state_delays):
        target = IEC @ Ai
        Ji = target @ Cp
        res = _scaled_norm(target - Ji @ C, target, Ji @ C)
        gains.append(Ji)
        residuals.append(res)
    report.delay_constraint_residuals = residuals
    H = [IEC @ Bj for Bj, _ in plant.input_channels]
    report.input_constraint_residuals = [0.0 for _ in H]
    for i, res in enumerate(residuals):
        if res > EXACT_TOL:
            report.accepted = False
            report.messages.append(f"delayed-state term {i}: (I - EC) A_i - J_i C residual {res:.3g}")
            raise DelayDesignInfeasibleError(report.messages[-1], i, res, report)
    return _replace(base, delayed_output_gains=gains, input_feedforward=H), report


def compute_cbar(A, output_delays):
    """Delay-compressed output matrix ``sum_i C_i expm(-A d_i)``."""
    A = check_matrix(A, "A", square=True)
    if not output_delays:
        raise InvalidInputError("output_delays must be nonempty")
    total = None
    for Ci, di in output_delays:
        Ci = check_matrix(Ci, "C_i", shape=(None, A.shape[0]))
        term = Ci if di == 0 else Ci @ numerics.expm(-A * di)
        total = term.copy() if total is None else total + term
    return total


def _equilibrium_map(G, M, NC):
    def f(v):
        return G @ v + (v @ M @ v) * (NC @ v)

    def jac(v):
        Mv = M @ v
        return G + (v @ Mv) * NC + 2.0 * np.outer(NC @ v, Mv)

    return f, jac


def check_equilibrium_uniqueness(G, C_eff, theta, N, trials=200, seed=0, max_iter=100):
    """Newton search for nonzero roots of ``G v + (v' C' theta C v) N C v``.

    Starts from ``trials`` random points on the unit sphere. This can only
    falsify uniqueness of the origin, never prove it.
    """
    G = check_matrix(G, "G", square=True)
    n = G.shape[0]
    C_eff = check_matrix(C_eff, "C_eff", shape=(None, n))
    theta = check_matrix(theta, "theta", shape=(C_eff.shape[0], C_eff.shape[0]))
    N = check_matrix(N, "N", shape=(n, C_eff.shape[0]))
    f, jac = _equilibrium_map(G, C_eff.T @ theta @ C_eff, N @ C_eff)
    rng = np.random.default_rng(seed)
    roots, origin, stalled = [], 0, 0
    for _ in range(trials):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        converged = False
        for _ in range(max_iter):
            fv = f(v)
            step = np.linalg.lstsq(jac(v), fv, rcond=None)[0]
            v = v - step
            if not np.all(np.isfinite(v)) or np.linalg.norm(v) > 1e8:
                break
            if np.linalg.norm(step) <= 1e-12 * max(1.0, np.linalg.norm(v)):
                converged = np.linalg.norm(f(v)) <= 1e-9 * max(1.0, np.linalg.norm(v) ** 3)
                break
        if not converged:
            stalled += 1
        elif np.linalg.norm(v) <= 1e-6:
            origin += 1
        elif not any(np.linalg.norm(v - r) <= 1e-6 * max(1.0, np.linalg.norm(r)) for r in roots):
            roots.append(v)
    return {
        "trials": int(trials),
        "seed": int(seed),
        "converged_to_origin": origin,
        "not_converged": stalled,
        "violations": [r.tolist() for r in roots],
        "n_violations": len(roots),
    }
