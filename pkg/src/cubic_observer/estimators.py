"""scikit-learn style front end.

``fit`` takes a :class:`~cubic_observer.design.PlantModel` and synthesizes
the observer; ``transform`` runs the fitted observer over sampled
measurements. Hyperparameters live in ``__init__`` so ``get_params`` /
``set_params`` / ``clone`` work as usual, and fitted quantities carry a
trailing underscore.

>>> import numpy as np
>>> from cubic_observer import PlantModel, CubicObserver
>>> plant = PlantModel(A=[[0.0, 1.0], [-2.0, -3.0]], C=[[1.0, 0.0]])
>>> obs = CubicObserver(poles=[-4.0, -5.0]).fit(plant)
>>> obs.design_.G.shape
(2, 2)
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import design as _design
from ._validation import check_matrix, check_vector
from .exceptions import InvalidInputError
from .simulate import simulate_output_delay_pair, simulate_pair

METHODS = ("fullorder", "alpha")


class CubicObserver(BaseEstimator):
    """Cubic observer; the matching linear observer is the same design without the cubic term.

    Parameters
    ----------
    method : {"fullorder", "alpha"}
        ``"fullorder"`` places the poles of ``G = A - L C`` with ``E = 0``.
        ``"alpha"`` builds ``G = -alpha I`` from the pseudoinverse
        parametrization; for plants with an unknown input it also decouples
        the disturbance where possible.
    poles : array-like of complex, optional
        Observer poles for ``"fullorder"``.
    alpha : float
        Decay rate for ``"alpha"``.
    Z1, Z2 : array-like, optional
        Free matrices of the ``"alpha"`` parametrization. A missing ``Z1``
        is chosen so that the rank condition holds; a missing ``Z2`` is zero,
        or the disturbance-minimizing choice when the plant has an unknown
        input.
    theta, gamma, Q :
        Output weight, gain scale and Lyapunov weight of the cubic term.
        Defaults are identity, 1 and identity.
    C_eff : array-like, optional
        Override for the effective output matrix (e.g. a published ``Cbar``).
    seed : int
        Seed for pole placement and the equilibrium search.
    equilibrium_trials : int
        Newton starts used to search for spurious equilibria; 0 disables it.
    """

    cubic = True

    def __init__(self, method="fullorder", poles=None, alpha=1.0, Z1=None, Z2=None,
                 theta=None, gamma=1.0, Q=None, C_eff=None, seed=0, equilibrium_trials=0):
        self.method = method
        self.poles = poles
        self.alpha = alpha
        self.Z1 = Z1
        self.Z2 = Z2
        self.theta = theta
        self.gamma = gamma
        self.Q = Q
        self.C_eff = C_eff
        self.seed = seed
        self.equilibrium_trials = equilibrium_trials

    def fit(self, plant, y=None):
        if not isinstance(plant, _design.PlantModel):
            raise InvalidInputError("fit expects a PlantModel")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}, got {self.method!r}")
        kwargs = dict(theta=self.theta, gamma=self.gamma, Q=self.Q, C_eff=self.C_eff, seed=self.seed)
        if self.method == "fullorder":
            if self.poles is None:
                raise InvalidInputError("method='fullorder' needs poles")
            d, report = _design.design_linear_fullorder(plant, self.poles, **kwargs)
        else:
            C = plant.effective_output() if self.C_eff is None else self.C_eff
            Z1 = self.Z1
            if Z1 is None:
                Z1 = _design.alpha_compatible_z1(plant.A, C, self.alpha, seed=self.seed)
            if plant.unknown_input is not None:
                d, report = _design.design_unknown_input(plant, self.alpha, Z1, self.Z2, **kwargs)
            else:
                d, report = _design.design_linear_alpha(plant, self.alpha, Z1, self.Z2, **kwargs)
        if plant.state_delays or any(delta > 0 for _, delta in plant.input_channels):
            d, report = _design.design_delay_observer(plant, d, report)
        if self.equilibrium_trials:
            report.equilibrium_check = _design.check_equilibrium_uniqueness(
                d.G, d.effective_C, d.theta, d.N, trials=self.equilibrium_trials, seed=self.seed)
        self.plant_ = plant
        self.design_ = d
        self.report_ = report
        self.n_features_in_ = d.effective_C.shape[0]
        return self

    def simulate(self, config, mode="measurement"):
        """Simulate the fitted plant with both observers (see :mod:`cubic_observer.simulate`)."""
        check_is_fitted(self, "design_")
        if self.plant_.output_delays:
            return simulate_output_delay_pair(self.plant_, self.design_, config, mode=mode)
        return simulate_pair(self.plant_, self.design_, config)

    def transform(self, Y, times, U=None, xhat0=None):
        """State estimates from output samples ``Y`` (rows on a uniform grid ``times``).

        ``Y`` is the delay-free output (``Cbar x`` for plants with output
        delays). ``U`` is one array of shape ``(len(times), m_j)`` per input
        channel. Values between samples are taken as linear; delays must be
        whole multiples of the sample spacing. Before the first sample the
        output holds ``Y[0]`` (a constant initial function, as in
        :func:`~cubic_observer.simulate.simulate_pair`) and inputs are zero.
        """
        check_is_fitted(self, "design_")
        d, plant = self.design_, self.plant_
        Y = check_matrix(Y, "Y", shape=(None, d.effective_C.shape[0]))
        times = check_vector(times, "times", size=Y.shape[0])
        if times.size < 2:
            raise InvalidInputError("need at least two samples")
        h = times[1] - times[0]
        if h <= 0 or np.abs(np.diff(times) - h).max() > 1e-9 * max(1.0, h):
            raise InvalidInputError("times must be uniformly increasing")
        U = [] if U is None else [check_matrix(u, f"U[{j}]", shape=(Y.shape[0], None)) for j, u in enumerate(U)]
        if len(U) != len(plant.input_channels):
            raise InvalidInputError(f"expected {len(plant.input_channels)} input arrays, got {len(U)}")

        def shift(delay):
            m = delay / h
            if abs(m - round(m)) > 1e-9 * max(1.0, m):
                raise InvalidInputError(f"delay {delay:g} is not a multiple of the sample spacing {h:g}")
            return int(round(m))

        def sample(arr, k2, m, hold=False):
            # arr at half-index k2 (time k2*h/2) delayed by m whole samples
            q = k2 - 2 * m
            if q < 0:
                return arr[0] if hold else np.zeros(arr.shape[1])
            return arr[q // 2] if q % 2 == 0 else 0.5 * (arr[q // 2] + arr[q // 2 + 1])

        y_delays = [shift(tau) for _, tau in plant.state_delays]
        u_delays = [shift(delta) for _, delta in plant.input_channels]
        G, L, E, N, theta, C = d.G, d.L, d.E, d.N, d.theta, d.effective_C
        use_cubic = self.cubic

        def rhs(k2, w):
            y = sample(Y, k2, 0)
            dw = G @ w + L @ y
            for Ji, m in zip(d.delayed_output_gains, y_delays):
                dw = dw + Ji @ sample(Y, k2, m, hold=True)
            for Hj, u, m in zip(d.input_feedforward, U, u_delays):
                dw = dw + Hj @ sample(u, k2, m)
            if use_cubic:
                r = y - C @ (w + E @ y)
                s = r @ theta @ r
                if s != 0.0:
                    dw = dw - s * (N @ r)
            return dw

        n = G.shape[0]
        xhat0 = np.zeros(n) if xhat0 is None else check_vector(xhat0, "xhat0", size=n)
        W = np.empty((times.size, n))
        W[0] = xhat0 - E @ Y[0]
        for k in range(times.size - 1):
            w = W[k]
            k1 = rhs(2 * k, w)
            k2 = rhs(2 * k + 1, w + 0.5 * h * k1)
            k3 = rhs(2 * k + 1, w + 0.5 * h * k2)
            k4 = rhs(2 * k + 2, w + h * k3)
            W[k + 1] = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return W + Y @ E.T

    def fit_transform(self, plant, Y, times, U=None, xhat0=None):
        return self.fit(plant).transform(Y, times, U=U, xhat0=xhat0)


class LinearObserver(CubicObserver):
    """Same design as :class:`CubicObserver`; ``transform`` omits the cubic injection."""

    cubic = False
