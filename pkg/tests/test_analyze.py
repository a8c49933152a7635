import numpy as np
import pytest

from cubic_observer import PlantModel, SimulationConfig, Trace, design_linear_alpha, simulate_pair
from cubic_observer.analyze import (
    analytic_derivative_gap,
    check_theorem3,
    iae,
    initial_derivative_check,
    settling_time,
    summarize,
)
from cubic_observer.design import alpha_compatible_z1, design_linear_fullorder
from cubic_observer.exceptions import InvalidInputError
from cubic_observer.simulate import lyapunov_trace

A2 = np.array([[0.0, 1.0], [-2.0, -3.0]])
C2 = np.array([[1.0, 0.0]])


def make_trace(times, el, ec, P=None):
    P = np.eye(el.shape[1]) if P is None else P
    z = np.zeros_like(el)
    return Trace(times=times, x=z, xhat_linear=-el, xhat_cubic=-ec, e_linear=el, e_cubic=ec,
                 V_linear=lyapunov_trace(el, P), V_cubic=lyapunov_trace(ec, P), y=z[:, :1], ybar=z[:, :1])


def alpha_setup(alpha=1.0, theta=None):
    plant = PlantModel(A=A2, C=C2)
    d, _ = design_linear_alpha(plant, alpha, alpha_compatible_z1(A2, C2, alpha), theta=theta)
    return plant, d


def test_zero_error_summary():
    t = np.linspace(0, 1, 11)
    r = summarize(make_trace(t, np.zeros((11, 2)), np.zeros((11, 2))))
    assert r.iae_linear == 0.0 and r.settling_time_linear == 0.0 and r.dominance_status == "not-evaluated"


def test_iae_exponential():
    t = np.linspace(0.0, 10.0, 10001)
    e = np.exp(-t)[:, None] * np.array([[0.6, 0.8]])
    assert iae(t, e) == pytest.approx(1.0 - np.exp(-10.0), abs=1e-5)


def test_settling_time():
    t = np.linspace(0.0, 10.0, 10001)
    e = np.exp(-t)[:, None]
    assert settling_time(t, e) == pytest.approx(-np.log(0.02), abs=2e-3)
    assert settling_time(t, np.ones((t.size, 1))) is None


class TestTheorem3:
    def test_theta_zero(self):
        plant, d = alpha_setup(theta=np.zeros((1, 1)))
        tr = simulate_pair(plant, d, SimulationConfig(x0=[1.0, -1.0], xhat0=[0.0, 0.0]))
        r = check_theorem3(tr, d.P, 1.0, G=d.G)
        assert r.dominance_holds and r.max_dominance_excess == 0.0

    def test_cubic_starts_at_zero(self):
        t = np.linspace(0, 1, 11)
        el = np.exp(-t)[:, None] * np.ones((1, 2))
        r = check_theorem3(make_trace(t, el, np.zeros_like(el)), np.eye(2), 1.0)
        assert r.dominance_holds and r.first_violation_time is None

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_two_state_holds(self, alpha):
        plant, d = alpha_setup(alpha)
        tr = simulate_pair(plant, d, SimulationConfig(x0=[1.0, -1.0], xhat0=[0.0, 0.0]))
        r = check_theorem3(tr, d.P, alpha, G=d.G)
        assert r.dominance_status == "holds" and r.iae_cubic < r.iae_linear

    def test_violation_detected(self):
        t = np.linspace(0, 1, 11)
        el = np.exp(-t)[:, None] * np.ones((1, 2))
        ec = el.copy()
        ec[5:] *= 2.0
        r = check_theorem3(make_trace(t, el, ec), np.eye(2), 1.0)
        assert r.dominance_status == "violated" and r.first_violation_time == pytest.approx(0.5)

    def test_not_applicable_for_general_G(self):
        plant = PlantModel(A=A2, C=C2)
        d, _ = design_linear_fullorder(plant, [-2.0, -3.0])
        tr = simulate_pair(plant, d, SimulationConfig(x0=[1.0, -1.0], xhat0=[0.0, 0.0], t_end=1.0))
        r = check_theorem3(tr, d.P, 2.0, G=d.G)
        assert r.dominance_status == "not-applicable" and r.dominance_holds is None


class TestInitialDerivative:
    def test_kernel(self):
        _, d = alpha_setup()
        assert analytic_derivative_gap(d, [0.0, 1.0]) == 0.0

    def test_theta_zero(self):
        _, d = alpha_setup(theta=np.zeros((1, 1)))
        assert analytic_derivative_gap(d, [1.0, 1.0]) == 0.0

    def test_closed_form_and_finite_difference(self):
        plant, d = alpha_setup()
        rng = np.random.default_rng(5)
        for _ in range(5):
            e0 = rng.standard_normal(2)
            s = (C2 @ e0) @ (C2 @ e0)
            gap = initial_derivative_check(plant, d, e0, verify=True)
            assert gap == pytest.approx(-2.0 * d.gamma * s ** 2, rel=1e-10)

    def test_general_gain_formula(self):
        # any N, not only the closed form: gap = 2 s e0' P N C e0
        import dataclasses
        plant, d = alpha_setup()
        other = dataclasses.replace(d, N=np.array([[-0.7], [0.4]]))
        e0 = np.array([0.8, -0.3])
        s = (C2 @ e0) @ (C2 @ e0)
        expected = 2.0 * s * (e0 @ other.P @ other.N @ (C2 @ e0))
        assert initial_derivative_check(plant, other, e0, verify=True) == pytest.approx(expected, rel=1e-12)
