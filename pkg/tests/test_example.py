import numpy as np
import pytest

from cubic_observer import CubicObserver, SignalSpec, SimulationConfig, example, numerics
from cubic_observer.analyze import check_theorem3

from conftest import taylor_expm


def test_plant_eigenvalues():
    assert numerics.match_spectra(numerics.eig(example.A), [-2, -2, -4, -1]) <= 1e-8


def test_cbar_audit():
    audit = example.cbar_audit()
    ref = example.C1 + example.C2 @ taylor_expm(-2.0 * example.A)
    np.testing.assert_allclose(audit["computed_cbar"], ref, rtol=1e-10)
    assert audit["n_matching_entries"] == 0 and not audit["all_match"]
    assert audit["printed_matches_elementwise_exp"]
    np.testing.assert_allclose(audit["elementwise_exp_candidate"],
                               [[1 + np.exp(-4), 2, 1, np.exp(2)], [1, 1, np.exp(4), 1 + np.exp(-4)]])


def test_gain_audit():
    g = example.gain_audit()
    assert g["computed_cbar"]["self_placed_error"] <= 1e-6
    assert g["printed_cbar"]["self_placed_error"] <= 1e-6
    # printed gain misses the stated poles with either Cbar
    np.testing.assert_allclose(np.sort(g["printed_cbar"]["printed_L_eigenvalues"].real),
                               [-20.6158, -14.9596, -11.6738, -10.0207], atol=1e-4)
    assert g["printed_cbar"]["printed_L_error"] > 0.5
    assert g["computed_cbar"]["printed_L_error"] > 1e3


def run_example(C_eff, mode):
    est = CubicObserver(poles=example.POLES, C_eff=C_eff).fit(example.plant())
    cfg = SimulationConfig(x0=example.X0, xhat0=example.XHAT0, t_end=example.T_END, step_h=example.STEP_H,
                           inputs=[SignalSpec.from_dict(example.INPUT)])
    tr = est.simulate(cfg, mode=mode)
    return check_theorem3(tr, est.design_.P, 0.0, G=est.design_.G)


def test_printed_cbar_cubic_better():
    r = run_example(example.PRINTED_CBAR, "oracle")
    assert r.dominance_status == "not-applicable"
    assert r.iae_cubic < r.iae_linear
    assert r.iae_cubic / r.iae_linear == pytest.approx(0.9608, abs=5e-4)


def test_computed_cbar_outcome_recorded():
    # with the true Cbar the cubic observer is marginally worse on this run
    r = run_example(None, "measurement")
    assert r.iae_cubic / r.iae_linear == pytest.approx(1.0025, abs=5e-4)
