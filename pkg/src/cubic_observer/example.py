"""The published four-state output-delay example and its audit.

The printed compressed output matrix and output-injection gain are kept
verbatim so they can be compared against values recomputed here.
"""
import numpy as np

from . import numerics
from .design import PlantModel, compute_cbar

A = np.array([
    [-2.0, 0.0, 0.0, 1.0],
    [1.0, -2.0, 0.0, 0.0],
    [0.0, 0.0, -3.0, 1.0],
    [0.0, 0.0, 2.0, -2.0],
])
B1 = np.array([[0.0], [1.0], [-1.0], [1.0]])
C1 = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
C2 = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
D1, D2, DELTA1 = 0.0, 2.0, 0.0
POLES = [-10.0, -15.0, -12.0, -20.0]
PLANT_EIGENVALUES = [-2.0, -2.0, -4.0, -1.0]

PRINTED_CBAR = np.array([
    [1.0183, 2.0, 1.0, 7.3891],
    [1.0, 1.0, 54.5982, 1.0183],
])
PRINTED_L = np.array([
    [57.55, -11.18, -0.82, -1.98],
    [-3.99, -11.54, 0.72, 3.63],
]).T

X0 = [0.02, 0.02, 0.02, 0.02]
XHAT0 = [0.0, 0.0, 0.0, 0.0]
T_END = 5.0
STEP_H = 1e-3
INPUT = {"kind": "step", "amplitude": 1.0, "step_time": 0.0}

CBAR_MATCH_TOL = 1e-3


def plant():
    return PlantModel(A=A, output_delays=[(C1, D1), (C2, D2)], input_channels=[(B1, DELTA1)])


def _entry_match(a, b, tol=CBAR_MATCH_TOL):
    return np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))


def cbar_audit():
    """Compare the recomputed ``Cbar`` with the printed one, entry by entry.

    Also tests one candidate explanation for the printed values:
    ``C1 + C2 exp.(d2 A)`` where ``exp.`` is the entrywise exponential, used
    in place of the matrix exponential and with the sign of the exponent
    flipped.
    """
    computed = compute_cbar(A, [(C1, D1), (C2, D2)])
    match = _entry_match(computed, PRINTED_CBAR)
    elementwise = C1 + C2 @ np.exp(D2 * A)
    return {
        "computed_cbar": computed.tolist(),
        "printed_cbar": PRINTED_CBAR.tolist(),
        "entry_matches": match.tolist(),
        "n_matching_entries": int(match.sum()),
        "n_entries": int(match.size),
        "all_match": bool(match.all()),
        "max_abs_difference": float(np.abs(computed - PRINTED_CBAR).max()),
        "elementwise_exp_candidate": elementwise.tolist(),
        "printed_matches_elementwise_exp": bool(_entry_match(elementwise, PRINTED_CBAR).all()),
    }


def gain_audit(seed=0):
    """Closed-loop spectra for self-placed and printed gains against both ``Cbar`` variants."""
    computed = compute_cbar(A, [(C1, D1), (C2, D2)])
    out = {"plant_eigenvalues": numerics.eig(A)}
    for label, Cb in (("computed_cbar", computed), ("printed_cbar", PRINTED_CBAR)):
        L = numerics.place_poles(A, Cb, POLES, seed=seed)
        placed = numerics.eig(A - L @ Cb)
        out[label] = {
            "self_placed_L": L,
            "self_placed_eigenvalues": placed,
            "self_placed_error": numerics.match_spectra(placed, POLES),
            "printed_L_eigenvalues": numerics.eig(A - PRINTED_L @ Cb),
            "printed_L_error": numerics.match_spectra(numerics.eig(A - PRINTED_L @ Cb), POLES),
        }
    return out
