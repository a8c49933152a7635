"""Dense real-matrix kernels: pseudoinverse, exponential, Lyapunov, eigenvalues, pole placement."""
import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ._validation import check_matrix, check_psd
from .exceptions import DimensionError, InfeasibleDesignError, InvalidInputError

PINV_RCOND = 1e-12
RANK_RTOL = 1e-9
HURWITZ_MARGIN = 1e-9
REPEAT_PERTURBATION = 1e-6
PLACEMENT_ATOL = 1e-6


def pinv(M, rcond=PINV_RCOND, atol=0.0):
    """Moore-Penrose inverse via SVD.

    Singular values at or below ``max(rcond * sigma_max, atol)`` count as zero.
    """
    M = check_matrix(M, "M")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.T.shape)
    keep = s > max(rcond * s[0], atol)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, rtol=RANK_RTOL):
    """Rank with a relative singular-value cutoff.

    The default cutoff is looser than numpy's eps-based one because the
    matrices tested here (e.g. ``W`` after pole placement) carry the
    round-off of an earlier design step.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def expm(M):
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    M = check_matrix(M, "M", square=True)
    return scipy.linalg.expm(M)


def eig(M):
    """All eigenvalues of a square matrix, sorted by (real, imag) for determinism."""
    M = check_matrix(M, "M", square=True)
    return np.sort_complex(np.linalg.eigvals(M).astype(complex))


def is_hurwitz(G, margin=HURWITZ_MARGIN):
    return bool(np.max(eig(G).real) < -margin)


def lyap_solve(G, Q):
    """Solve ``G.T @ P + P @ G = -Q`` for symmetric positive definite ``P``.

    Raises :class:`InfeasibleDesignError` if ``G`` is not Hurwitz.
    """
    G = check_matrix(G, "G", square=True)
    Q = check_psd(check_matrix(Q, "Q", shape=G.shape), "Q", strict=True)
    if not is_hurwitz(G):
        raise InfeasibleDesignError(
            f"G is not Hurwitz (max Re eig = {np.max(eig(G).real):.3g})")
    P = scipy.linalg.solve_continuous_lyapunov(G.T, -Q)
    return 0.5 * (P + P.T)


def obsv(A, C):
    """Observability matrix ``[C; CA; ...; CA^(n-1)]``."""
    A = check_matrix(A, "A", square=True)
    C = check_matrix(C, "C", shape=(None, A.shape[0]))
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def is_observable(A, C):
    return numerical_rank(obsv(A, C), rtol=1e-12) == np.shape(A)[0]


def match_spectra(a, b):
    """Largest distance after optimally pairing two equal-length eigenvalue lists."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size != b.size:
        raise DimensionError(f"spectra have different lengths {a.size} and {b.size}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _conjugate_pairs(poles, tol):
    """Split into real poles and upper-half-plane representatives; check conjugate closure."""
    remaining = list(poles)
    reals, pairs = [], []
    while remaining:
        p = remaining.pop(0)
        if abs(p.imag) <= tol * max(1.0, abs(p)):
            reals.append(p.real)
            continue
        dist = [abs(q - np.conj(p)) for q in remaining]
        if not dist or min(dist) > tol * max(1.0, abs(p)):
            raise InvalidInputError(f"desired pole {p} has no conjugate partner")
        remaining.pop(int(np.argmin(dist)))
        pairs.append(complex(p.real, abs(p.imag)))
    return reals, pairs


def _separate_repeats(values, max_multiplicity, key):
    """Shift the k-th extra copy of a repeated value by k*1e-6 once multiplicity exceeds the limit."""
    out, notes = [], []
    groups = {}
    for v in values:
        for rep in groups:
            if abs(rep - v) <= 1e-9 * max(1.0, abs(v)):
                groups[rep].append(v)
                break
        else:
            groups[v] = [v]
    for rep, members in groups.items():
        if len(members) <= max_multiplicity:
            out.extend(members)
            continue
        for k, v in enumerate(members):
            shifted = v + k * REPEAT_PERTURBATION
            out.append(shifted)
            if k:
                notes.append({"pole": key(v), "placed_at": key(shifted)})
    return out, notes


def place_poles(A, C, desired, seed=0, max_tries=50, return_info=False):
    """Output-injection gain ``L`` with ``eig(A - L @ C)`` equal to ``desired``.

    Solves the dual state-feedback problem for ``(A.T, C.T)`` with the
    Sylvester-equation method: for a real block-diagonal ``Lam`` carrying the
    target spectrum and a random ``F``, solve ``A.T X - X Lam = C.T F`` and
    take ``K = F X^-1``. A singular ``X`` (or a plant eigenvalue shared with
    ``Lam``) triggers a retry with a new draw and a random preliminary gain.

    A value repeated more often than ``rank(C)`` cannot be placed with a
    diagonalizable closed loop, so its extra copies are shifted by 1e-6;
    the shifts are listed in ``info["perturbed"]``.
    """
    A = check_matrix(A, "A", square=True)
    n = A.shape[0]
    C = check_matrix(C, "C", shape=(None, n))
    desired = np.asarray(desired, dtype=complex).ravel()
    if desired.size != n:
        raise DimensionError(f"need {n} desired poles, got {desired.size}")
    if not np.all(np.isfinite(desired)):
        raise InvalidInputError("desired poles must be finite")
    if not is_observable(A, C):
        raise InfeasibleDesignError("(A, C) is not observable; poles cannot be assigned")

    reals, pairs = _conjugate_pairs(desired, tol=1e-9)
    p = numerical_rank(C)
    reals, notes_r = _separate_repeats(reals, p, key=float)
    pairs, notes_c = _separate_repeats(pairs, p, key=lambda z: [z.real, z.imag])
    targets = np.array(reals + [z for z in pairs] + [np.conj(z) for z in pairs], dtype=complex)

    Lam = np.zeros((n, n))
    i = 0
    for r in reals:
        Lam[i, i] = r
        i += 1
    for z in pairs:
        Lam[i:i + 2, i:i + 2] = [[z.real, z.imag], [-z.imag, z.real]]
        i += 2

    At, Bt = A.T, C.T
    m = Bt.shape[1]
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(max_tries):
        F = rng.standard_normal((m, n))
        K0 = np.zeros((m, n)) if attempt == 0 else rng.standard_normal((m, n))
        A0 = At - Bt @ K0
        try:
            X = scipy.linalg.solve_sylvester(A0, -Lam, Bt @ F)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            continue
        if not np.all(np.isfinite(X)) or np.linalg.cond(X) > 1e12:
            continue
        K = K0 + np.linalg.solve(X.T, F.T).T
        err = match_spectra(eig(At - Bt @ K), targets)
        if best is None or err < best[0]:
            best = (err, K, attempt)
        if err <= PLACEMENT_ATOL * 0.1:
            break
    if best is None or best[0] > PLACEMENT_ATOL:
        achieved = None if best is None else best[0]
        raise InfeasibleDesignError(
            f"pole placement failed after {max_tries} attempts (best error {achieved})")
    L = best[1].T
    if return_info:
        return L, {
            "perturbed": notes_r + notes_c,
            "targets": targets,
            "attempts": best[2] + 1,
            "placement_error": best[0],
        }
    return L
