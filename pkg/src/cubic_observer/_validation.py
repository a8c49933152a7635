"""Input validation helpers.

Every public entry point funnels its array arguments through these so that
shape and finiteness errors surface with the argument name attached.
"""
import numpy as np

from .exceptions import DimensionError, InvalidInputError


def check_matrix(M, name="matrix", shape=None, square=False):
    """Return ``M`` as a finite 2-D float array.

    ``shape`` may contain ``None`` wildcards, e.g. ``(n, None)``.
    """
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got {arr.ndim} dimensions")
    if arr.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if shape is not None:
        for axis, (want, got) in enumerate(zip(shape, arr.shape)):
            if want is not None and want != got:
                raise DimensionError(
                    f"{name} has shape {arr.shape}; axis {axis} must be {want}")
    return arr


def check_vector(v, name="vector", size=None):
    arr = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if size is not None and arr.size != size:
        raise DimensionError(f"{name} has length {arr.size}, expected {size}")
    return arr


def check_symmetric(M, name="matrix", atol=1e-10):
    arr = check_matrix(M, name, square=True)
    scale = max(1.0, np.abs(arr).max())
    if np.abs(arr - arr.T).max() > atol * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


def check_psd(M, name="matrix", strict=False):
    """Symmetric and positive (semi)definite, judged by the smallest eigenvalue."""
    arr = check_symmetric(M, name)
    w = np.linalg.eigvalsh(arr)
    floor = -1e-12 * max(1.0, np.abs(w).max())
    if strict and w.min() <= 0:
        raise InvalidInputError(f"{name} must be positive definite (min eigenvalue {w.min():.3g})")
    if not strict and w.min() < floor:
        raise InvalidInputError(f"{name} must be positive semidefinite (min eigenvalue {w.min():.3g})")
    return arr


def check_positive(x, name="value", allow_zero=False):
    x = float(x)
    if not np.isfinite(x) or x < 0 or (x == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidInputError(f"{name} must be finite and {bound}, got {x}")
    return x
