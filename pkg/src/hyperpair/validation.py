"""Input-validation helpers shared across the toolkit.

The numeric tolerances used for state/operator checks live here so that
constructors, estimators, and tests all agree on one set of constants.
"""

from __future__ import annotations

import numpy as np

# Unit-norm tolerance for state vectors (on sum |amplitude|^2 - 1).
NORM_ATOL = 1e-12
# Hermiticity and unit-trace tolerances for density operators.
HERMITICITY_ATOL = 1e-10
TRACE_ATOL = 1e-10
# Smallest admissible eigenvalue of a density operator.
EIGENVALUE_FLOOR = -1e-9


def check_state_vector(state, dim: int | None = None) -> np.ndarray:
    """Validate and return a unit-norm complex state vector.

    Raises ValueError if the input is not one-dimensional, has the wrong
    dimension, or is not normalized within ``NORM_ATOL``.
    """
    vec = np.asarray(state, dtype=complex)
    if vec.ndim != 1:
        raise ValueError(f"state vector must be 1-D, got shape {vec.shape}")
    if dim is not None and vec.size != dim:
        raise ValueError(f"state vector has dimension {vec.size}, expected {dim}")
    norm_sq = float(np.sum(np.abs(vec) ** 2))
    if abs(norm_sq - 1.0) > NORM_ATOL:
        raise ValueError(f"state vector is not normalized: sum |a|^2 = {norm_sq!r}")
    return vec


def check_density_operator(rho, dim: int | None = None) -> np.ndarray:
    """Validate and return a density operator.

    Checks square shape, Hermiticity, unit trace, and the eigenvalue floor
    at the module tolerances; raises ValueError naming the failed invariant.
    """
    mat = np.asarray(rho, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"density operator must be square, got shape {mat.shape}")
    if dim is not None and mat.shape[0] != dim:
        raise ValueError(f"density operator has dimension {mat.shape[0]}, expected {dim}")
    herm_dev = float(np.max(np.abs(mat - mat.conj().T)))
    if herm_dev > HERMITICITY_ATOL:
        raise ValueError(f"density operator is not Hermitian: max |rho - rho^dag| = {herm_dev:.3e}")
    trace_dev = abs(complex(np.trace(mat)) - 1.0)
    if trace_dev > TRACE_ATOL:
        raise ValueError(f"density operator trace deviates from 1 by {trace_dev:.3e}")
    min_eig = float(np.linalg.eigvalsh(mat)[0])
    if min_eig < EIGENVALUE_FLOOR:
        raise ValueError(f"density operator has eigenvalue {min_eig:.3e} below the floor")
    return mat


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_non_negative(name: str, value: float) -> float:
    value = float(value)
    if value < 0.0:
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    return value
