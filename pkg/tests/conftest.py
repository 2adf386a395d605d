import math
from itertools import product

import numpy as np
import pytest

_QUBIT_BASES = {
    "z": np.eye(2, dtype=complex),
    "x": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "y": np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2),
}


def two_qubit_pauli_effects() -> np.ndarray:
    """Informationally complete 9-setting product set on a 4-dim space."""
    blocks = []
    for b0, b1 in product("zxy", repeat=2):
        effects = []
        for k0, k1 in product(range(2), repeat=2):
            p0 = np.outer(_QUBIT_BASES[b0][:, k0], _QUBIT_BASES[b0][:, k0].conj())
            p1 = np.outer(_QUBIT_BASES[b1][:, k1], _QUBIT_BASES[b1][:, k1].conj())
            effects.append(np.kron(p0, p1))
        blocks.append(effects)
    return np.asarray(blocks)


def random_density(rng: np.random.Generator, dim: int = 16) -> np.ndarray:
    """Full-rank random density operator (Ginibre construction)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.real(np.trace(rho))


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return vec / np.linalg.norm(vec)


def random_product_density(rng: np.random.Generator) -> np.ndarray:
    """Random state with no entanglement across the signal/idler cut.

    Each party holds (pol, time); the joint ordering (pol_s, time_s,
    pol_i, time_i) keeps the party cut contiguous, so the product is a
    plain Kronecker product of two 4x4 party states.
    """
    return np.kron(random_density(rng, 4), random_density(rng, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)
