import numpy as np
import pytest

from qest.qcore import DensityOperator, Povm

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def random_density(rng, dim=2) -> DensityOperator:
    """Ginibre-random full-rank state."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T + 1e-6 * np.eye(dim)
    return DensityOperator(m / np.real(np.trace(m)))


def random_povm(rng, dim=2, outcomes=3) -> Povm:
    """Random complete POVM via the square-root normalization trick."""
    raw = []
    for _ in range(outcomes):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        raw.append(g @ g.conj().T + 1e-9 * np.eye(dim))
    total = sum(raw)
    w, u = np.linalg.eigh(total)
    t_isqrt = (u * (w**-0.5)) @ u.conj().T
    return Povm([t_isqrt @ a @ t_isqrt for a in raw])


def random_hermitian(rng, dim=2) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
