"""Exact checks of the quantum central limit theorem.

Moments of normalized collective operators X^(n) = sum_j X_(j)/sqrt(n) under
n-fold product states, computed two independent ways: a combinatorial engine
whose cost does not depend on the Hilbert-space dimension of the n-fold
product, and a brute-force tensor engine for small n.  The gap against the
Wick moments of the limiting Gaussian spec quantifies the convergence rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import NumericalError, ValidationError
from .gaussian import GaussianSpec, gaussian_moment, smearing_kernel
from .qcore import DEFAULT_DIM_CAP, DensityOperator
from .bounds import pair_moments

COLLECTIVE_DEGREE_CAP = 8
CENTERING_TOL = 1e-12


@dataclass(frozen=True)
class CollectiveSpec:
    """A state with a centered Hermitian operator tuple and its pair moments.

    Operators are centered on construction (X - Tr(rho X) I); the pair-moment
    matrices v, s must satisfy v + i s >= 0.
    """

    rho: DensityOperator
    x_ops: tuple
    v: np.ndarray
    s: np.ndarray

    def __init__(self, rho: DensityOperator, x_ops):
        ops = []
        for x in x_ops:
            x = np.asarray(x, dtype=complex)
            if x.shape != (rho.dim, rho.dim):
                raise ValidationError("operator dimension mismatch")
            if np.max(np.abs(x - x.conj().T)) > 1e-10:
                raise ValidationError("collective operators must be Hermitian")
            mean = np.real(np.trace(rho.matrix @ x))
            xc = x - mean * np.eye(rho.dim)
            resid = abs(np.trace(rho.matrix @ xc))
            if resid > CENTERING_TOL:
                raise ValidationError(f"centering residual {resid:.3e}")
            xc.setflags(write=False)
            ops.append(xc)
        v, s = pair_moments(rho.matrix, ops)
        if np.linalg.eigvalsh(v + 1j * s).min() < -1e-10:
            raise ValidationError("pair moments violate v + i s >= 0")
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "x_ops", tuple(ops))
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "s", s)

    @property
    def n_ops(self) -> int:
        return len(self.x_ops)

    def limit_spec(self) -> GaussianSpec:
        return GaussianSpec(np.zeros(self.n_ops), self.v, self.s)


def _set_partitions(seq: tuple):
    if not seq:
        yield []
        return
    first, rest = seq[0], seq[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def _falling_factorial(n: int, b: int) -> int:
    return prod(range(n - b + 1, n + 1)) if b <= n else 0


def _check_word(spec: CollectiveSpec, word) -> list[int]:
    idx = [int(k) - 1 for k in word]
    if any(k < 0 or k >= spec.n_ops for k in idx):
        raise ValidationError("word index out of range (indices are 1-based)")
    if len(idx) > COLLECTIVE_DEGREE_CAP:
        raise ValidationError(
            f"word degree {len(idx)} exceeds cap {COLLECTIVE_DEGREE_CAP}"
        )
    return idx


def collective_moment(spec: CollectiveSpec, n: int, word) -> complex:
    """Exact Tr rho^(x)n X^{k1,(n)} ... X^{km,(n)} for the index word.

    Expands the product over site assignments and groups them by the set
    partition of positions sharing a site: each partition with b blocks
    contributes n(n-1)..(n-b+1) times the product of per-site traces.  Blocks
    of size one vanish by centering, so only partitions with all blocks of
    size >= 2 survive; the cost depends on the word degree only.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    idx = _check_word(spec, word)
    m = len(idx)
    if m == 0:
        return 1.0 + 0.0j
    cache: dict = {}

    def block_trace(positions) -> complex:
        key = tuple(idx[p] for p in positions)
        if key not in cache:
            mat = spec.x_ops[key[0]]
            for k in key[1:]:
                mat = mat @ spec.x_ops[k]
            cache[key] = complex(np.trace(spec.rho.matrix @ mat))
        return cache[key]

    total = 0.0 + 0.0j
    for part in _set_partitions(tuple(range(m))):
        if any(len(block) < 2 for block in part):
            continue
        ff = _falling_factorial(n, len(part))
        if ff == 0:
            continue
        term = complex(ff)
        for block in part:
            term *= block_trace(tuple(block))
        total += term
    return total / n ** (m / 2)


def build_collective_ops(x_ops, n: int, dim_cap: int = DEFAULT_DIM_CAP) -> list[np.ndarray]:
    """Dense matrices of X^(n) = sum_j X_(j) / sqrt(n) on the n-fold space."""
    dim = x_ops[0].shape[0]
    if dim**n > dim_cap:
        raise NumericalError(f"dimension {dim}^{n} exceeds cap {dim_cap}")
    eye = np.eye(dim, dtype=complex)
    out = []
    for x in x_ops:
        total = np.zeros((dim**n, dim**n), dtype=complex)
        for j in range(n):
            factor = np.eye(1, dtype=complex)
            for site in range(n):
                factor = np.kron(factor, x if site == j else eye)
            total += factor
        out.append(total / np.sqrt(n))
    return out


def collective_moment_bruteforce(
    spec: CollectiveSpec, n: int, word, dim_cap: int = DEFAULT_DIM_CAP
) -> complex:
    """Oracle for collective_moment: explicit tensor-product computation."""
    idx = _check_word(spec, word)
    ops = build_collective_ops(spec.x_ops, n, dim_cap)
    rho_n = spec.rho.matrix
    for _ in range(n - 1):
        rho_n = np.kron(rho_n, spec.rho.matrix)
    mat = np.eye(spec.rho.dim**n, dtype=complex)
    for k in idx:
        mat = mat @ ops[k]
    return complex(np.trace(rho_n @ mat))


def clt_gap(spec: CollectiveSpec, n_list, word) -> list[tuple[int, float]]:
    """Absolute gap between collective moments and the limiting Wick moments."""
    limit = gaussian_moment(spec.limit_spec(), word)
    out = []
    for n in n_list:
        exact = collective_moment(spec, int(n), word)
        out.append((int(n), float(abs(exact - limit))))
    return out


def t_operator_on_sums(
    spec: CollectiveSpec,
    n: int,
    theta_prime,
    v_prime,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> np.ndarray:
    """Gaussian-smearing operator of the collective sums on the n-fold space.

    Builds exp(-(X^(n) - theta')^T A (X^(n) - theta')) / Z with the kernel
    matrix A and normalization Z fixed by the limiting commutator matrix of
    the spec (the normalization is the one certified by discretized
    completeness; see smearing_kernel).  Output is Hermitian PSD.
    """
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    d = theta_prime.size
    if d > spec.n_ops:
        raise ValidationError("theta' longer than the operator tuple")
    v_prime = np.asarray(v_prime, dtype=float)
    a_mat, z_norm = smearing_kernel(v_prime, spec.s[:d, :d])
    ops = build_collective_ops(spec.x_ops[:d], n, dim_cap)
    big = ops[0].shape[0]
    eye = np.eye(big, dtype=complex)
    shifted = [ops[k] - theta_prime[k] * eye for k in range(d)]
    quad = np.zeros((big, big), dtype=complex)
    for k in range(d):
        for l in range(d):
            if a_mat[k, l] != 0.0:
                quad += a_mat[k, l] * (shifted[k] @ shifted[l])
    quad = (quad + quad.conj().T) / 2
    w, u = np.linalg.eigh(quad)
    t_mat = (u * np.exp(-w)) @ u.conj().T / z_norm
    return (t_mat + t_mat.conj().T) / 2
