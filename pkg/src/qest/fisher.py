"""Logarithmic derivatives and Fisher information matrices.

Implements the symmetric and right logarithmic derivatives with their quantum
Fisher matrices, the classical Fisher matrix of a measured model, and the
commutator superoperator D used in the bound analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .models import ParametricModel, model_derivatives
from .qcore import DensityOperator, Povm, measure_distribution

SUPPORT_TOL = 1e-10
OFF_SUPPORT_TOL = 1e-10
RESIDUAL_TOL = 1e-8
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FisherMatrix:
    """A d x d Fisher information matrix with its flavor tag.

    ``sld`` and ``classical`` matrices are real symmetric PSD; ``rld`` is
    complex Hermitian PSD.  ``dropped_mass`` records outcome probability
    discarded below the floor when the matrix came from a measurement.
    """

    matrix: np.ndarray
    kind: str
    dropped_mass: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValidationError("Fisher matrix must be Hermitian")
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -1e-8:
            raise ValidationError("Fisher matrix must be positive semidefinite")
        if self.kind not in ("sld", "rld", "classical"):
            raise ValidationError(f"unknown Fisher kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def inverse(self) -> np.ndarray:
        m = self.matrix
        if np.linalg.cond(m) > 1e12:
            raise NumericalError(f"{self.kind} Fisher matrix is numerically singular")
        return np.linalg.inv(m)


@dataclass(frozen=True)
class LogDerivativeSet:
    """Logarithmic derivative operators and their defining-equation residuals."""

    operators: tuple
    residuals: tuple
    kind: str


def _frobenius(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def sld_fisher(model: ParametricModel, theta) -> tuple[LogDerivativeSet, FisherMatrix]:
    """Symmetric logarithmic derivatives L_k and their Fisher matrix.

    L_k solves the anticommutator equation (L rho + rho L)/2 = d rho/d theta_k
    in the eigenbasis of rho via L_jk = 2 (d rho)_jk / (lam_j + lam_k).
    Matrix elements between eigenvectors with lam_j + lam_k below the support
    tolerance are zeroed when the derivative vanishes there (gauge freedom)
    and rejected otherwise: the derivative leaves the support and the SLD does
    not exist.
    """
    t = model.require_domain(theta)
    rho = model.state_at(t)
    derivs = model_derivatives(model, t)
    lam, u = np.linalg.eigh(rho.matrix)
    denom = lam[:, None] + lam[None, :]
    ops = []
    residuals = []
    for k, dr in enumerate(derivs):
        dr_eig = u.conj().T @ dr @ u
        l_eig = np.zeros_like(dr_eig)
        small = denom < SUPPORT_TOL
        if np.any(small & (np.abs(dr_eig) > OFF_SUPPORT_TOL)):
            raise NumericalError(
                f"derivative {k} leaves the support of rho; SLD undefined"
            )
        ok = ~small
        l_eig[ok] = 2.0 * dr_eig[ok] / denom[ok]
        l_op = u @ l_eig @ u.conj().T
        l_op = (l_op + l_op.conj().T) / 2
        resid = _frobenius(
            (l_op @ rho.matrix + rho.matrix @ l_op) / 2 - dr
        )
        if resid > RESIDUAL_TOL:
            raise NumericalError(f"SLD residual {resid:.3e} exceeds {RESIDUAL_TOL}")
        ops.append(l_op)
        residuals.append(resid)
    d = len(ops)
    j = np.zeros((d, d))
    for a in range(d):
        for b in range(a, d):
            val = 0.5 * np.real(
                np.trace(rho.matrix @ (ops[a] @ ops[b] + ops[b] @ ops[a]))
            )
            j[a, b] = val
            j[b, a] = val
    return (
        LogDerivativeSet(tuple(ops), tuple(residuals), "sld"),
        FisherMatrix(j, "sld"),
    )


def rld_fisher(model: ParametricModel, theta) -> tuple[LogDerivativeSet, FisherMatrix]:
    """Right logarithmic derivatives L_k = rho^{-1} d rho and their Fisher matrix.

    Requires strictly positive rho.  The matrix entries are
    j[k, l] = Tr(rho L_k L_l^*), which is the Hermitian PSD ordering that
    reproduces the Gaussian-family identity inverse(j_rld) = v + i s.
    """
    t = model.require_domain(theta)
    rho = model.state_at(t)
    lam = np.linalg.eigvalsh(rho.matrix)
    if lam.min() <= SUPPORT_TOL:
        raise NumericalError(
            "RLD undefined: state is pure or rank-deficient "
            f"(min eigenvalue {lam.min():.3e})"
        )
    derivs = model_derivatives(model, t)
    rho_inv = np.linalg.inv(rho.matrix)
    ops = []
    residuals = []
    for dr in derivs:
        l_op = rho_inv @ dr
        resid = _frobenius(rho.matrix @ l_op - dr)
        if resid > RESIDUAL_TOL:
            raise NumericalError(f"RLD residual {resid:.3e} exceeds {RESIDUAL_TOL}")
        ops.append(l_op)
        residuals.append(resid)
    d = len(ops)
    j = np.zeros((d, d), dtype=complex)
    for a in range(d):
        for b in range(d):
            j[a, b] = np.trace(rho.matrix @ ops[a] @ ops[b].conj().T)
    j = (j + j.conj().T) / 2
    return (
        LogDerivativeSet(tuple(ops), tuple(residuals), "rld"),
        FisherMatrix(j, "rld"),
    )


def classical_fisher(model: ParametricModel, theta, m: Povm) -> FisherMatrix:
    """Fisher information of the outcome distribution of measuring ``m``.

    j[k, l] = sum_w (d_k p_w)(d_l p_w) / p_w with p_w = Tr(rho M_w) including
    quadrature weights.  Outcomes with mass below the floor 1e-12 are dropped
    and the discarded mass recorded on the result.
    """
    t = model.require_domain(theta)
    rho = model.state_at(t)
    if rho.dim != m.dim:
        raise ValidationError("model and POVM dimension mismatch")
    derivs = model_derivatives(model, t)
    d = len(derivs)
    probs = measure_distribution(rho, m).probs
    weights = m.weights if m.weights is not None else np.ones(len(m))
    keep = probs > PROB_FLOOR
    dropped = float(probs[~keep].sum())
    if not keep.any():
        raise NumericalError("all outcomes fall below the probability floor")
    dp = np.zeros((d, len(m)))
    for k, dr in enumerate(derivs):
        dp[k] = [float(np.real(np.sum(dr.T * e))) for e in m.elements]
        dp[k] *= weights
    j = np.zeros((d, d))
    for a in range(d):
        for b in range(a, d):
            val = float(np.sum(dp[a, keep] * dp[b, keep] / probs[keep]))
            j[a, b] = val
            j[b, a] = val
    return FisherMatrix(j, "classical", dropped_mass=dropped)


def d_map(rho: DensityOperator, x: np.ndarray) -> np.ndarray:
    """Commutator superoperator D at state rho applied to Hermitian x.

    Defined by Tr((D(X) o Y) rho) = -i Tr([X, Y] rho) for all Hermitian Y;
    in the eigenbasis of rho this is
    D(X)_jk = -2i (lam_j - lam_k) / (lam_j + lam_k) X_jk.
    """
    x = np.asarray(x, dtype=complex)
    if np.max(np.abs(x - x.conj().T)) > 1e-10:
        raise ValidationError("d_map input must be Hermitian")
    lam, u = np.linalg.eigh(rho.matrix)
    if lam.min() <= SUPPORT_TOL:
        raise NumericalError("d_map requires strictly positive rho")
    x_eig = u.conj().T @ x @ u
    num = lam[:, None] - lam[None, :]
    den = lam[:, None] + lam[None, :]
    out_eig = -2j * (num / den) * x_eig
    out = u @ out_eig @ u.conj().T
    return (out + out.conj().T) / 2
