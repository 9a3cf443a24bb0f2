"""Quantum Gaussian machinery.

Abstract canonical-commutation Gaussian specs with moments by pairing
enumeration, the Gaussian-smearing POVM outcome density, truncated-Fock
numerics for one-mode displaced thermal states, number and heterodyne
measurements, the beam-splitter concentration network, and the Monte Carlo
estimation protocol that exploits it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError, ValidationError
from .qcore import DensityOperator, OutcomeDistribution

MOMENT_DEGREE_CAP = 10
DEFAULT_TAIL_TOL = 1e-8
FOCK_MARGIN = 64

# one-mode commutator matrix for quadrature means theta = (sqrt2 Re zeta, sqrt2 Im zeta)
ONE_MODE_S = np.array([[0.0, 0.5], [-0.5, 0.0]])


def one_mode_covariance(noise: float) -> np.ndarray:
    return (noise + 0.5) * np.eye(2)


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector, covariance and commutator matrix of a CCR Gaussian state.

    ``v`` must be symmetric and ``s`` antisymmetric (1e-12), with
    v + i s >= 0 within 1e-10.
    """

    theta: np.ndarray
    v: np.ndarray
    s: np.ndarray

    def __init__(self, theta, v, s):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        v = np.asarray(v, dtype=float)
        s = np.asarray(s, dtype=float)
        d = theta.size
        if v.shape != (d, d) or s.shape != (d, d):
            raise ValidationError("v and s must be d x d for a d-dim mean")
        if np.max(np.abs(v - v.T)) > 1e-12:
            raise ValidationError("v must be symmetric")
        if np.max(np.abs(s + s.T)) > 1e-12:
            raise ValidationError("s must be antisymmetric")
        if np.linalg.eigvalsh(v + 1j * s).min() < -1e-10:
            raise ValidationError("v + i s must be positive semidefinite")
        for name, arr in (("theta", theta), ("v", (v + v.T) / 2), ("s", (s - s.T) / 2)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.theta.size


def _pairings(positions: tuple):
    """Yield perfect matchings as tuples of position pairs (p, q), p < q."""
    if not positions:
        yield ()
        return
    first, rest = positions[0], positions[1:]
    for i, second in enumerate(rest):
        remaining = rest[:i] + rest[i + 1 :]
        for tail in _pairings(remaining):
            yield ((first, second),) + tail


def gaussian_moment(spec: GaussianSpec, indices) -> complex:
    """Centered moment of the Gaussian state for an index word.

    Odd length gives zero; even length 2n enumerates all (2n-1)!! pairings of
    the word positions, each contributing the product of pair factors
    v[k, j] + i s[k, j] taken in position order.
    """
    word = [int(k) - 1 for k in indices]
    if any(k < 0 or k >= spec.dim for k in word):
        raise ValidationError("moment index out of range (indices are 1-based)")
    if len(word) > MOMENT_DEGREE_CAP:
        raise ValidationError(f"moment degree {len(word)} exceeds cap {MOMENT_DEGREE_CAP}")
    if len(word) % 2 == 1:
        return 0.0 + 0.0j
    if len(word) == 0:
        return 1.0 + 0.0j
    m2 = spec.v + 1j * spec.s
    total = 0.0 + 0.0j
    for pairing in _pairings(tuple(range(len(word)))):
        term = 1.0 + 0.0j
        for p, q in pairing:
            term *= m2[word[p], word[q]]
        total += term
    return total


def _matrix_abs(m: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(m.T @ m)
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T


def _f_scalar(x: float) -> float:
    # f(x) = log((1+x)/(1-x))/(4x), continuously 1/2 at x = 0
    if x < 1e-6:
        return 0.5 * (1.0 + x * x / 3.0)
    return float(np.log((1.0 + x) / (1.0 - x)) / (4.0 * x))


def smearing_kernel(v_prime: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, float]:
    """Exponent matrix and normalization of the Gaussian-smearing POVM density.

    Returns (A, Z) such that the POVM density at displacement theta' is
    exp(-(X - theta')^T A (X - theta')) / Z.  The eigenvalues of
    |v'^{-1/2} s v'^{-1/2}| must all be below one or the kernel diverges.
    """
    v_prime = np.asarray(v_prime, dtype=float)
    s = np.asarray(s, dtype=float)
    d = v_prime.shape[0]
    w, u = np.linalg.eigh((v_prime + v_prime.T) / 2)
    if w.min() <= 0:
        raise ValidationError("v' must be positive definite")
    v_isqrt = (u * (w**-0.5)) @ u.T
    m = v_isqrt @ s @ v_isqrt
    abs_m = _matrix_abs(m)
    wa, ua = np.linalg.eigh(abs_m)
    if wa.max() >= 1.0 - 1e-12:
        raise NumericalError(
            "eigenvalue condition violated: |v'^{-1/2} s v'^{-1/2}| has an "
            f"eigenvalue {wa.max():.6f} >= 1"
        )
    f_m = (ua * np.array([_f_scalar(x) for x in wa])) @ ua.T
    a = v_isqrt @ f_m @ v_isqrt
    z = (
        (2 * np.pi) ** (d / 2)
        * np.sqrt(np.linalg.det(v_prime))
        * float(np.linalg.det(np.eye(d) - abs_m @ abs_m)) ** 0.25
    )
    return a, z


def t_density(theta_prime, v_prime, spec: GaussianSpec) -> float:
    """Outcome density of the smearing POVM at theta' under the spec's state.

    The density is the normal law exp(-(th - th')^T (v + v')^{-1} (th - th')/2)
    / ((2 pi)^{d/2} det(v + v')^{1/2}).
    """
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    v_prime = np.asarray(v_prime, dtype=float)
    if theta_prime.shape != (spec.dim,) or v_prime.shape != (spec.dim, spec.dim):
        raise ValidationError("theta' and v' must match the spec dimension")
    if np.max(np.abs(v_prime - v_prime.T)) > 1e-12:
        raise ValidationError("v' must be symmetric")
    smearing_kernel(v_prime, spec.s)  # validates positivity + eigenvalue condition
    total = spec.v + v_prime
    sign, logdet = np.linalg.slogdet(total)
    if sign <= 0:
        raise NumericalError("v + v' is numerically singular")
    diff = spec.theta - theta_prime
    quad = float(diff @ np.linalg.solve(total, diff))
    d = spec.dim
    return float(np.exp(-0.5 * quad) / ((2 * np.pi) ** (d / 2) * np.exp(0.5 * logdet)))


# ---------------------------------------------------------------------------
# truncated Fock-space numerics
# ---------------------------------------------------------------------------


def annihilation_operator(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def quadrature_operators(dim: int) -> tuple[np.ndarray, np.ndarray]:
    a = annihilation_operator(dim)
    q = (a + a.conj().T) / np.sqrt(2.0)
    p = 1j * (a.conj().T - a) / np.sqrt(2.0)
    return q, p


def coherent_vector(alpha: complex, dim: int) -> np.ndarray:
    k = np.arange(dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim, dtype=float)))))
    if alpha == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        return vec
    log_mag = k * np.log(np.abs(alpha)) - 0.5 * log_fact - 0.5 * abs(alpha) ** 2
    phase = np.exp(1j * k * np.angle(alpha))
    return np.exp(log_mag) * phase


@dataclass(frozen=True)
class FockState:
    """Truncated Fock-basis density matrix with its recorded tail mass."""

    cutoff: int
    matrix: np.ndarray
    tail_mass: float

    def density_operator(self) -> DensityOperator:
        return DensityOperator(self.matrix)


def thermal_probabilities(noise: float, dim: int) -> np.ndarray:
    if noise == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    k = np.arange(dim)
    return (noise / (noise + 1.0)) ** k / (noise + 1.0)


def fock_density(zeta: complex, noise: float, cutoff: int, tail_tol: float = DEFAULT_TAIL_TOL) -> FockState:
    """Displaced thermal state in the Fock basis.

    Built as D(zeta) rho_thermal D(zeta)^dagger on a working space with edge
    margin, then cropped to ``cutoff``.  The mass lost to truncation must stay
    below ``tail_tol``; the cropped matrix is renormalized to unit trace.
    """
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    if cutoff < 1:
        raise ValidationError("cutoff must be positive")
    margin = max(FOCK_MARGIN, int(8 * abs(zeta) ** 2))
    work = cutoff + margin
    therm = thermal_probabilities(noise, work)
    if zeta == 0:
        mat = np.diag(therm.astype(complex))
    else:
        a = annihilation_operator(work)
        disp = expm(zeta * a.conj().T - np.conj(zeta) * a)
        mat = (disp * therm) @ disp.conj().T
    cropped = mat[:cutoff, :cutoff]
    tail = float(1.0 - np.real(np.trace(cropped)))
    if tail >= tail_tol:
        raise NumericalError(
            f"insufficient cutoff {cutoff}: truncation tail {tail:.3e} >= {tail_tol:.1e}"
        )
    cropped = (cropped + cropped.conj().T) / 2
    cropped = cropped / np.real(np.trace(cropped))
    return FockState(cutoff=cutoff, matrix=cropped, tail_mass=tail)


def auto_cutoff(zeta_mag: float, noise: float, tail_tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest power-of-two Fock cutoff keeping the truncation tail below tol."""
    work = 512
    therm = thermal_probabilities(noise, work)
    if zeta_mag == 0:
        diag = therm
    else:
        a = annihilation_operator(work)
        disp = expm(zeta_mag * a.conj().T - zeta_mag * a)
        diag = np.real(np.diag((disp * therm) @ disp.conj().T))
    cum = np.cumsum(diag)
    needed = int(np.searchsorted(cum, 1.0 - tail_tol * 0.1) + 1)
    cutoff = 1
    while cutoff < needed:
        cutoff *= 2
    if cutoff > work:
        raise NumericalError("auto cutoff exceeds the supported working dimension")
    return max(cutoff, 8)


def characteristic_function(state: FockState, x: float, y: float) -> complex:
    """Tr rho exp(i (x Q + y P)) on the truncated space."""
    q, p = quadrature_operators(state.cutoff)
    weyl = expm(1j * (x * q + y * p))
    return complex(np.trace(state.matrix @ weyl))


def number_distribution(state: FockState) -> OutcomeDistribution:
    """Photon-number statistics probs[k] = <k|rho|k>."""
    probs = np.clip(np.real(np.diag(state.matrix)), 0.0, None)
    return OutcomeDistribution(tuple(range(state.cutoff)), probs / probs.sum())


def number_povm(cutoff: int):
    """Projective number measurement on the truncated space."""
    from .qcore import Povm

    elements = []
    for k in range(cutoff):
        m = np.zeros((cutoff, cutoff), dtype=complex)
        m[k, k] = 1.0
        elements.append(m)
    return Povm(elements, labels=tuple(range(cutoff)))


def heterodyne_povm(cutoff: int, radius: float, n_radial: int, n_angle: int, completeness_tol: float = 1e-3):
    """Gridded coherent-state POVM |alpha><alpha|/pi on a polar grid.

    Labels are the complex grid points; weights carry the quadrature measure
    r dr dphi / pi.  The completeness residual on the truncated space is
    certified against ``completeness_tol`` and stored on the result; the disc
    must cover the cutoff (radius of roughly sqrt(cutoff) + 4 or more) or the
    top Fock levels fail the certificate.
    """
    from .qcore import Povm

    radii = (np.arange(n_radial) + 0.5) * (radius / n_radial)
    angles = 2 * np.pi * np.arange(n_angle) / n_angle
    dr = radius / n_radial
    dphi = 2 * np.pi / n_angle
    elements = []
    labels = []
    weights = []
    for r in radii:
        for phi in angles:
            alpha = r * np.exp(1j * phi)
            vec = coherent_vector(alpha, cutoff)
            elements.append(np.outer(vec, vec.conj()))
            labels.append(complex(alpha))
            weights.append(r * dr * dphi / np.pi)
    return Povm(elements, labels=labels, weights=weights, completeness_tol=completeness_tol)


def heterodyne_sample(zeta: complex, noise: float, count: int, seed: int) -> np.ndarray:
    """Heterodyne outcomes: complex Gaussians with mean zeta, E|a - zeta|^2 = noise + 1.

    Sampled analytically from the known outcome law; no Fock-space work.
    """
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    if count < 1:
        raise ValidationError("count must be positive")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt((noise + 1.0) / 2.0)
    return zeta + sigma * (rng.standard_normal(count) + 1j * rng.standard_normal(count))


# ---------------------------------------------------------------------------
# beam-splitter concentration and the estimation protocol
# ---------------------------------------------------------------------------


def half_mirror(zeta_a: complex, zeta_b: complex) -> tuple[complex, complex]:
    """50/50 mirror on mean amplitudes: (a, b) -> ((a+b)/sqrt2, (a-b)/sqrt2)."""
    return (zeta_a + zeta_b) / np.sqrt(2.0), (zeta_a - zeta_b) / np.sqrt(2.0)


@dataclass(frozen=True)
class ConcentrationResult:
    """Output modes of the concentration network plus the amplitude trace."""

    modes: tuple  # ((zeta, noise), ...) with the concentrated mode first
    stage_amplitudes: tuple  # (zeta, sqrt2 zeta, 2 zeta, ..) for power-of-two n


def concentrate(zeta: complex, noise: float, n: int) -> ConcentrationResult:
    """Concentrate n identical displaced thermal modes into one.

    The passive network maps the n-fold product state to a single mode with
    amplitude sqrt(n) zeta and n - 1 zero-mean thermal modes, preserving the
    per-mode noise.  For n a power of two the explicit half-mirror cascade is
    traced: each stage pairs equal-amplitude carriers, doubling the carried
    energy.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    modes = ((np.sqrt(n) * zeta, noise),) + tuple((0.0 + 0.0j, noise) for _ in range(n - 1))
    stages = [complex(zeta)]
    if n > 1 and (n & (n - 1)) == 0:
        amplitudes = [complex(zeta)] * n
        while len(amplitudes) > 1:
            nxt = []
            for i in range(0, len(amplitudes), 2):
                top, bottom = half_mirror(amplitudes[i], amplitudes[i + 1])
                nxt.append(top)
            amplitudes = nxt
            stages.append(amplitudes[0])
    else:
        stages = [complex(zeta), complex(np.sqrt(n) * zeta)] if n > 1 else [complex(zeta)]
    return ConcentrationResult(modes=modes, stage_amplitudes=tuple(stages))


@dataclass(frozen=True)
class GaussianProtocolReport:
    """Monte Carlo error report for the concentration protocol and its baseline."""

    zeta: complex
    noise: float
    n_copies: int
    trials: int
    seed: int
    mse_theta: float  # protocol: sum over both quadrature-mean axes
    se_mse_theta: float
    mse_noise: float
    se_mse_noise: float
    baseline_mse_theta: float
    se_baseline_mse_theta: float
    baseline_mse_noise: float
    se_baseline_mse_noise: float
    bound_theta: float  # 2 (N + 1), the quadrature-mean bound per copy
    bound_noise_collective: float  # N (N + 1)
    bound_noise_separable: float  # (N + 1)^2
    relative_se_flag: bool
    per_trial: dict = field(repr=False, default_factory=dict)


def _mse_and_se(sq_errors: np.ndarray) -> tuple[float, float]:
    mse = float(sq_errors.mean())
    se = float(sq_errors.std(ddof=1) / np.sqrt(sq_errors.size))
    return mse, se


def gaussian_protocol_mse(
    zeta: complex,
    noise: float,
    n: int,
    trials: int,
    seed: int,
    keep_trials: bool = False,
) -> GaussianProtocolReport:
    """Simulate the concentration protocol and the per-copy baseline.

    Protocol trial: concentrate the n copies, heterodyne the amplified mode
    (zeta_hat = outcome / sqrt(n)), count photons on the n - 1 thermal modes
    (noise_hat = mean count, exact geometric law).  Baseline trial: heterodyne
    every copy, estimate the mean by the sample average and the noise by the
    mean squared spread minus the vacuum unit.  Mean-square errors for the
    mean parameter are reported in quadrature units theta = (sqrt2 Re zeta,
    sqrt2 Im zeta), i.e. 2 |zeta_hat - zeta|^2 per trial.
    """
    if n < 2:
        raise ValidationError("protocol needs n >= 2")
    if trials < 1000:
        raise ValidationError("at least 1000 trials required")
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    root = np.random.default_rng(seed)
    s_het, s_num, s_base = (np.random.default_rng(s) for s in root.integers(0, 2**63 - 1, 3))

    # protocol: heterodyne on rho_{sqrt n zeta, N}
    amp = np.sqrt(n) * zeta
    sigma = np.sqrt((noise + 1.0) / 2.0)
    alpha = amp + sigma * (s_het.standard_normal(trials) + 1j * s_het.standard_normal(trials))
    zeta_hat = alpha / np.sqrt(n)
    sq_theta = 2.0 * np.abs(zeta_hat - zeta) ** 2
    # photon counts on n-1 thermal modes: geometric with mean N
    if noise > 0:
        counts = s_num.geometric(p=1.0 / (noise + 1.0), size=(trials, n - 1)) - 1
    else:
        counts = np.zeros((trials, n - 1), dtype=np.int64)
    noise_hat = counts.mean(axis=1)
    sq_noise = (noise_hat - noise) ** 2

    # baseline: heterodyne every copy
    base = zeta + sigma * (
        s_base.standard_normal((trials, n)) + 1j * s_base.standard_normal((trials, n))
    )
    zeta_hat_base = base.mean(axis=1)
    sq_theta_base = 2.0 * np.abs(zeta_hat_base - zeta) ** 2
    spread = np.abs(base - zeta_hat_base[:, None]) ** 2
    # divisor n: makes n * MSE equal (N+1)^2 at every n (bias^2 + variance)
    noise_hat_base = spread.sum(axis=1) / n - 1.0
    sq_noise_base = (noise_hat_base - noise) ** 2

    mse_theta, se_theta = _mse_and_se(sq_theta)
    mse_noise, se_noise = _mse_and_se(sq_noise)
    mse_theta_b, se_theta_b = _mse_and_se(sq_theta_base)
    mse_noise_b, se_noise_b = _mse_and_se(sq_noise_base)
    rel_flag = any(
        se > 0.05 * mse
        for mse, se in [
            (mse_theta, se_theta),
            (mse_noise, se_noise),
            (mse_noise_b, se_noise_b),
        ]
        if mse > 0
    )
    per_trial = {}
    if keep_trials:
        per_trial = {
            "zeta_hat": zeta_hat,
            "noise_hat": noise_hat,
            "zeta_hat_baseline": zeta_hat_base,
            "noise_hat_baseline": noise_hat_base,
        }
    return GaussianProtocolReport(
        zeta=complex(zeta),
        noise=float(noise),
        n_copies=n,
        trials=trials,
        seed=seed,
        mse_theta=mse_theta,
        se_mse_theta=se_theta,
        mse_noise=mse_noise,
        se_mse_noise=se_noise,
        baseline_mse_theta=mse_theta_b,
        se_baseline_mse_theta=se_theta_b,
        baseline_mse_noise=mse_noise_b,
        se_baseline_mse_noise=se_noise_b,
        bound_theta=2.0 * (noise + 1.0),
        bound_noise_collective=noise * (noise + 1.0),
        bound_noise_separable=(noise + 1.0) ** 2,
        relative_se_flag=rel_flag,
        per_trial=per_trial,
    )
