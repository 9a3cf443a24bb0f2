import numpy as np
import pytest

from qest.clt import (
    CollectiveSpec,
    build_collective_ops,
    clt_gap,
    collective_moment,
    collective_moment_bruteforce,
    t_operator_on_sums,
)
from qest.errors import NumericalError, ValidationError
from qest.gaussian import t_density
from qest.qcore import DensityOperator, tensor_power

from conftest import SIGMA_X, SIGMA_Y, SIGMA_Z, random_density, random_hermitian


def mixed_qubit():
    return DensityOperator(np.eye(2) / 2)


def spec_sigma_z():
    return CollectiveSpec(mixed_qubit(), [SIGMA_Z])


class TestCollectiveSpec:
    def test_centering(self, rng):
        rho = random_density(rng)
        spec = CollectiveSpec(rho, [random_hermitian(rng), random_hermitian(rng)])
        for x in spec.x_ops:
            assert abs(np.trace(rho.matrix @ x)) < 1e-12

    def test_pair_matrices(self):
        spec = CollectiveSpec(DensityOperator(np.diag([0.75, 0.25])), [SIGMA_X, SIGMA_Y])
        assert np.allclose(spec.v, np.eye(2), atol=1e-12)
        assert abs(spec.s[0, 1] - 0.5) < 1e-12


class TestCollectiveMoment:
    def test_second_moment_n_independent(self):
        spec = CollectiveSpec(DensityOperator(np.diag([0.75, 0.25])), [SIGMA_X, SIGMA_Y])
        base = spec.v + 1j * spec.s
        for n in range(1, 65):
            for word, want in [((1, 2), base[0, 1]), ((1, 1), base[0, 0])]:
                val = collective_moment(spec, n, word)
                assert abs(val - want) < 1e-12

    def test_pauli_cross_moment(self):
        # Tr rho sx sy = i Tr rho sz = i/2 at diag(3/4, 1/4)
        spec = CollectiveSpec(DensityOperator(np.diag([0.75, 0.25])), [SIGMA_X, SIGMA_Y])
        assert abs(collective_moment(spec, 7, (1, 2)) - 0.5j) < 1e-14

    def test_fourth_moment_formula(self):
        # i.i.d. +-1 sum: 3 - 2/n
        spec = spec_sigma_z()
        for n in (1, 2, 5, 10, 64):
            val = collective_moment(spec, n, (1, 1, 1, 1))
            assert abs(val - (3.0 - 2.0 / n)) < 1e-12

    def test_odd_word_vanishes(self):
        spec = spec_sigma_z()
        assert collective_moment(spec, 6, (1, 1, 1)) == 0

    def test_against_bruteforce(self, rng):
        for _ in range(3):
            rho = random_density(rng)
            spec = CollectiveSpec(rho, [random_hermitian(rng), random_hermitian(rng)])
            for n in (1, 2, 3, 4):
                for word in [(1, 2), (1, 1, 2), (2, 1, 2, 1), (1, 1, 1, 1)]:
                    fast = collective_moment(spec, n, word)
                    slow = collective_moment_bruteforce(spec, n, word)
                    assert abs(fast - slow) < 1e-10, (n, word)

    def test_degree_cap(self):
        with pytest.raises(ValidationError):
            collective_moment(spec_sigma_z(), 4, (1,) * 9)


class TestCltGap:
    def test_degree_two_zero_gap(self):
        spec = CollectiveSpec(DensityOperator(np.diag([0.75, 0.25])), [SIGMA_X, SIGMA_Y])
        for _, gap in clt_gap(spec, [1, 2, 4, 8, 16], (1, 2)):
            assert gap < 1e-12

    def test_fourth_moment_gap(self):
        rows = clt_gap(spec_sigma_z(), [10], (1, 1, 1, 1))
        assert abs(rows[0][1] - 0.2) < 1e-12

    def test_odd_gap_zero(self):
        rows = clt_gap(spec_sigma_z(), [5], (1, 1, 1))
        assert rows[0][1] == 0

    def test_inverse_n_scaling(self):
        rows = dict(clt_gap(spec_sigma_z(), [8, 16, 32], (1, 1, 1, 1)))
        assert 0.3 <= rows[16] / rows[8] <= 0.7
        assert 0.3 <= rows[32] / rows[16] <= 0.7

    def test_linear_fit_r_squared(self):
        ns = np.array([4, 8, 16, 32])
        gaps = np.array([gap for _, gap in clt_gap(spec_sigma_z(), ns, (1, 1, 1, 1))])
        x = 1.0 / ns
        slope, intercept = np.polyfit(x, gaps, 1)
        pred = slope * x + intercept
        ss_res = np.sum((gaps - pred) ** 2)
        ss_tot = np.sum((gaps - gaps.mean()) ** 2)
        assert 1.0 - ss_res / ss_tot > 0.999


class TestTOperatorOnSums:
    def test_scalar_gaussian_kernel(self):
        # d = 1: T = exp(-(X - t)^2 / 2v') / sqrt(2 pi v'), by spectral calculus
        spec = spec_sigma_z()
        v_prime = np.array([[0.8]])
        n = 3
        t_mat = t_operator_on_sums(spec, n, [0.4], v_prime)
        xs = build_collective_ops(spec.x_ops, n)[0]
        w, u = np.linalg.eigh(xs)
        direct = (u * (np.exp(-((w - 0.4) ** 2) / (2 * 0.8)) / np.sqrt(2 * np.pi * 0.8))) @ u.conj().T
        assert np.max(np.abs(t_mat - direct)) < 1e-12

    def test_scalar_integral_identity(self):
        # the theta' integral of the scalar kernel is exactly I
        spec = spec_sigma_z()
        n = 2
        grid = np.arange(-8, 8.0001, 0.02)
        total = sum(t_operator_on_sums(spec, n, [g], [[0.5]]) for g in grid) * 0.02
        assert np.max(np.abs(total - np.eye(4))) < 1e-8

    def test_hermitian_psd(self, rng):
        rho = random_density(rng)
        spec = CollectiveSpec(rho, [random_hermitian(rng), random_hermitian(rng)])
        t_mat = t_operator_on_sums(spec, 3, [0.1, -0.2], spec.v + np.abs(spec.s[0, 1]) * np.eye(2) + 0.1 * np.eye(2))
        assert np.max(np.abs(t_mat - t_mat.conj().T)) < 1e-9
        assert np.linalg.eigvalsh(t_mat).min() > -1e-9

    def test_theorem_two_trend(self):
        # Tr rho^n T_{0,I}(X^(n)) approaches the Gaussian outcome density
        # 1/(4 pi) monotonically on the tested ladder
        spec = CollectiveSpec(mixed_qubit(), [SIGMA_X, SIGMA_Y])
        target = t_density([0.0, 0.0], np.eye(2), spec.limit_spec())
        assert abs(target - 1.0 / (4 * np.pi)) < 1e-14
        gaps = []
        for n in (2, 4, 6, 8):
            t_mat = t_operator_on_sums(spec, n, [0.0, 0.0], np.eye(2))
            rho_n = tensor_power(mixed_qubit(), n).matrix
            val = float(np.real(np.trace(rho_n @ t_mat)))
            gaps.append(abs(val - target))
        assert all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))

    def test_grid_completeness_state_weighted(self):
        # the operator-norm completeness defect of the bare smearing family
        # does not vanish for noncommuting tuples (hence the square-root
        # sandwich downstream); the state-weighted defect on a 5 sigma box
        # must shrink toward the exact limit
        spec = CollectiveSpec(mixed_qubit(), [SIGMA_X, SIGMA_Y])
        devs = []
        for n in (1, 2, 4, 6):
            step = 0.5
            grid = np.arange(-5.5, 5.5001, step)
            total = np.zeros((2**n, 2**n), dtype=complex)
            for gx in grid:
                for gy in grid:
                    total += t_operator_on_sums(spec, n, [gx, gy], np.eye(2)) * step**2
            rho_n = tensor_power(mixed_qubit(), n).matrix
            devs.append(abs(float(np.real(np.trace(rho_n @ total))) - 1.0))
        assert all(devs[i + 1] < devs[i] for i in range(len(devs) - 1))
        assert devs[-1] < 0.03

    def test_eigenvalue_condition(self):
        spec = CollectiveSpec(DensityOperator(np.diag([0.75, 0.25])), [SIGMA_X, SIGMA_Y])
        with pytest.raises(NumericalError):
            t_operator_on_sums(spec, 2, [0.0, 0.0], 0.3 * np.eye(2))

    def test_cap(self):
        spec = spec_sigma_z()
        with pytest.raises(NumericalError):
            t_operator_on_sums(spec, 13, [0.0], [[1.0]])
