import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qrclab import qla
from qrclab.errors import InvalidArgument, InvariantError, SizeError
from qrclab.reservoir import random_initial_state

X, Y, Z, I2 = (qla.PAULI[p] for p in "xyzi")


def ket(bits):
    v = np.zeros(2 ** len(bits), complex)
    v[int(bits, 2)] = 1
    return v


def random_mixed(n, rng, rank=None):
    D = 2**n
    rank = rank or D
    a = rng.standard_normal((D, rank)) + 1j * rng.standard_normal((D, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(qla.kron(I2, I2), np.eye(4))

    def test_z_identity(self):
        np.testing.assert_array_equal(qla.kron(Z, I2), np.diag([1, 1, -1, -1]))

    def test_basis_product(self):
        np.testing.assert_array_equal(
            qla.kron(qla.basis_projector("0"), qla.basis_projector("1")), qla.basis_projector("01")
        )

    def test_size_guard(self):
        with pytest.raises(SizeError):
            qla.kron(np.eye(2**8), np.eye(2**7), max_dim=2**14)


class TestPartialTrace:
    def test_product_state(self):
        out = qla.partial_trace(qla.basis_projector("01"), {0})
        np.testing.assert_allclose(out, qla.basis_projector("1"))

    def test_tensor_factor(self):
        rng = np.random.default_rng(3)
        a, b = random_mixed(2, rng), random_mixed(1, rng)
        np.testing.assert_allclose(qla.partial_trace(np.kron(a, b), {2}), a, atol=1e-14)
        np.testing.assert_allclose(qla.partial_trace(np.kron(a, b), {0, 1}), b, atol=1e-14)

    def test_bell(self):
        phi = (ket("00") + ket("11")) / np.sqrt(2)
        np.testing.assert_allclose(qla.partial_trace(np.outer(phi, phi.conj()), {0}), I2 / 2, atol=1e-15)

    def test_middle_qubit_keeps_order(self):
        rng = np.random.default_rng(4)
        a, b, c = (random_mixed(1, rng) for _ in range(3))
        out = qla.partial_trace(np.kron(np.kron(a, b), c), [1])
        np.testing.assert_allclose(out, np.kron(a, c), atol=1e-14)

    @pytest.mark.parametrize("bad", [set(), {0, 1}, {2}, {-1}])
    def test_invalid(self, bad):
        with pytest.raises(InvalidArgument):
            qla.partial_trace(np.eye(4) / 4, bad)

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 5))
    @settings(max_examples=30, deadline=None)
    def test_preserves_trace_and_hermiticity(self, seed, n):
        rng = np.random.default_rng(seed)
        rho = random_mixed(n, rng)
        traced = set(rng.choice(n, size=rng.integers(1, n), replace=False).tolist())
        out = qla.partial_trace(rho, traced)
        assert abs(np.trace(out) - 1) < 1e-12
        assert np.max(np.abs(out - out.conj().T)) < 1e-12
        qla.check_density_matrix(out)


class TestSpectral:
    def test_pauli_z(self):
        w, _ = qla.herm_eig(Z)
        np.testing.assert_allclose(w, [-1, 1])

    def test_identity(self):
        w, _ = qla.herm_eig(np.eye(4))
        np.testing.assert_allclose(w, np.ones(4))

    def test_pauli_x_hadamard_columns(self):
        w, v = qla.herm_eig(X)
        np.testing.assert_allclose(w, [-1, 1])
        had = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        # equal up to a phase per column
        overlaps = np.abs(had.conj().T @ v)
        np.testing.assert_allclose(np.sort(overlaps, axis=0)[-1], [1, 1], atol=1e-12)

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
        h = a + a.conj().T
        w, v = qla.herm_eig(h)
        assert np.max(np.abs(v @ np.diag(w) @ v.conj().T - h)) <= 1e-9 * np.max(np.abs(h))

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvalidArgument):
            qla.herm_eig(np.array([[0, 1], [0, 0]], complex))

    def test_zero_time(self):
        h = qla.kron(X, Z)
        np.testing.assert_allclose(qla.evolution_unitary(h, 0.0), np.eye(4), atol=1e-15)

    def test_closed_form(self):
        np.testing.assert_allclose(qla.evolution_unitary(Z, np.pi), -np.eye(2), atol=1e-12)

    def test_group_property(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        h = a + a.conj().T
        u = qla.evolution_unitary(h, 0.3) @ qla.evolution_unitary(h, 1.1)
        np.testing.assert_allclose(u, qla.evolution_unitary(h, 1.4), atol=1e-9)

    @pytest.mark.parametrize("n", [1, 4, 7, 10])
    def test_unitarity(self, n):
        rng = np.random.default_rng(n)
        D = 2**n
        a = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
        qla.check_unitary(qla.evolution_unitary((a + a.conj().T) / 2, 2.7))


class TestHaar:
    def test_dim_one_is_phase(self):
        rng = qla.RngStream(5)
        phases = np.array([qla.haar_unitary(1, rng)[0, 0] for _ in range(2000)])
        np.testing.assert_allclose(np.abs(phases), 1, atol=1e-12)
        # uniform phase: circular mean near zero, KS against uniform angle
        assert abs(phases.mean()) < 0.1
        assert stats.kstest(np.angle(phases), "uniform", args=(-np.pi, 2 * np.pi)).statistic < 0.05

    def test_rejects_bad_dim(self):
        with pytest.raises(InvalidArgument):
            qla.haar_unitary(0, 1)

    def test_unitary(self):
        qla.check_unitary(qla.haar_unitary(64, qla.RngStream(1)))

    def test_first_moment(self):
        us = qla.haar_unitaries(4, 10_000, qla.RngStream(11))
        mean = np.mean(np.einsum("si,sj->sij", us[:, :, 0], us[:, :, 0].conj()), axis=0)
        assert np.max(np.abs(mean - np.eye(4) / 4)) < 0.05

    def test_second_moment_against_superoperator(self):
        """Monte Carlo variance vs the two-design twirl evaluated with explicit P and F."""
        D = 4
        O = qla.kron(Z, I2)
        rho = qla.basis_projector("00")
        # second-moment twirl of X = rho (x) rho
        F = np.zeros((D * D, D * D))
        for i in range(D):
            for j in range(D):
                F[i * D + j, j * D + i] = 1
        Xop = np.kron(rho, rho)
        tx, tfx = np.trace(Xop), np.trace(F @ Xop)
        twirl = ((tx - tfx / D) * np.eye(D * D) + (tfx - tx / D) * F) / (D**2 - 1)
        second = np.trace(np.kron(O, O) @ twirl).real
        first = np.trace(O).real / D
        oracle = second - first**2

        us = qla.haar_unitaries(D, 10_000, qla.RngStream(12))
        vals = np.real(np.einsum("si,ij,sj->s", us[:, :, 0].conj(), O, us[:, :, 0]))
        assert oracle == pytest.approx(1 / (D + 1))
        assert vals.var() == pytest.approx(oracle, rel=0.08)

    @pytest.mark.slow
    @pytest.mark.parametrize("dim", [2, 4, 8])
    def test_overlap_is_beta(self, dim):
        us = qla.haar_unitaries(dim, 100_000, qla.RngStream(dim))
        p = np.abs(us[:, 0, 0]) ** 2
        assert stats.kstest(p, stats.beta(1, dim - 1).cdf).statistic < 0.02


class TestTraceDistance:
    def test_identical(self):
        rho = random_initial_state(2, 0)
        assert qla.trace_distance(rho, rho) == pytest.approx(0, abs=1e-14)

    def test_orthogonal(self):
        assert qla.trace_distance(qla.basis_projector("0"), qla.basis_projector("1")) == pytest.approx(1)

    def test_half(self):
        assert qla.trace_distance(qla.basis_projector("0"), I2 / 2) == pytest.approx(0.5)

    def test_mismatch(self):
        with pytest.raises(InvalidArgument):
            qla.trace_distance(np.eye(2) / 2, np.eye(4) / 4)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_metric_properties(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_mixed(3, rng, rank=int(rng.integers(1, 9))) for _ in range(3))
        dab = qla.trace_distance(a, b)
        assert 0 <= dab <= 1 + 1e-12
        assert dab == pytest.approx(qla.trace_distance(b, a), abs=1e-12)
        assert dab <= qla.trace_distance(a, c) + qla.trace_distance(c, b) + 1e-12
        u = qla.haar_unitary(8, rng)
        conj = qla.trace_distance(u @ a @ u.conj().T, u @ b @ u.conj().T)
        assert conj == pytest.approx(dab, abs=1e-10)


class TestRngStream:
    def test_reproducible(self):
        a = qla.RngStream(42, 3).normal(size=5)
        b = qla.RngStream(42, 3).normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.allclose(qla.RngStream(42, 3).normal(size=5), qla.RngStream(42, 4).normal(size=5))

    def test_spawn_independent_of_consumption(self):
        s = qla.RngStream(9)
        c1 = s.spawn(1, 2).uniform(size=3)
        s.uniform(size=100)
        np.testing.assert_array_equal(c1, s.spawn(1, 2).uniform(size=3))


class TestChecks:
    def test_density_matrix_rejects_bad_trace(self):
        with pytest.raises(InvariantError, match="unit trace"):
            qla.check_density_matrix(np.eye(2))

    def test_density_matrix_rejects_negative(self):
        with pytest.raises(InvariantError, match="positive semidefinite"):
            qla.check_density_matrix(np.diag([1.5, -0.5]))

    def test_embed_matches_kron(self):
        op = qla.kron(X, Y)
        np.testing.assert_allclose(qla.embed(op, [0, 1], 3), qla.kron(op, I2))
        np.testing.assert_allclose(qla.embed(X, 2, 3), qla.kron_all([I2, I2, X]))
        # reversed site order swaps the factors
        np.testing.assert_allclose(qla.embed(op, [1, 0], 2), qla.kron(Y, X))
