import numpy as np
import pytest

from qrclab import qla
from qrclab.errors import InvalidArgument, NumericalError
from qrclab.measurement import (
    ObservableSet,
    ShotConfig,
    exact_expectations,
    nmse,
    predict,
    sampled_expectation,
    single_qubit_paulis,
    train_readout,
    train_test_split,
)
from qrclab.reservoir import (
    InputSeries,
    IsingParams,
    ReservoirConfig,
    build_ising,
    encode_input,
    random_initial_state,
    run_trajectory,
)

X, Y, Z, I2 = (qla.PAULI[p] for p in "xyzi")


class TestObservables:
    def test_labels(self):
        obs = single_qubit_paulis(2)
        assert obs.labels == ("x0", "y0", "z0", "x1", "y1", "z1")
        np.testing.assert_array_equal(obs["z1"], qla.kron(I2, Z))

    def test_select_and_add(self):
        obs = single_qubit_paulis(3, [0]) + single_qubit_paulis(3, [2])
        assert len(obs) == 6
        assert obs.select(["z2", "x0"]).labels == ("z2", "x0")

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvalidArgument):
            ObservableSet(("a",), (np.array([[0, 1], [0, 0]], complex),))

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidArgument):
            ObservableSet(("z", "z"), (Z, Z))


class TestExact:
    def test_ket_zero(self):
        vals = exact_expectations(qla.basis_projector("0"), single_qubit_paulis(1))
        np.testing.assert_allclose(vals, [0, 0, 1], atol=1e-15)

    def test_plus_state(self):
        vals = exact_expectations(encode_input(0.5), single_qubit_paulis(1))
        np.testing.assert_allclose(vals, [1, 0, 0], atol=1e-15)

    def test_bell_local_paulis_vanish(self):
        phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
        vals = exact_expectations(np.outer(phi, phi), single_qubit_paulis(2))
        np.testing.assert_allclose(vals, 0, atol=1e-15)

    def test_matches_trace(self):
        rho = random_initial_state(3, 0)
        obs = single_qubit_paulis(3)
        for label, m in zip(obs.labels, obs.matrices):
            assert exact_expectations(rho, obs.select([label]))[0] == pytest.approx(np.trace(rho @ m).real)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgument):
            exact_expectations(np.eye(4) / 4, single_qubit_paulis(1))


class TestShots:
    def test_parse(self):
        assert ShotConfig.parse("exact").exact
        assert ShotConfig.parse("1000").n_shots == 1000
        with pytest.raises(InvalidArgument):
            ShotConfig.parse("many")
        with pytest.raises(InvalidArgument):
            ShotConfig(0)

    def test_eigenstate_is_deterministic(self):
        rng = qla.RngStream(0)
        assert sampled_expectation(qla.basis_projector("0"), Z, ShotConfig(10), rng) == 1.0

    def test_unbiased_within_four_standard_errors(self):
        rho = encode_input(0.3)  # <z> = -0.4
        rng = qla.RngStream(1)
        est = np.array([sampled_expectation(rho, Z, ShotConfig(100), rng) for _ in range(4000)])
        se = est.std(ddof=1) / np.sqrt(len(est))
        assert abs(est.mean() + 0.4) <= 4 * se

    def test_error_scales_as_inverse_sqrt(self):
        rho = random_initial_state(2, qla.RngStream(2))
        o = qla.kron(X, Z)
        exact = np.trace(rho @ o).real
        rng = qla.RngStream(3)
        ns = np.array([100, 400, 1600, 6400, 25600])
        rms = []
        for n in ns:
            est = np.array([sampled_expectation(rho, o, ShotConfig(int(n)), rng) for _ in range(2000)])
            rms.append(np.sqrt(np.mean((est - exact) ** 2)))
        slope = np.polyfit(np.log(ns), np.log(rms), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)

    def test_exact_passthrough(self):
        rho = random_initial_state(2, 4)
        o = qla.kron(Y, Y)
        assert sampled_expectation(rho, o, ShotConfig(), None) == pytest.approx(np.trace(rho @ o).real)


class TestReadout:
    def test_exact_linear_recovery(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 5))
        w = rng.normal(size=5)
        y = x @ w + 0.7
        model = train_readout(x, y, ridge_lambda=0.0)
        np.testing.assert_allclose(model.weights, w, atol=1e-10)
        assert model.bias == pytest.approx(0.7, abs=1e-10)
        np.testing.assert_allclose(predict(model, x), y, atol=1e-10)

    def test_large_ridge_shrinks_to_mean(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(100, 3))
        y = rng.normal(size=100) + 5
        model = train_readout(x, y, ridge_lambda=1e12)
        assert np.max(np.abs(model.weights)) < 1e-8
        assert model.bias == pytest.approx(y.mean(), abs=1e-6)

    def test_collinear_needs_ridge(self):
        x = np.ones((10, 2))
        x[:, 1] = np.arange(10)
        x[:, 0] = 2 * x[:, 1]
        with pytest.raises(NumericalError):
            train_readout(x, np.arange(10.0), ridge_lambda=0.0)
        train_readout(x, np.arange(10.0))

    def test_feature_permutation(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        perm = [2, 0, 3, 1]
        a = train_readout(x, y)
        b = train_readout(x[:, perm], y)
        np.testing.assert_allclose(b.weights, a.weights[perm], atol=1e-10)

    def test_shape_checks(self):
        with pytest.raises(InvalidArgument):
            train_readout(np.zeros((5, 2)), np.zeros(4))
        model = train_readout(np.random.default_rng(3).normal(size=(5, 2)), np.arange(5.0))
        with pytest.raises(InvalidArgument):
            predict(model, np.zeros((3, 3)))

    def test_split_is_chronological(self):
        x = np.arange(10)[:, None]
        xtr, ytr, xte, yte = train_test_split(x, np.arange(10), 0.7)
        np.testing.assert_array_equal(ytr, np.arange(7))
        np.testing.assert_array_equal(yte, np.arange(7, 10))

    def test_nmse(self):
        y = np.array([0.0, 1.0, 2.0])
        assert nmse(y, y) == 0
        assert nmse(np.full(3, y.mean()), y) == pytest.approx(1.0)


def test_short_term_memory_on_ising_reservoir():
    """A 5-qubit thermal reservoir reconstructs recent inputs from its Pauli readout."""
    n = 5
    _, U = build_ising(IsingParams(n, seed=1))
    cfg = ReservoirConfig(n, U)
    rng = qla.RngStream(2)
    s = rng.uniform(size=1200)
    tr = run_trajectory(cfg, InputSeries.from_scalars(s), np.eye(2**n) / 2**n, single_qubit_paulis(n), washout=200)
    u = s[200:]
    capacity = 0.0
    for delay in range(1, 6):
        x, y = tr.values[delay:], u[:-delay]
        xtr, ytr, xte, yte = train_test_split(x, y, 0.5)
        pred = predict(train_readout(xtr, ytr), xte)
        capacity += np.corrcoef(pred, yte)[0, 1] ** 2
    assert capacity > 0.5
