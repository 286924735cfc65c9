"""Observables, expectation estimation and the linear readout layer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qla
from .errors import InvalidArgument, InvariantError, NumericalError

__all__ = [
    "ObservableSet",
    "ShotConfig",
    "ReadoutModel",
    "single_qubit_paulis",
    "exact_expectations",
    "sampled_expectation",
    "sampled_expectations",
    "train_readout",
    "predict",
    "train_test_split",
    "nmse",
]

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class ObservableSet:
    labels: tuple
    matrices: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        mats = tuple(np.asarray(m, dtype=complex) for m in self.matrices)
        if len(labels) != len(mats):
            raise InvalidArgument("labels and matrices differ in length")
        if len(set(labels)) != len(labels):
            raise InvalidArgument("observable labels must be unique")
        if mats:
            shape = mats[0].shape
            for lab, m in zip(labels, mats):
                if m.shape != shape:
                    raise InvalidArgument(f"observable {lab} has shape {m.shape}, expected {shape}")
                if not qla.is_hermitian(m):
                    raise InvalidArgument(f"observable {lab} is not Hermitian")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrices", mats)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.matrices[self.labels.index(label)]

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0] if self.matrices else 0

    def stacked(self) -> np.ndarray:
        return np.stack(self.matrices) if self.matrices else np.zeros((0, 0, 0), complex)

    def select(self, labels: Sequence[str]) -> "ObservableSet":
        return ObservableSet(tuple(labels), tuple(self[l] for l in labels))

    def __add__(self, other: "ObservableSet") -> "ObservableSet":
        return ObservableSet(self.labels + other.labels, self.matrices + other.matrices)


def single_qubit_paulis(n: int, qubits: Sequence[int] | None = None) -> ObservableSet:
    """``sigma^{x,y,z}_i`` embedded in n qubits, labelled ``"x0"``, ``"y0"``, ``"z0"``, ...."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    qubits = range(n) if qubits is None else qubits
    labels, mats = [], []
    for i in qubits:
        for p in "xyz":
            labels.append(f"{p}{i}")
            mats.append(qla.embed(qla.PAULI[p], i, n))
    return ObservableSet(tuple(labels), tuple(mats))


def _expectations(rho: np.ndarray, stacked_t: np.ndarray) -> np.ndarray:
    # Tr(rho O) = sum_ij rho_ij O_ji
    return np.einsum("mij,ij->m", stacked_t, rho)


def exact_expectations(rho, obs: ObservableSet) -> np.ndarray:
    """``Tr{rho O_i}`` for every observable in ``obs``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (obs.dim, obs.dim):
        raise InvalidArgument(f"state shape {rho.shape} vs observable dimension {obs.dim}")
    vals = _expectations(rho, np.swapaxes(obs.stacked(), 1, 2))
    if vals.size and np.max(np.abs(vals.imag)) > 1e-12:
        raise InvariantError("real expectation", f"imaginary residue {np.max(np.abs(vals.imag)):.3e}")
    return vals.real


@dataclass(frozen=True)
class ShotConfig:
    """Number of projective samples per estimate; ``None`` means exact."""

    n_shots: int | None = None

    def __post_init__(self):
        if self.n_shots is not None and int(self.n_shots) < 1:
            raise InvalidArgument("n_shots must be >= 1")

    @property
    def exact(self) -> bool:
        return self.n_shots is None

    @classmethod
    def parse(cls, value) -> "ShotConfig":
        if value is None or (isinstance(value, str) and value.strip().lower() == "exact"):
            return cls(None)
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise InvalidArgument(f"shots must be a positive integer or 'exact', got {value!r}") from None

    def __str__(self) -> str:
        return "exact" if self.exact else str(self.n_shots)


def _outcome_distribution(rho, o):
    w, v = qla.herm_eig(o)
    probs = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho, v))
    if np.min(probs) < -1e-9:
        raise InvariantError("nonnegative outcome probabilities", f"min {np.min(probs):.3e}")
    probs = np.clip(probs, 0.0, None)
    return w, probs / probs.sum()


def sampled_expectation(rho, o, shots: ShotConfig, rng) -> float:
    """Finite-shot estimate of ``Tr{rho o}`` from projective measurement of ``o``.

    The outcome distribution is built from the eigenbasis of ``o``; the
    result is the sample mean of ``shots.n_shots`` eigenvalue draws.
    """
    rho = np.asarray(rho, dtype=complex)
    o = np.asarray(o, dtype=complex)
    if rho.shape != o.shape:
        raise InvalidArgument(f"state shape {rho.shape} vs observable shape {o.shape}")
    if shots.exact:
        return float(np.real(np.sum(rho * o.T)))
    w, probs = _outcome_distribution(rho, o)
    counts = qla.as_rng(rng).multinomial(shots.n_shots, probs)
    return float(counts @ w / shots.n_shots)


def sampled_expectations(rho, obs: ObservableSet, shots: ShotConfig, rng) -> np.ndarray:
    """Independent finite-shot estimate per observable (no back-action between them)."""
    if shots.exact:
        return exact_expectations(rho, obs)
    return np.array([sampled_expectation(rho, m, shots, rng) for m in obs.matrices])


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    weights: np.ndarray
    bias: float
    ridge_lambda: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise NumericalError("readout weights are not finite")


def train_readout(features, targets, ridge_lambda: float = DEFAULT_RIDGE) -> ReadoutModel:
    """Ridge regression with an unpenalised bias term.

    Solves the normal equations on centred data, which is the same as adding
    a bias column that is excluded from the penalty.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise InvalidArgument(f"features {x.shape} and targets {y.shape} are incompatible")
    if x.shape[0] < 1:
        raise InvalidArgument("need at least one sample")
    if ridge_lambda < 0:
        raise InvalidArgument("ridge_lambda must be non-negative")
    xm, ym = x.mean(axis=0), y.mean()
    xc, yc = x - xm, y - ym
    a = xc.T @ xc + ridge_lambda * np.eye(x.shape[1])
    if ridge_lambda == 0 and np.linalg.cond(a) > 1 / np.finfo(float).eps:
        raise NumericalError("normal matrix is singular; use ridge_lambda > 0")
    try:
        w = np.linalg.solve(a, xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations failed: {exc}; use ridge_lambda > 0") from exc
    return ReadoutModel(w, float(ym - xm @ w), float(ridge_lambda))


def predict(model: ReadoutModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.weights.shape[0]:
        raise InvalidArgument(f"feature width {x.shape[1]} != model width {model.weights.shape[0]}")
    return x @ model.weights + model.bias


def train_test_split(features, targets, train_fraction: float = 0.5):
    """Chronological split (no shuffling; time series)."""
    x = np.asarray(features)
    y = np.asarray(targets)
    if not 0 < train_fraction < 1:
        raise InvalidArgument("train_fraction must be in (0, 1)")
    cut = int(round(train_fraction * len(y)))
    return x[:cut], y[:cut], x[cut:], y[cut:]


def nmse(pred, target) -> float:
    target = np.asarray(target, dtype=float)
    return float(np.mean((np.asarray(pred) - target) ** 2) / np.var(target))
