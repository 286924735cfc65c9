"""Erase-and-write spin reservoirs.

Each step traces out the input qubits, writes the input state into them and
then applies the fixed reservoir unitary::

    rho_{k+1} = U (rho_in (x) Tr_in[rho_k]) U^dag

Time is measured in units of ``1/J_s`` and energies in units of ``J_s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qla
from .errors import InvalidArgument
from .measurement import ObservableSet, ShotConfig, sampled_expectations

__all__ = [
    "PHASE_PRESETS",
    "IsingParams",
    "ReservoirConfig",
    "InputSeries",
    "Trajectory",
    "ising_hamiltonian",
    "sample_ising_couplings",
    "build_ising",
    "encode_input",
    "encode_amplitudes",
    "reservoir_step",
    "run_trajectory",
    "random_initial_state",
]

# (W, h) in units of J_s
PHASE_PRESETS = {
    "thermal-main": (1e-2, 1e1),
    "thermal-sm": (1e-1, 1e1),
    "localized": (1e2, 1e1),
}

DEFAULT_DT = 10.0


@dataclass(frozen=True)
class IsingParams:
    n_qubits: int
    J_s: float = 1.0
    h: float = 10.0
    W: float = 1e-2
    dt: float = DEFAULT_DT
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 2:
            raise InvalidArgument("Ising reservoir needs n_qubits >= 2")
        if self.J_s <= 0 or self.W < 0 or self.dt <= 0:
            raise InvalidArgument(f"need J_s > 0, W >= 0, dt > 0; got {self}")

    @classmethod
    def from_preset(cls, n_qubits: int, preset: str, **kw) -> "IsingParams":
        try:
            W, h = PHASE_PRESETS[preset]
        except KeyError:
            raise InvalidArgument(f"unknown phase preset {preset!r}") from None
        return cls(n_qubits, W=W, h=h, **kw)


def _bit(idx: np.ndarray, q: int, n: int) -> np.ndarray:
    return (idx >> (n - 1 - q)) & 1


def ising_hamiltonian(couplings, fields) -> np.ndarray:
    """``sum_{i>j} J_ij X_i X_j + 1/2 sum_i f_i Z_i`` for explicit ``J`` and ``f``.

    ``couplings`` is an ``n x n`` array of which only the strict lower
    triangle is read; ``fields[i]`` is the full on-site field ``h + h_i``.
    """
    f = np.asarray(fields, dtype=float)
    n = f.size
    J = np.asarray(couplings, dtype=float)
    if J.shape != (n, n):
        raise InvalidArgument(f"couplings shape {J.shape} does not match {n} fields")
    D = 2**n
    idx = np.arange(D)
    z = 1 - 2 * np.stack([_bit(idx, q, n) for q in range(n)])
    H = np.diag(0.5 * (f @ z)).astype(complex)
    for i in range(n):
        for j in range(i):
            if J[i, j] != 0.0:
                mask = (1 << (n - 1 - i)) | (1 << (n - 1 - j))
                H[idx ^ mask, idx] += J[i, j]
    return H


def sample_ising_couplings(params: IsingParams, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``J_ij ~ U[-J_s/2, J_s/2]`` (i > j, row-major) then ``h_i ~ U[-W, W]``."""
    g = qla.as_rng(rng)
    n = params.n_qubits
    J = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            J[i, j] = g.uniform(-params.J_s / 2, params.J_s / 2)
    disorder = g.uniform(-params.W, params.W, size=n)
    return J, disorder


def build_ising(params: IsingParams, rng=None, couplings=None, disorder=None):
    """Sample a transverse-field Ising reservoir.

    Returns ``(H, U)`` with ``U = exp(-i H dt)``. Passing ``couplings`` and/or
    ``disorder`` overrides the random draws (used to pin limits in tests).
    """
    if rng is None:
        rng = qla.RngStream(params.seed)
    J, h_i = sample_ising_couplings(params, rng)
    if couplings is not None:
        J = np.asarray(couplings, dtype=float)
    if disorder is not None:
        h_i = np.asarray(disorder, dtype=float)
    H = ising_hamiltonian(J, params.h + h_i)
    return H, qla.evolution_unitary(H, params.dt)


def encode_amplitudes(s: float) -> np.ndarray:
    if not 0.0 <= s <= 1.0:
        raise InvalidArgument(f"input value must be in [0, 1], got {s}")
    return np.array([np.sqrt(s), np.sqrt(1.0 - s)], dtype=complex)


def encode_input(s: float) -> np.ndarray:
    """``|psi><psi|`` with ``|psi> = sqrt(s)|0> + sqrt(1-s)|1>``."""
    v = encode_amplitudes(s)
    return np.outer(v, v.conj())


@dataclass(frozen=True, eq=False)
class ReservoirConfig:
    """A reservoir instance: unitary, input qubits and input encoding."""

    n_qubits: int
    unitary: np.ndarray
    input_qubits: tuple = (0,)
    encoding: str = "amplitude"
    _perm_unitary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_qubits
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (2**n, 2**n):
            raise InvalidArgument(f"unitary shape {u.shape} does not match {n} qubits")
        q = tuple(int(x) for x in self.input_qubits)
        if not 1 <= len(q) <= n or len(set(q)) != len(q) or any(x < 0 or x >= n for x in q):
            raise InvalidArgument(f"invalid input qubits {q} for {n} qubits")
        if self.encoding != "amplitude":
            raise InvalidArgument(f"unknown encoding {self.encoding!r}")
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "input_qubits", q)
        rest = [x for x in range(n) if x not in q]
        # column j of the permuted unitary is indexed in (inputs..., rest...) order
        order = list(q) + rest
        natural = np.arange(2**n).reshape([2] * n).transpose(order).reshape(-1)
        object.__setattr__(self, "_perm_unitary", u[:, natural])

    @property
    def m(self) -> int:
        return len(self.input_qubits)

    @property
    def rest_qubits(self) -> tuple:
        return tuple(x for x in range(self.n_qubits) if x not in self.input_qubits)

    def reduce(self, rho) -> np.ndarray:
        """Trace out the input qubits."""
        if self.input_qubits == tuple(range(self.m)):
            D, d = 2**self.n_qubits, 2**self.m
            r = np.asarray(rho).reshape(d, D // d, d, D // d)
            return np.einsum("aiaj->ij", r)
        return qla.partial_trace(rho, self.input_qubits)

    def write_pure(self, psi, reduced) -> np.ndarray:
        """``U (|psi><psi| (x) reduced) U^dag`` without forming the full product state."""
        d = 2**self.m
        V = np.tensordot(self._perm_unitary.reshape(-1, d, reduced.shape[0]), psi, axes=([1], [0]))
        return V @ reduced @ V.conj().T

    def write(self, rho_in, reduced) -> np.ndarray:
        u = self._perm_unitary
        return u @ np.kron(rho_in, reduced) @ u.conj().T


def reservoir_step(config: ReservoirConfig, rho_R, rho_I) -> np.ndarray:
    """One erase-and-write update of the reservoir state."""
    rho_R = np.asarray(rho_R, dtype=complex)
    rho_I = np.asarray(rho_I, dtype=complex)
    D, d = 2**config.n_qubits, 2**config.m
    if rho_R.shape != (D, D):
        raise InvalidArgument(f"reservoir state shape {rho_R.shape}, expected {(D, D)}")
    if rho_I.shape != (d, d):
        raise InvalidArgument(f"input state shape {rho_I.shape}, expected {(d, d)}")
    return config.write(rho_I, config.reduce(rho_R))


@dataclass(frozen=True, eq=False)
class InputSeries:
    """Either classical values in [0, 1] or explicit m-qubit input states."""

    scalars: np.ndarray | None = None
    states: tuple | None = None

    def __post_init__(self):
        if (self.scalars is None) == (self.states is None):
            raise InvalidArgument("provide exactly one of scalars or states")
        if self.scalars is not None:
            s = np.asarray(self.scalars, dtype=float).reshape(-1)
            if np.any(s < 0) or np.any(s > 1) or not np.all(np.isfinite(s)):
                raise InvalidArgument("scalar inputs must lie in [0, 1]")
            object.__setattr__(self, "scalars", s)
        else:
            states = tuple(np.asarray(x, dtype=complex) for x in self.states)
            for x in states:
                qla.check_density_matrix(x, "input state")
            object.__setattr__(self, "states", states)

    @classmethod
    def from_scalars(cls, values) -> "InputSeries":
        return cls(scalars=values)

    @classmethod
    def from_states(cls, states) -> "InputSeries":
        return cls(states=tuple(states))

    @classmethod
    def constant_bit(cls, bit: int, length: int) -> "InputSeries":
        """``|bit><bit|`` repeated ``length`` times, expressed as amplitude inputs."""
        return cls(scalars=np.full(length, 1.0 - bit))

    def __len__(self) -> int:
        return len(self.scalars) if self.scalars is not None else len(self.states)

    @property
    def n_input_qubits(self) -> int:
        return 1 if self.scalars is not None else qla.n_qubits_of(self.states[0])

    def pure_vector(self, k: int):
        """Amplitude vector of input k if it is pure, else ``None``."""
        if self.scalars is not None:
            return encode_amplitudes(self.scalars[k])
        st = self.states[k]
        w, v = np.linalg.eigh(st)
        if w[-1] > 1 - 1e-12:
            return v[:, -1]
        return None

    def state(self, k: int) -> np.ndarray:
        if self.scalars is not None:
            return encode_input(self.scalars[k])
        return self.states[k]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Expectation table of a reservoir run.

    ``steps[t]`` is the number of injections performed when row ``t`` of
    ``values`` was recorded.
    """

    steps: np.ndarray
    labels: tuple
    values: np.ndarray
    states: tuple | None = None
    final_state: np.ndarray | None = None

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]


def run_trajectory(
    config: ReservoirConfig,
    inputs: InputSeries,
    rho_0,
    observables: ObservableSet,
    washout: int = 0,
    record_states: bool = False,
    shots: ShotConfig | None = None,
    rng=None,
) -> Trajectory:
    """Drive the reservoir with ``inputs`` and record expectations after each post-washout step."""
    T = len(inputs)
    if T == 0:
        raise InvalidArgument("inputs must be nonempty")
    if not 0 <= washout < T:
        raise InvalidArgument(f"washout {washout} must be in [0, {T})")
    if inputs.n_input_qubits != config.m:
        raise InvalidArgument(f"inputs act on {inputs.n_input_qubits} qubit(s), reservoir expects {config.m}")
    rho = np.asarray(rho_0, dtype=complex)
    D = 2**config.n_qubits
    if rho.shape != (D, D):
        raise InvalidArgument(f"initial state shape {rho.shape}, expected {(D, D)}")
    if len(observables) and observables.dim != D:
        raise InvalidArgument("observable dimension does not match reservoir")
    shots = shots or ShotConfig()
    if not shots.exact and rng is None:
        raise InvalidArgument("finite-shot sampling needs an rng")
    stacked_t = np.swapaxes(observables.stacked(), 1, 2)
    rows, states = [], []
    for k in range(T):
        reduced = config.reduce(rho)
        psi = inputs.pure_vector(k)
        rho = config.write_pure(psi, reduced) if psi is not None else config.write(inputs.state(k), reduced)
        if k >= washout:
            if shots.exact:
                rows.append(np.einsum("mij,ij->m", stacked_t, rho).real)
            else:
                rows.append(sampled_expectations(rho, observables, shots, rng))
            if record_states:
                states.append(rho)
    values = np.array(rows).reshape(len(rows), len(observables))
    return Trajectory(
        steps=np.arange(washout + 1, T + 1),
        labels=observables.labels,
        values=values,
        states=tuple(states) if record_states else None,
        final_state=rho,
    )


def random_initial_state(n: int, rng) -> np.ndarray:
    """Haar-random pure state ``|psi><psi|``.

    A normalised complex Gaussian vector has the same law as ``U|0...0>`` for
    Haar ``U`` and avoids a full QR.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    g = qla.as_rng(rng)
    D = 2**n
    v = g.standard_normal(D) + 1j * g.standard_normal(D)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())
