"""Dense linear algebra for n-qubit operators.

Conventions
-----------
Operators are plain complex ``numpy`` arrays. Qubit 0 is the most
significant bit of a computational-basis index, so ``kron(a, b)`` places
``a`` on the lower-numbered qubits. All routines are pure functions.

Random draws go through :class:`RngStream`, a seeded stream keyed by
``(seed, stream_id, *path)`` so that ensemble members get independent,
reproducible generators regardless of the order in which they run.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvariantError, SizeError

__all__ = [
    "MAX_DIM",
    "PAULI",
    "RngStream",
    "as_rng",
    "kron",
    "kron_all",
    "embed",
    "n_qubits_of",
    "partial_trace",
    "herm_eig",
    "evolution_unitary",
    "haar_unitary",
    "haar_unitaries",
    "trace_distance",
    "purity",
    "basis_projector",
    "check_density_matrix",
    "check_unitary",
    "is_hermitian",
]

MAX_DIM = 2**14

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
TRACE_IMAG_TOL = 1e-12
PSD_TOL = 1e-9
UNITARY_TOL = 1e-10

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through a ``SeedSequence`` whose spawn key
    is ``(stream_id, *path)``. Two streams with the same identity produce the
    same draws; :meth:`spawn` derives a child stream from identity alone, never
    from the parent's consumed state.

    Unknown attributes are forwarded to the underlying
    :class:`numpy.random.Generator`, so ``stream.normal(...)`` works.
    """

    def __init__(self, seed: int, stream_id: int = 0, path: Sequence[int] = ()):
        if seed < 0 or stream_id < 0 or any(int(p) < 0 for p in path):
            raise InvalidArgument("seed, stream_id and path entries must be non-negative")
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.stream_id = int(stream_id) & 0xFFFF_FFFF_FFFF_FFFF
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(keys))

    def __getattr__(self, name):
        # only reached for attributes not set in __init__
        if name == "generator":
            raise AttributeError(name)
        return getattr(self.generator, name)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def as_rng(rng) -> np.random.Generator:
    """Coerce ``RngStream`` / ``Generator`` / int / None to a numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise InvalidArgument(f"cannot use {type(rng).__name__} as a random stream")


def n_qubits_of(mat: np.ndarray) -> int:
    """Number of qubits for a square ``2^n x 2^n`` operator."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {mat.shape}")
    dim = mat.shape[0]
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise InvalidArgument(f"dimension {dim} is not a power of two")
    return n


def kron(a, b, max_dim: int = MAX_DIM) -> np.ndarray:
    """Kronecker product ``a (x) b`` with a guard on the result size."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidArgument("kron expects two matrices")
    rows, cols = a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]
    if rows > max_dim or cols > max_dim:
        raise SizeError(f"kron result {rows}x{cols} exceeds maximum dimension {max_dim}")
    return np.kron(a, b)


def kron_all(mats: Iterable, max_dim: int = MAX_DIM) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = kron(out, m, max_dim=max_dim)
    return out


def embed(op, sites: Sequence[int] | int, n: int) -> np.ndarray:
    """Embed a k-qubit operator acting on ``sites`` into an n-qubit space.

    ``op`` is ordered with ``sites[0]`` as its most significant qubit.
    """
    if isinstance(sites, (int, np.integer)):
        sites = [int(sites)]
    sites = list(sites)
    op = np.asarray(op, dtype=complex)
    k = len(sites)
    if op.shape != (2**k, 2**k):
        raise InvalidArgument(f"operator shape {op.shape} does not match {k} site(s)")
    if len(set(sites)) != k or any(s < 0 or s >= n for s in sites):
        raise InvalidArgument(f"invalid sites {sites} for {n} qubits")
    if 2**n > MAX_DIM:
        raise SizeError(f"2^{n} exceeds maximum dimension {MAX_DIM}")
    rest = [q for q in range(n) if q not in sites]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    # full acts on qubit order (sites..., rest...); permute back to 0..n-1
    order = sites + rest
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def partial_trace(rho, traced_qubits: Iterable[int]) -> np.ndarray:
    """Trace out ``traced_qubits``; surviving qubits keep their relative order."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho)
    traced = sorted(set(int(q) for q in traced_qubits))
    if not traced:
        raise InvalidArgument("traced_qubits must be nonempty")
    if any(q < 0 or q >= n for q in traced):
        raise InvalidArgument(f"qubit index out of range for {n} qubits: {traced}")
    if len(traced) == n:
        raise InvalidArgument("cannot trace out every qubit")
    keep = [q for q in range(n) if q not in traced]
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    t = rho.reshape([2] * (2 * n))
    t = t.transpose(keep + traced + [n + q for q in keep] + [n + q for q in traced])
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("iaja->ij", t)


def is_hermitian(h, atol: float = HERM_TOL) -> bool:
    h = np.asarray(h)
    return h.ndim == 2 and h.shape[0] == h.shape[1] and bool(
        np.max(np.abs(h - h.conj().T), initial=0.0) <= atol
    )


def herm_eig(h, atol: float = HERM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real, ascending.
    eigenvectors : ndarray
        Unitary matrix whose columns are the eigenvectors.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {h.shape}")
    if not is_hermitian(h, atol):
        raise InvalidArgument("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(h)


def evolution_unitary(h, dt: float) -> np.ndarray:
    """``exp(-i h dt)`` through the spectral decomposition of ``h``."""
    w, v = herm_eig(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def haar_unitaries(dim: int, count: int, rng) -> np.ndarray:
    """Stack of ``count`` independent Haar unitaries, shape ``(count, dim, dim)``.

    Complex Ginibre matrix, QR, then multiply each column of Q by the phase of
    the matching diagonal entry of R so the factorization is unique.
    """
    if dim < 1:
        raise InvalidArgument(f"dimension must be >= 1, got {dim}")
    if count < 0:
        raise InvalidArgument("count must be non-negative")
    g = as_rng(rng)
    z = (g.standard_normal((count, dim, dim)) + 1j * g.standard_normal((count, dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def haar_unitary(dim: int, rng) -> np.ndarray:
    """One Haar-distributed unitary of size ``dim``."""
    return haar_unitaries(dim, 1, rng)[0]


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise InvalidArgument(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.vdot(rho.conj().T, rho)))


def basis_projector(bits: str) -> np.ndarray:
    """``|bits><bits|`` for a bit string such as ``"01"``."""
    idx = int(bits, 2)
    p = np.zeros((2 ** len(bits),) * 2, dtype=complex)
    p[idx, idx] = 1.0
    return p


def check_density_matrix(rho, name: str = "density matrix") -> np.ndarray:
    """Raise :class:`InvariantError` unless ``rho`` is Hermitian, unit trace and PSD."""
    rho = np.asarray(rho)
    n_qubits_of(rho)
    if not np.all(np.isfinite(rho)):
        raise InvariantError("finite entries", f"{name} contains NaN/Inf")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERM_TOL:
        raise InvariantError("hermiticity", f"{name}: max|rho - rho^dag| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr.real - 1) > TRACE_TOL or abs(tr.imag) > TRACE_IMAG_TOL:
        raise InvariantError("unit trace", f"{name}: trace = {tr}")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -PSD_TOL:
        raise InvariantError("positive semidefinite", f"{name}: min eigenvalue {lo:.3e}")
    return rho


def check_unitary(u, name: str = "unitary") -> np.ndarray:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise InvalidArgument(f"{name} must be square, got {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > UNITARY_TOL:
        raise InvariantError("unitarity", f"{name}: max|U^dag U - I| = {err:.3e}")
    return u
