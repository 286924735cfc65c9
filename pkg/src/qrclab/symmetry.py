"""Symmetry sectors of diagonal conserved quantities.

The built-in decomposition splits the computational basis of n qubits by
Hamming weight ``l`` (eigenvalue ``n - 2l`` of the total magnetization
``S = sum_i sigma^z_i``). Sectors are always ordered by first appearance in
basis-index order, which for magnetization is ``l = 0, 1, ..., n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import qla
from .errors import InvalidArgument

__all__ = [
    "SectorDecomposition",
    "BlockObservable",
    "hamming_weights",
    "magnetization_sectors",
    "sectors_from_diagonals",
    "sector_projector",
    "block_haar_unitary",
    "block_haar_unitaries",
    "parity_operator",
    "magnetization_operator",
    "check_alphas",
    "lemma1_mean_state",
    "sector_populations",
    "block_observable_expectation",
]

MAX_SECTOR_QUBITS = 14


def hamming_weights(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    w = np.zeros(2**n, dtype=np.int64)
    for b in range(n):
        w += (idx >> b) & 1
    return w


@dataclass(frozen=True, eq=False)
class SectorDecomposition:
    """Partition of the ``2^n`` basis indices into symmetry sectors.

    Attributes
    ----------
    n_qubits : int
    sectors : tuple of ndarray
        Sorted basis indices of each sector.
    labels : ndarray
        Sector id of every basis index (length ``2^n``).
    eigenvalues : tuple
        Joint eigenvalue(s) characterising each sector.
    """

    n_qubits: int
    sectors: tuple
    labels: np.ndarray
    eigenvalues: tuple

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sectors)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def _from_labels(n: int, keys: Sequence) -> SectorDecomposition:
    order: dict = {}
    labels = np.empty(len(keys), dtype=np.int64)
    for i, k in enumerate(keys):
        labels[i] = order.setdefault(k, len(order))
    sectors = tuple(np.flatnonzero(labels == s) for s in range(len(order)))
    return SectorDecomposition(n, sectors, labels, tuple(order))


def magnetization_sectors(n: int) -> SectorDecomposition:
    """Hamming-weight sectors of ``S = sum_i sigma^z_i``; ``D_l = C(n, l)``."""
    if not 1 <= n <= MAX_SECTOR_QUBITS:
        raise InvalidArgument(f"n must be in [1, {MAX_SECTOR_QUBITS}], got {n}")
    w = hamming_weights(n)
    labels = w.copy()
    sectors = tuple(np.flatnonzero(w == l) for l in range(n + 1))
    return SectorDecomposition(n, sectors, labels, tuple(float(n - 2 * l) for l in range(n + 1)))


def sectors_from_diagonals(ops: Sequence, decimals: int = 9) -> SectorDecomposition:
    """Joint eigenspaces of commuting operators that are diagonal in the computational basis.

    Non-diagonal symmetry sets are rejected; the caller is expected to rotate
    into a common eigenbasis first.
    """
    if not ops:
        raise InvalidArgument("need at least one operator")
    diags = []
    n = None
    for op in ops:
        op = np.asarray(op, dtype=complex)
        k = qla.n_qubits_of(op)
        if n is None:
            n = k
        elif k != n:
            raise InvalidArgument("operators act on different numbers of qubits")
        if np.max(np.abs(op - np.diag(np.diag(op)))) > qla.HERM_TOL:
            raise InvalidArgument("only operators diagonal in the computational basis are supported")
        d = np.diag(op)
        if np.max(np.abs(d.imag)) > qla.HERM_TOL:
            raise InvalidArgument("operators must be Hermitian")
        diags.append(np.round(d.real, decimals) + 0.0)
    keys = list(zip(*diags))
    return _from_labels(n, keys)


def sector_projector(decomp: SectorDecomposition, l: int) -> np.ndarray:
    if not 0 <= l < decomp.n_sectors:
        raise InvalidArgument(f"sector index {l} out of range [0, {decomp.n_sectors})")
    p = np.zeros((decomp.dim, decomp.dim), dtype=complex)
    idx = decomp.sectors[l]
    p[idx, idx] = 1.0
    return p


def block_haar_unitaries(decomp: SectorDecomposition, count: int, rng) -> np.ndarray:
    """Stack of ``count`` direct sums of independent per-sector Haar unitaries."""
    g = qla.as_rng(rng)
    out = np.zeros((count, decomp.dim, decomp.dim), dtype=complex)
    for idx in decomp.sectors:
        blocks = qla.haar_unitaries(len(idx), count, g)
        out[:, idx[:, None], idx[None, :]] = blocks
    return out


def block_haar_unitary(decomp: SectorDecomposition, rng) -> np.ndarray:
    return block_haar_unitaries(decomp, 1, rng)[0]


def parity_operator(n: int) -> np.ndarray:
    """``prod_i sigma^z_i``: diagonal with entries ``(-1)^weight``."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    return np.diag((1 - 2 * (hamming_weights(n) % 2)).astype(complex))


def magnetization_operator(n: int) -> np.ndarray:
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    return np.diag((n - 2 * hamming_weights(n)).astype(complex))


def check_alphas(alphas, n_sectors: int | None = None) -> np.ndarray:
    """Validate a sector-population vector (entries in [0, 1], summing to 1)."""
    a = np.asarray(alphas, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidArgument("alphas must be a nonempty vector")
    if n_sectors is not None and a.size != n_sectors:
        raise InvalidArgument(f"expected {n_sectors} populations, got {a.size}")
    if np.any(a < 0) or np.any(a > 1 + 1e-12):
        raise InvalidArgument(f"populations must lie in [0, 1]: {a}")
    if abs(a.sum() - 1) > 1e-10:
        raise InvalidArgument(f"populations must sum to 1, got {a.sum()!r}")
    return a


def lemma1_mean_state(alphas, decomp: SectorDecomposition) -> np.ndarray:
    """Sector-uniform state ``sum_l alpha_l P_l / D_l``."""
    a = check_alphas(alphas, decomp.n_sectors)
    dims = np.asarray(decomp.dims, dtype=float)
    return np.diag((a / dims)[decomp.labels].astype(complex))


def sector_populations(rho, decomp: SectorDecomposition) -> np.ndarray:
    """``alpha_l = Tr{P_l rho}`` for every sector."""
    rho = np.asarray(rho)
    if rho.shape != (decomp.dim, decomp.dim):
        raise InvalidArgument(f"state shape {rho.shape} does not match dimension {decomp.dim}")
    diag = np.real(np.diagonal(rho))
    a = np.bincount(decomp.labels, weights=diag, minlength=decomp.n_sectors)
    # roundoff can leave -1e-17 on empty sectors
    return np.where((a < 0) & (a > -1e-12), 0.0, a)


@dataclass(frozen=True, eq=False)
class BlockObservable:
    """Observable ``sum_l beta_l P_l`` that is constant on each sector."""

    decomposition: SectorDecomposition
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.shape != (self.decomposition.n_sectors,):
            raise InvalidArgument(
                f"need {self.decomposition.n_sectors} betas, got shape {b.shape}"
            )
        object.__setattr__(self, "betas", b)

    def matrix(self) -> np.ndarray:
        return np.diag(self.betas[self.decomposition.labels].astype(complex))

    @classmethod
    def magnetization(cls, decomp: SectorDecomposition) -> "BlockObservable":
        return cls(decomp, np.array([decomp.n_qubits - 2 * l for l in range(decomp.n_sectors)], float))


def block_observable_expectation(alphas, obs: BlockObservable) -> float:
    a = np.asarray(alphas, dtype=float)
    if a.shape != obs.betas.shape:
        raise InvalidArgument(f"length mismatch: {a.shape} vs {obs.betas.shape}")
    return float(a @ obs.betas)
