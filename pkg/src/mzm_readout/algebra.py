"""Composite Fock bases and sparse operator matrices.

A basis is an ordered product of sectors (island charge ranges, fermionic
modes, truncated bosons). States are ordered lexicographically over the
sectors in declaration order, so the first sector varies slowest.

Fermionic annihilators carry a Jordan-Wigner string over every fermionic
sector that precedes them, which makes all fermionic operators built on one
basis mutually anticommute. Charge shifts and boson operators are bosonic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Sequence, Union

import numpy as np
from scipy import sparse

MAX_BASIS_DIM = 10**7


class BasisError(ValueError):
    """Invalid basis specification or basis mismatch between operators."""


class SectorTypeError(TypeError):
    """Operator requested on a sector of the wrong kind."""


@dataclass(frozen=True)
class ChargeSector:
    """Island charge eigenvalues ``lo, lo+1, ..., hi``."""

    lo: int
    hi: int
    name: str = "N"

    @property
    def dim(self) -> int:
        return self.hi - self.lo + 1

    def labels(self) -> list[int]:
        return list(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class FermionSector:
    """A single fermionic mode, occupancy 0 or 1."""

    name: str = "f"

    @property
    def dim(self) -> int:
        return 2

    def labels(self) -> list[int]:
        return [0, 1]


@dataclass(frozen=True)
class BosonSector:
    """Boson mode truncated to photon numbers ``0..n_max``."""

    n_max: int
    name: str = "a"

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def labels(self) -> list[int]:
        return list(range(self.n_max + 1))


Sector = Union[ChargeSector, FermionSector, BosonSector]
SectorId = Union[int, str]


@dataclass(frozen=True, eq=False)
class FockBasis:
    sectors: tuple[Sector, ...]

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sectors)

    @cached_property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        strides = []
        acc = 1
        for d in reversed(self.dims):
            strides.append(acc)
            acc *= d
        return tuple(reversed(strides))

    def sector_index(self, sector: SectorId) -> int:
        if isinstance(sector, (int, np.integer)):
            if not 0 <= sector < len(self.sectors):
                raise BasisError(f"no sector {sector}")
            return int(sector)
        for k, s in enumerate(self.sectors):
            if s.name == sector:
                return k
        raise BasisError(f"no sector named {sector!r}")

    def index(self, label: Sequence[int]) -> int:
        """Basis index of a label (one value per sector: charge, occupancy or photon number)."""
        if len(label) != len(self.sectors):
            raise BasisError("label length does not match number of sectors")
        idx = 0
        for value, s, stride in zip(label, self.sectors, self._strides):
            if isinstance(s, ChargeSector):
                local = value - s.lo
            else:
                local = value
            if not 0 <= local < s.dim:
                raise BasisError(f"label value {value} outside sector {s.name!r}")
            idx += int(local) * stride
        return idx

    def label(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise BasisError(f"index {index} outside basis of dim {self.dim}")
        out = []
        for s, stride in zip(self.sectors, self._strides):
            local, index = divmod(index, stride)
            out.append(s.lo + local if isinstance(s, ChargeSector) else local)
        return tuple(out)

    def labels(self) -> list[tuple[int, ...]]:
        return list(product(*(s.labels() for s in self.sectors)))

    def sector_values(self, sector: SectorId) -> np.ndarray:
        """Per-state value of one sector's quantum number, as an integer array."""
        k = self.sector_index(sector)
        s = self.sectors[k]
        local = (np.arange(self.dim) // self._strides[k]) % s.dim
        return local + (s.lo if isinstance(s, ChargeSector) else 0)

    def __repr__(self) -> str:
        return f"FockBasis(dim={self.dim}, sectors={list(self.sectors)!r})"


def build_basis(spec: Sequence[Sector], max_dim: int = MAX_BASIS_DIM) -> FockBasis:
    if not spec:
        raise BasisError("empty basis specification")
    names = set()
    dim = 1
    for s in spec:
        if isinstance(s, ChargeSector):
            if s.hi < s.lo:
                raise BasisError(f"empty charge range [{s.lo}, {s.hi}]")
        elif isinstance(s, BosonSector):
            if s.n_max < 0:
                raise BasisError("boson truncation must be nonnegative")
        elif not isinstance(s, FermionSector):
            raise BasisError(f"unknown sector descriptor {s!r}")
        if s.name in names:
            raise BasisError(f"duplicate sector name {s.name!r}")
        names.add(s.name)
        dim *= s.dim
        if dim > max_dim:
            raise BasisError(f"basis too large (dim > {max_dim})")
    return FockBasis(tuple(spec))


def _canonical(m) -> sparse.csr_matrix:
    m = sparse.csr_matrix(m, dtype=np.complex128)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse complex matrix tied to the basis it acts on."""

    basis: FockBasis
    matrix: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = _canonical(self.matrix)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise BasisError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, basis: FockBasis) -> "OperatorMatrix":
        return cls(basis, sparse.identity(basis.dim, dtype=np.complex128, format="csr"))

    @classmethod
    def diagonal(cls, basis: FockBasis, values) -> "OperatorMatrix":
        return cls(basis, sparse.diags(np.asarray(values, dtype=np.complex128), format="csr"))

    @classmethod
    def zeros(cls, basis: FockBasis) -> "OperatorMatrix":
        return cls(basis, sparse.csr_matrix((basis.dim, basis.dim), dtype=np.complex128))

    def _check(self, other: "OperatorMatrix"):
        if other.basis is not self.basis:
            raise BasisError("operators act on different bases")

    def __add__(self, other):
        if isinstance(other, OperatorMatrix):
            self._check(other)
            return OperatorMatrix(self.basis, self.matrix + other.matrix)
        if np.isscalar(other):
            return self + other * OperatorMatrix.identity(self.basis)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return OperatorMatrix(self.basis, -self.matrix)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if np.isscalar(c):
            return OperatorMatrix(self.basis, self.matrix * c)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            self._check(other)
            return OperatorMatrix(self.basis, self.matrix @ other.matrix)
        return self.matrix @ other

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.matrix.conj().T)

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self @ other - other @ self

    def anticommutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self @ other + other @ self

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def expect(self, state) -> complex:
        """Expectation value against a state vector or a density matrix."""
        state = np.asarray(state)
        if state.ndim == 1:
            return complex(np.vdot(state, self.matrix @ state))
        return complex(np.sum(self.matrix.multiply(state.T)))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_abs(self) -> float:
        return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0

    def is_hermitian(self, atol: float = 0.0) -> bool:
        return (self - self.dag()).max_abs() <= atol

    def restrict(self, indices) -> np.ndarray:
        """Dense block on a subset of basis states."""
        idx = np.asarray(indices)
        return self.matrix[idx][:, idx].toarray()


def _embed(basis: FockBasis, local_ops: dict[int, sparse.spmatrix]) -> OperatorMatrix:
    out = sparse.identity(1, dtype=np.complex128, format="csr")
    for k, s in enumerate(basis.sectors):
        op = local_ops.get(k)
        if op is None:
            op = sparse.identity(s.dim, dtype=np.complex128, format="csr")
        out = sparse.kron(out, op, format="csr")
    return OperatorMatrix(basis, out)


_SIGMA_Z = sparse.csr_matrix(np.diag([1.0, -1.0]).astype(np.complex128))
_LOWER = sparse.csr_matrix(np.array([[0, 1], [0, 0]], dtype=np.complex128))


def fermion_annihilator(basis: FockBasis, mode: SectorId) -> OperatorMatrix:
    k = basis.sector_index(mode)
    if not isinstance(basis.sectors[k], FermionSector):
        raise SectorTypeError(f"sector {basis.sectors[k].name!r} is not fermionic")
    local = {k: _LOWER}
    for j in range(k):
        if isinstance(basis.sectors[j], FermionSector):
            local[j] = _SIGMA_Z
    return _embed(basis, local)


def majorana_pair(basis: FockBasis, mode: SectorId) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Return ``(f + f^dag, i(f^dag - f))`` so that ``f = (g1 + i g2)/2``."""
    f = fermion_annihilator(basis, mode)
    fd = f.dag()
    return f + fd, 1j * (fd - f)


def number_operator(basis: FockBasis, sector: SectorId) -> OperatorMatrix:
    """Diagonal operator of a sector's quantum number (charge, occupancy or photon count)."""
    return OperatorMatrix.diagonal(basis, basis.sector_values(sector).astype(float))


def island_charge_ops(basis: FockBasis, sector: SectorId) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Charge operator and the truncated shift ``e^{i phi/2}``: ``|N> -> |N+1>``, top state annihilated."""
    k = basis.sector_index(sector)
    s = basis.sectors[k]
    if not isinstance(s, ChargeSector):
        raise SectorTypeError(f"sector {s.name!r} is not a charge range")
    n_op = _embed(basis, {k: sparse.diags(np.arange(s.lo, s.hi + 1, dtype=np.complex128), format="csr")})
    shift = _embed(basis, {k: sparse.eye(s.dim, k=-1, dtype=np.complex128, format="csr")})
    return n_op, shift


def boson_annihilator(basis: FockBasis, sector: SectorId) -> OperatorMatrix:
    k = basis.sector_index(sector)
    s = basis.sectors[k]
    if not isinstance(s, BosonSector):
        raise SectorTypeError(f"sector {s.name!r} is not a boson")
    a = sparse.diags(np.sqrt(np.arange(1, s.dim, dtype=float)).astype(np.complex128), 1, format="csr")
    return _embed(basis, {k: a})


def parity_operator(basis: FockBasis, modes: Sequence[SectorId]) -> OperatorMatrix:
    """``(-1)^(sum of occupancies)`` over the given fermionic modes."""
    occ = np.zeros(basis.dim, dtype=int)
    for m in modes:
        k = basis.sector_index(m)
        if not isinstance(basis.sectors[k], FermionSector):
            raise SectorTypeError(f"sector {basis.sectors[k].name!r} is not fermionic")
        occ += basis.sector_values(k)
    return OperatorMatrix.diagonal(basis, (-1.0) ** occ)
