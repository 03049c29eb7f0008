"""Hamiltonian assembly for the single-qubit, two-qubit and four-MZM setups.

All energies are angular frequencies (hbar = 1). Time-dependent terms are
kept as ``(operator, envelope)`` pairs so a propagator never has to rebuild
sparse matrices: ``H(t) = H_static + sum_k envelope_k(t) * operator_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .algebra import (
    BosonSector,
    ChargeSector,
    FermionSector,
    FockBasis,
    OperatorMatrix,
    boson_annihilator,
    build_basis,
    fermion_annihilator,
    island_charge_ops,
    majorana_pair,
    number_operator,
    parity_operator,
)

HERMITIAN_ATOL = 1e-12

Envelope = Callable[[float], float]


class AssemblyError(RuntimeError):
    """Assembled Hamiltonian failed an internal consistency check."""


@dataclass(frozen=True)
class DeviceParams:
    """Single TS-Sm-TS qubit coupled to one resonator mode.

    ``eps0`` already contains the dot charging offset. ``phi_x`` is the
    external flux phase in radians.
    """

    E_C: float
    eps0: float
    n_g: float = 0.0
    t_L: float = 0.0
    t_R: float = 0.0
    phi_x: float = 0.0
    lambda_C: float = 0.0
    lambda_0: float = 0.0
    omega_r: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.t_L < 0 or self.t_R < 0:
            raise ValueError("tunnel amplitudes must be nonnegative")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.omega_r <= 0:
            raise ValueError("omega_r must be positive")

    def replace(self, **changes) -> "DeviceParams":
        return DeviceParams(**{**self.__dict__, **changes})


@dataclass(frozen=True)
class QubitDrive:
    """Coupling ``g(t) = g_bar + g_tilde cos(omega_m t + phase)``."""

    g_bar: float = 0.0
    g_tilde: float = 0.0
    omega_m: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError("omega_m must be positive")

    def __call__(self, t: float) -> float:
        return self.g_bar + self.g_tilde * math.cos(self.omega_m * t + self.phase)


@dataclass(frozen=True)
class TwoQubitParams:
    omega_q1: float
    omega_q2: float
    omega_r: float
    drive1: QubitDrive
    drive2: QubitDrive
    kappa: float = 0.0


@dataclass(frozen=True)
class FourMzmParams:
    """Two Majorana box qubits joined by two single-orbital barriers.

    ``t`` holds the complex amplitudes ``(t1, t2, t3, t4)`` of the hops
    gamma1-b1, gamma2-b2, gamma3-b1, gamma4-b2.
    """

    E_L: float
    E_R: float
    eps1: float
    eps2: float
    t: tuple[complex, complex, complex, complex]
    lambda_L: float = 0.0
    lambda_R: float = 0.0
    lambda_1: float = 0.0
    lambda_2: float = 0.0
    omega_r: float = 1.0

    def __post_init__(self):
        if min(self.E_L, self.E_R, self.eps1, self.eps2) <= 0:
            raise ValueError("charging and orbital energies must be positive")
        object.__setattr__(self, "t", tuple(complex(x) for x in self.t))
        if len(self.t) != 4:
            raise ValueError("four tunnel amplitudes required")

    def replace(self, **changes) -> "FourMzmParams":
        return FourMzmParams(**{**self.__dict__, **changes})


@dataclass(frozen=True, eq=False)
class ModelBundle:
    basis: FockBasis
    H_static: OperatorMatrix
    drives: tuple[tuple[OperatorMatrix, Envelope], ...] = ()
    observables: Mapping[str, OperatorMatrix] = field(default_factory=dict)

    def __post_init__(self):
        ops = [self.H_static, *(op for op, _ in self.drives), *self.observables.values()]
        if any(op.basis is not self.basis for op in ops):
            raise AssemblyError("bundle operators must share the bundle basis")
        for op in [self.H_static, *(op for op, _ in self.drives)]:
            if not op.is_hermitian(HERMITIAN_ATOL):
                raise AssemblyError("assembled Hamiltonian term is not Hermitian")

    def hamiltonian(self, t: float) -> OperatorMatrix:
        H = self.H_static
        for op, env in self.drives:
            H = H + env(t) * op
        return H


def default_boson_cutoff(alpha_target: float) -> int:
    """Photon cutoff that contains a coherent state of amplitude ``alpha_target``."""
    a = abs(alpha_target)
    return max(15, math.ceil(6 * a * a + 9 * a))


def _quadrature(a: OperatorMatrix) -> OperatorMatrix:
    """``i(a^dag - a)``."""
    return 1j * (a.dag() - a)


def build_single_qubit(
    p: DeviceParams,
    charge_range: tuple[int, int] = (-2, 2),
    n_max: int = 15,
    flux_drive: Envelope | None = None,
    eps_drive: Envelope | None = None,
) -> ModelBundle:
    """TS-Sm-TS qubit with a single barrier orbital, coupled to a resonator.

    Basis order is [island charge N, barrier fermion b, logical fermion f,
    photons]. The logical fermion is ``f = (gamma_L2 + i gamma_R1)/2`` and
    ``sigma_z = i gamma_L2 gamma_R1 = 2 f^dag f - 1``; the spectator
    Majoranas gamma_L1, gamma_R2 decouple and are not represented.

    ``flux_drive`` replaces the static ``phi_x`` by ``phi_x(t)``;
    ``eps_drive`` adds a modulation ``eps0 -> eps0 + eps_drive(t)``.

    The bare ``sigma_z`` is flipped by tunneling. The observable
    ``sigma_z_logical = (-1)^{n_b} sigma_z = -(-1)^{n_b + n_f}`` is conserved
    exactly and equals ``sigma_z`` on states with an empty barrier.
    """
    lo, hi = charge_range
    if lo > -1 or hi < 0:
        raise ValueError("charge range must contain -1 and 0")
    if n_max < 1:
        raise ValueError("boson cutoff must be at least 1")
    basis = build_basis([ChargeSector(lo, hi, "N"), FermionSector("b"), FermionSector("f"), BosonSector(n_max, "a")])
    N, shift = island_charge_ops(basis, "N")
    b = fermion_annihilator(basis, "b")
    nb = b.dag() @ b
    gL2, gR1 = majorana_pair(basis, "f")
    a = boson_annihilator(basis, "a")
    I = OperatorMatrix.identity(basis)

    charge = N - p.n_g * I
    H0 = p.E_C * (charge @ charge) + p.eps0 * nb
    hop_L = (0.5j * p.t_L) * (shift @ gL2 @ b)
    hop_R = -(0.5 * p.t_R) * (shift @ gR1 @ b)
    drives: list = []
    if flux_drive is None:
        hop = np.exp(0.5j * p.phi_x) * hop_L + hop_R
        H_T = hop + hop.dag()
    else:
        H_T = hop_R + hop_R.dag()
        # e^{i phi/2} M + h.c. = cos(phi/2)(M + M^dag) + sin(phi/2) i(M - M^dag)
        drives.append((hop_L + hop_L.dag(), lambda t: math.cos(0.5 * flux_drive(t))))
        drives.append((1j * (hop_L - hop_L.dag()), lambda t: math.sin(0.5 * flux_drive(t))))
    if eps_drive is not None:
        drives.append((nb, eps_drive))
    H_r = p.omega_r * (a.dag() @ a)
    coupling = p.lambda_C * N + p.lambda_0 * nb
    H_int = coupling @ _quadrature(a)
    H = H0 + H_T + H_r + H_int

    sigma_z = 1j * (gL2 @ gR1)
    obs = {
        "sigma_z": sigma_z,
        "sigma_z_logical": OperatorMatrix.diagonal(basis, (-1.0) ** basis.sector_values("b")) @ sigma_z,
        "N": N,
        "n_b": nb,
        "a": a,
        "n_photon": a.dag() @ a,
        "charge_total": N + nb,
        "parity": parity_operator(basis, ["b", "f"]),
        "coupling": coupling,
        "H_q": H0 + H_T,
    }
    return ModelBundle(basis, H, tuple(drives), obs)


def build_effective_readout(
    omega_q: float,
    omega_r: float,
    drive: QubitDrive,
    n_max: int = 15,
) -> ModelBundle:
    """Two-level effective model ``w_r a^dag a + w_q/2 sz + i g(t)(sz + 1)(a^dag - a)``."""
    basis = build_basis([FermionSector("f"), BosonSector(n_max, "a")])
    g1, g2 = majorana_pair(basis, "f")
    sz = 1j * (g1 @ g2)
    a = boson_annihilator(basis, "a")
    I = OperatorMatrix.identity(basis)
    H = omega_r * (a.dag() @ a) + 0.5 * omega_q * sz
    coupling_op = (sz + I) @ _quadrature(a)
    obs = {"sigma_z": sz, "a": a, "n_photon": a.dag() @ a}
    return ModelBundle(basis, H, ((coupling_op, drive),), obs)


def build_ideal_readout(g_tilde: float, n_max: int = 15) -> ModelBundle:
    """Interaction-frame readout model ``(i/2) g_tilde sz (a^dag - a)``."""
    basis = build_basis([FermionSector("f"), BosonSector(n_max, "a")])
    g1, g2 = majorana_pair(basis, "f")
    sz = 1j * (g1 @ g2)
    a = boson_annihilator(basis, "a")
    H = (0.5 * g_tilde) * (sz @ _quadrature(a))
    obs = {"sigma_z": sz, "a": a, "n_photon": a.dag() @ a}
    return ModelBundle(basis, H, (), obs)


def build_two_qubit(p: TwoQubitParams, n_max: int = 15) -> ModelBundle:
    """Two longitudinally coupled qubits sharing a resonator.

    Each ``Z_i`` is the parity ``i gamma gamma`` of one fermionic mode.
    """
    if n_max < 1:
        raise ValueError("boson cutoff must be at least 1")
    basis = build_basis([FermionSector("q1"), FermionSector("q2"), BosonSector(n_max, "a")])
    ga, gb = majorana_pair(basis, "q1")
    gc, gd = majorana_pair(basis, "q2")
    Z1 = 1j * (ga @ gb)
    Z2 = 1j * (gc @ gd)
    a = boson_annihilator(basis, "a")
    H = 0.5 * p.omega_q1 * Z1 + 0.5 * p.omega_q2 * Z2 + p.omega_r * (a.dag() @ a)
    X = _quadrature(a)
    drives = ((Z1 @ X, p.drive1), (Z2 @ X, p.drive2))
    obs = {"Z1": Z1, "Z2": Z2, "ZZ": Z1 @ Z2, "a": a, "n_photon": a.dag() @ a}
    return ModelBundle(basis, H, drives, obs)


def build_four_mzm(
    p: FourMzmParams,
    charge_range: tuple[int, int] = (-1, 1),
    n_max: int | None = None,
    field_shift: float = 0.0,
) -> ModelBundle:
    """Two Majorana islands joined by barriers b1, b2, optionally with a resonator.

    Basis order is [N_L, N_R, b1, b2, m12, m34, photons], where the
    Majorana pairs (gamma1, gamma2) and (gamma3, gamma4) are the Majorana
    components of fermions m12 and m34. With ``n_max=None`` the resonator is
    omitted and ``field_shift`` replaces ``i(a^dag - a)`` by a classical
    number in the interaction term.
    """
    lo, hi = charge_range
    if lo > -1 or hi < 1:
        raise ValueError("charge range must contain -1..1")
    sectors = [
        ChargeSector(lo, hi, "N_L"),
        ChargeSector(lo, hi, "N_R"),
        FermionSector("b1"),
        FermionSector("b2"),
        FermionSector("m12"),
        FermionSector("m34"),
    ]
    if n_max is not None:
        sectors.append(BosonSector(n_max, "a"))
    basis = build_basis(sectors)
    NL, sL = island_charge_ops(basis, "N_L")
    NR, sR = island_charge_ops(basis, "N_R")
    b1 = fermion_annihilator(basis, "b1")
    b2 = fermion_annihilator(basis, "b2")
    g1, g2 = majorana_pair(basis, "m12")
    g3, g4 = majorana_pair(basis, "m34")
    t1, t2, t3, t4 = p.t

    H0 = p.E_L * (NL @ NL) + p.E_R * (NR @ NR) + p.eps1 * (b1.dag() @ b1) + p.eps2 * (b2.dag() @ b2)
    hop = sL @ (t1 * (g1 @ b1) + t2 * (g2 @ b2)) + sR @ (t3 * (g3 @ b1) + t4 * (g4 @ b2))
    H_T = hop + hop.dag()
    coupling = p.lambda_L * NL + p.lambda_R * NR + p.lambda_1 * (b1.dag() @ b1) + p.lambda_2 * (b2.dag() @ b2)
    P4 = g1 @ g2 @ g3 @ g4
    obs = {
        "H0": H0,
        "H_T": H_T,
        "coupling": coupling,
        "P4": P4,
        "gamma1": g1,
        "gamma2": g2,
        "gamma3": g3,
        "gamma4": g4,
        "N_L": NL,
        "N_R": NR,
        "parity": parity_operator(basis, ["b1", "b2", "m12", "m34"]),
    }
    H = H0 + H_T + field_shift * coupling
    if n_max is not None:
        a = boson_annihilator(basis, "a")
        H = H + p.omega_r * (a.dag() @ a) + coupling @ _quadrature(a)
        obs["a"] = a
    return ModelBundle(basis, H, (), obs)


def ground_sector_indices(bundle: ModelBundle) -> np.ndarray:
    """Indices of ``|N_L=0, N_R=0, n1=0, n2=0>`` states (any Majorana and photon state)."""
    b = bundle.basis
    mask = np.ones(b.dim, dtype=bool)
    for name in ("N_L", "N_R", "b1", "b2"):
        mask &= b.sector_values(name) == 0
    return np.flatnonzero(mask)


def number_of(bundle: ModelBundle, sector: str) -> OperatorMatrix:
    return number_operator(bundle.basis, sector)
