"""Closed-form low-energy parameters of the Majorana readout setups.

Single qubit: each island-charge block ``{|N=n, n0=0>, |N=n-1, n0=1>}`` is
diagonalized exactly. The logical splitting and longitudinal coupling follow
from the ``n = 0`` block. The four-MZM parity-string coefficients, the
two-qubit exchange rate and the capacitive coupling constant are also here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import DeviceParams, FourMzmParams, build_single_qubit

R_K = 25812.807  # ohm
E_CHARGE = 1.602176634e-19  # C
HBAR = 1.054571817e-34  # J s


class DegenerateSectorError(ValueError):
    """delta(n) = 0: the charge block has no gap and the rotation angles diverge."""


@dataclass(frozen=True)
class EffectiveParams:
    delta: float
    f_plus: float
    f_minus: float
    omega_q: float
    g_z: float
    small_t_omega_q: float
    small_t_g_z: float
    g_z_quarter: float
    small_t_g_z_quarter: float


@dataclass(frozen=True)
class BlockSpectrum:
    n: int
    eps_c: float
    eps_f: float
    E_n: float
    alpha_plus: complex
    alpha_minus: complex

    @property
    def levels(self) -> np.ndarray:
        return np.array([self.E_n, self.E_n + self.eps_c, self.E_n + self.eps_f, self.E_n + self.eps_c + self.eps_f])


@dataclass(frozen=True)
class BlockCouplings:
    g_c: float
    g_f: float
    w_plus: complex
    w_minus: complex


@dataclass(frozen=True)
class FourMzmCoefficients:
    """Parity-string coefficients of the four-MZM effective Hamiltonian.

    ``A`` and ``B`` are the two-path closed forms (a single electron moving
    round the loop with the opposite island staying neutral). ``A_complete``
    and ``B_complete`` add the four fourth-order orderings that pass through
    the doubly charged state ``|N_L=-1, N_R=-1, n1=1, n2=1>`` with energy
    ``delta_two_hole = E_L + E_R + eps1 + eps2``; these are what the
    numerical Schrieffer-Wolff expansion reproduces.
    """

    A: complex
    B: complex
    A_complete: complex
    B_complete: complex
    deltas: tuple[float, float, float, float, float, float]
    delta_two_hole: float

    @property
    def parity_coefficient(self) -> float:
        """Coefficient ``-(A + A*)`` of gamma1 gamma2 gamma3 gamma4 from the two-path forms."""
        return -2.0 * self.A.real

    @property
    def parity_coefficient_complete(self) -> float:
        return -2.0 * self.A_complete.real


def _cos_half(phi: float) -> float:
    # cos(phi/2) via sin of the reduced complement: exactly 0 at phi = +-pi
    u = abs(math.remainder(0.5 * phi, 2 * math.pi))
    return math.sin(0.5 * math.pi - u)


def delta_n(n: int, p: DeviceParams) -> float:
    """Energy ``eps0 - 2 E_C (n - n_g) + E_C`` of moving an electron from the island to the barrier."""
    return p.eps0 - 2.0 * p.E_C * (n - p.n_g) + p.E_C


def f_pm(delta: float, t_L: float, t_R: float, phi_x: float) -> tuple[float, float]:
    if t_L < 0 or t_R < 0:
        raise ValueError("tunnel amplitudes must be nonnegative")
    base = delta * delta + t_L * t_L + t_R * t_R
    cross = 2.0 * t_L * t_R * _cos_half(phi_x)
    assert base - abs(cross) >= 0.0
    return math.sqrt(base + cross), math.sqrt(base - cross)


def _f_diff(fp: float, fm: float, t_L: float, t_R: float, phi_x: float) -> float:
    """``f_plus - f_minus`` without subtractive cancellation."""
    return 4.0 * t_L * t_R * _cos_half(phi_x) / (fp + fm)


def _require_gap(delta: float):
    if delta == 0.0:
        raise DegenerateSectorError("degenerate sector: delta(n) = 0")


def t_pm(p: DeviceParams) -> tuple[complex, complex]:
    """``t_L e^{i phi_x/2} +- t_R``."""
    tl = p.t_L * complex(_cos_half(p.phi_x), math.sin(0.5 * p.phi_x))
    return tl + p.t_R, tl - p.t_R


def block_spectrum(n: int, p: DeviceParams) -> BlockSpectrum:
    d = delta_n(n, p)
    _require_gap(d)
    fp, fm = f_pm(d, p.t_L, p.t_R, p.phi_x)
    sgn = math.copysign(1.0, d)
    eps_c = 0.5 * sgn * (fp + fm)
    eps_f = 0.5 * sgn * _f_diff(fp, fm, p.t_L, p.t_R, p.phi_x)
    E = p.E_C * (n - p.n_g) ** 2 + 0.5 * (d - eps_c - eps_f)
    # U = exp(-S), S = a_m c^dag f - a_p c^dag f^dag - h.c., with c = |0_n><1_n|
    # ordered before f. Exact diagonalization fixes the phases to +i t_+^*/|t_+|
    # and -i t_-^*/|t_-|; the angle is signed so it stays small for either sign of delta.
    alphas = []
    for t, sign in zip(t_pm(p), (1, -1)):
        mag = abs(t)
        if mag == 0.0:
            alphas.append(0j)
            continue
        angle = 0.5 * math.atan(mag / d)
        alphas.append(angle * (sign * 1j * t.conjugate() / mag))
    return BlockSpectrum(n, eps_c, eps_f, E, alphas[0], alphas[1])


def block_couplings(n: int, p: DeviceParams) -> BlockCouplings:
    """Dressed resonator couplings of block ``n``.

    Written with ``|delta|`` so that ``g_f`` is always the coupling
    difference between the dressed states adiabatically connected to
    ``f^dag f = 1`` and ``f^dag f = 0``; for ``delta > 0`` this is the
    familiar ``((lC - l0)/2)(delta/f_- - delta/f_+)``.
    """
    d = delta_n(n, p)
    _require_gap(d)
    fp, fm = f_pm(d, p.t_L, p.t_R, p.phi_x)
    dl = p.lambda_0 - p.lambda_C
    ad = abs(d)
    g_c = 0.5 * dl * (ad / fm + ad / fp)
    g_f = -0.5 * dl * ad * _f_diff(fp, fm, p.t_L, p.t_R, p.phi_x) / (fp * fm)
    tp, tm = t_pm(p)
    w_plus = dl * 1j * tp / (2.0 * d)
    w_minus = dl * 1j * tm / (2.0 * d)
    return BlockCouplings(g_c, g_f, w_plus, w_minus)


def effective_params(p: DeviceParams) -> EffectiveParams:
    d = delta_n(0, p)
    _require_gap(d)
    fp, fm = f_pm(d, p.t_L, p.t_R, p.phi_x)
    spec = block_spectrum(0, p)
    g_f = block_couplings(0, p).g_f
    tt = p.t_L * p.t_R * _cos_half(p.phi_x)
    dl_c = p.lambda_C - p.lambda_0
    return EffectiveParams(
        delta=d,
        f_plus=fp,
        f_minus=fm,
        omega_q=spec.eps_f,
        g_z=0.5 * g_f,
        small_t_omega_q=tt / d,
        small_t_g_z=0.5 * dl_c * tt / (d * d),
        g_z_quarter=0.25 * g_f,
        small_t_g_z_quarter=0.25 * dl_c * tt / (d * d),
    )


def qubit_splitting(p: DeviceParams) -> tuple[float, float]:
    """Exact ``omega_q`` and its small-tunneling form ``t_L t_R cos(phi_x/2)/delta``."""
    e = effective_params(p)
    return e.omega_q, e.small_t_omega_q


@dataclass(frozen=True)
class CouplingEstimates:
    exact: float
    """``g_f(0)/2``: coefficient of ``i(sigma_z + 1)(a^dag - a)``."""
    small_t: float
    """Leading small-t expansion of ``exact``."""
    quarter: float
    """``-((lC - l0)/4) d omega_q / d delta = g_f(0)/4``."""
    small_t_quarter: float
    """``((lC - l0)/4) t_L t_R cos(phi_x/2)/delta^2``, the small-t limit of ``quarter``."""


def longitudinal_coupling(p: DeviceParams) -> CouplingEstimates:
    e = effective_params(p)
    return CouplingEstimates(e.g_z, e.small_t_g_z, e.g_z_quarter, e.small_t_g_z_quarter)


def four_mzm_coefficients(p: FourMzmParams) -> FourMzmCoefficients:
    d1 = p.E_L + p.eps1
    d2 = p.E_L + p.eps2
    d3 = p.E_R + p.eps1
    d4 = p.E_R + p.eps2
    d5 = d6 = p.E_L + p.E_R
    dd = d1 + d4
    deltas = (d1, d2, d3, d4, d5, d6)
    if min(deltas) <= 0:
        raise ValueError("invalid denominators")
    t1, t2, t3, t4 = p.t
    lL, lR, l1, l2 = p.lambda_L, p.lambda_R, p.lambda_1, p.lambda_2

    a_amp = t1 * t3.conjugate() * t4.conjugate() * t2
    loop = t1 * t3.conjugate() * t4 * t2.conjugate()
    left = 1.0 / (d1 * d2 * d5)
    right = 1.0 / (d3 * d4 * d6)
    A = a_amp * (left + right)
    left_b = left * ((l1 - lL) / d1 + (l2 - lL) / d2 + (lR - lL) / d5)
    right_b = right * ((l1 - lR) / d3 + (l2 - lR) / d4 + (lL - lR) / d6)
    B = loop * (left_b + right_b)

    # orderings through the two-hole state: first hop off L (d1) or off R (d4),
    # last hop back onto L (d2) or onto R (d3)
    s1, s2, s3, s4 = l1 - lL, l2 - lL, l1 - lR, l2 - lR
    s_dd = l1 + l2 - lL - lR
    two_hole = 0.0
    two_hole_b = 0.0
    for e_first, s_first in ((d1, s1), (d4, s4)):
        for e_last, s_last in ((d2, s2), (d3, s3)):
            w = 1.0 / (e_first * dd * e_last)
            two_hole += w
            two_hole_b += w * (s_first / e_first + s_dd / dd + s_last / e_last)
    A_complete = loop * (left + right + two_hole)
    B_complete = loop * (left_b + right_b + two_hole_b)
    return FourMzmCoefficients(A, B, A_complete, B_complete, deltas, dd)


def two_qubit_gate(g1: float, g2: float, omega_m: float, omega_r: float) -> tuple[float, float]:
    """Exchange rate ``J = g1 g2/(omega_m - omega_r)`` and gate time ``pi/(4|J|)``."""
    if omega_m == omega_r:
        raise ZeroDivisionError("resonant modulation is readout, not a gate")
    J = g1 * g2 / (omega_m - omega_r)
    if J == 0.0:
        raise ValueError("no coupling")
    return J, math.pi / (4.0 * abs(J))


def zz_rate(
    g1_tilde: float,
    g2_tilde: float,
    omega_m: float,
    omega_r: float,
    g1_bar: float = 0.0,
    g2_bar: float = 0.0,
) -> float:
    """Time-averaged coefficient of ``Z1 Z2`` to second order in the couplings.

    Each charge-parity sector sees a driven oscillator with drive
    ``G(t) = z1 g1(t) + z2 g2(t)``; its averaged energy shift is
    ``-G_bar^2/w_r - (G_tilde^2/2) w_r/(w_r^2 - w_m^2)``, whose ``z1 z2`` part
    is returned. Near resonance this is ``g1 g2 / (2 (w_m - w_r))``.
    """
    if omega_m == omega_r:
        raise ZeroDivisionError("resonant modulation is readout, not a gate")
    return g1_tilde * g2_tilde * omega_r / (omega_m**2 - omega_r**2) - 2.0 * g1_bar * g2_bar / omega_r


def capacitive_coupling(
    omega_r: float,
    Z_r: float,
    C_c: float | None = None,
    E_C: float | None = None,
    ratio: float | None = None,
) -> float:
    """Island-resonator coupling ``-omega_r sqrt(pi Z_r/R_K) C_c/C_island``.

    ``E_C`` is an angular frequency; ``C_island = e^2/(2 hbar E_C)``. Pass
    ``ratio = C_c/C_island`` instead of ``C_c`` and ``E_C`` to skip the
    conversion.
    """
    if ratio is None:
        if C_c is None or E_C is None:
            raise ValueError("give either ratio or both C_c and E_C")
        if C_c <= 0 or E_C <= 0:
            raise ValueError("inputs must be positive")
        ratio = C_c * 2.0 * HBAR * E_C / E_CHARGE**2
    if omega_r <= 0 or Z_r <= 0 or ratio <= 0:
        raise ValueError("inputs must be positive")
    return -omega_r * math.sqrt(math.pi * Z_r / R_K) * ratio


def dressed_logical_states(p: DeviceParams, charge_range=(-2, 2), n_max: int = 3):
    """Dressed states of the ``n = 0`` block from the full model with the resonator coupling off.

    Returns ``(bundle, psi0, psi1)`` where ``psi0``/``psi1`` are the
    vacuum-photon eigenvectors adiabatically connected to ``f^dag f = 0``/``1``
    (i.e. with the larger weight on ``N = 0, n_b = 0``).
    """
    bundle = build_single_qubit(p.replace(lambda_C=0.0, lambda_0=0.0), charge_range, n_max)
    basis = bundle.basis
    N = basis.sector_values("N")
    nb = basis.sector_values("b")
    nf = basis.sector_values("f")
    na = basis.sector_values("a")
    H = bundle.H_static.toarray()
    states = []
    for parity in (0, 1):
        idx = np.flatnonzero((N + nb == 0) & (na == 0) & ((nb + nf) % 2 == parity))
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        bare = np.flatnonzero(N[idx] == 0)[0]
        k = int(np.argmax(np.abs(v[bare, :]) ** 2))
        psi = np.zeros(basis.dim, dtype=complex)
        psi[idx] = v[:, k]
        states.append(psi)
    return bundle, states[0], states[1]


def full_model_coupling_oracle(p: DeviceParams, charge_range=(-2, 2), n_max: int = 3) -> float:
    """Longitudinal coupling extracted from the full single-qubit model.

    The dressed logical states are found by exact diagonalization with the
    resonator coupling switched off. The first-order matrix element
    ``<psi_s, 1| H_int |psi_s, 0>`` of the interaction operator, divided by
    ``<1| i(a^dag - a) |0>``, gives the diagonal coupling ``c_s`` of each
    logical state; the returned value is ``(c_1 - c_0)/2``, the coefficient of
    ``i(sigma_z + 1)(a^dag - a)``. The common ``N``-proportional part cancels
    in the difference.
    """
    d = delta_n(0, p)
    _require_gap(d)
    if abs(p.lambda_0 - p.lambda_C) > abs(d) / 100:
        raise ValueError("coupling differential too large for a first-order extraction")
    if n_max < 3:
        raise ValueError("boson cutoff must be at least 3")
    bundle, psi0, psi1 = dressed_logical_states(p, charge_range, n_max)
    obs = bundle.observables
    a = obs["a"]
    H_int = (p.lambda_C * obs["N"] + p.lambda_0 * obs["n_b"]) @ (1j * (a.dag() - a))
    quad_10 = 1j  # <1| i(a^dag - a) |0>
    c = []
    for psi in (psi0, psi1):
        up = a.dag() @ psi
        c.append((np.vdot(up, H_int @ psi) / quad_10).real)
    return 0.5 * (c[1] - c[0])
