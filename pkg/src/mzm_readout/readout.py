"""Readout dynamics and statistics.

Analytic pointer-state displacement and homodyne fidelity for the ideal
longitudinal interaction, a fixed-step Lindblad integrator for the
assembled models, and Monte Carlo sampling of the integrated signal.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.special import erfc, log_ndtr

from .algebra import BosonSector, ChargeSector, FockBasis
from .models import ModelBundle, QubitDrive, TwoQubitParams, build_two_qubit

STEPS_PER_PERIOD = 20
TRACE_TOL = 1e-6
EDGE_TOL = 1e-8
MC_CHUNK = 1 << 20


class StepSizeError(ValueError):
    pass


class TruncationError(RuntimeError):
    """Population reached the edge of a truncated sector."""


class NumericAbort(RuntimeError):
    pass


class UnreachableTargetError(ValueError):
    pass


# ---------------------------------------------------------------- analytic


@dataclass(frozen=True)
class Displacement:
    alpha: complex | np.ndarray
    linear: bool = False
    """True when ``kappa = 0`` and the linear-growth branch was used."""


def cavity_displacement(g_tilde: float, kappa: float, t, s: int = 1) -> Displacement:
    """``<a>(t)`` for ``(i/2) g sz (a^dag - a)`` with decay ``kappa``, starting in vacuum."""
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if kappa == 0:
        alpha = s * g_tilde * t / 2
        return Displacement(alpha.astype(complex)[()], True)
    alpha = s * (g_tilde / kappa) * -np.expm1(-kappa * t / 2)
    return Displacement(alpha.astype(complex)[()], False)


def signal_stats(g_tilde: float, kappa: float, tau: float) -> tuple[float, float]:
    """Mean separation ``mu`` and standard deviation ``sigma`` of the integrated homodyne signal."""
    if kappa <= 0 or tau <= 0:
        raise ValueError("kappa and tau must be positive")
    x = kappa * tau
    mu = 2 * abs(g_tilde) * tau * (1 + (2 / x) * math.expm1(-x / 2))
    return mu, math.sqrt(x)


def infidelity_from_snr(mu: float, sigma: float) -> float:
    return 0.5 * float(erfc(mu / (math.sqrt(2) * sigma)))


def assignment_infidelity(g_tilde: float, kappa: float, tau: float) -> float:
    mu, sigma = signal_stats(g_tilde, kappa, tau)
    return infidelity_from_snr(mu, sigma)


def assignment_fidelity(g_tilde: float, kappa: float, tau: float) -> float:
    """``1 - erfc(mu/(sqrt(2) sigma))/2``; use ``assignment_infidelity`` for small errors."""
    return 1.0 - assignment_infidelity(g_tilde, kappa, tau)


@dataclass(frozen=True)
class ReadoutStats:
    g_tilde: float
    kappa: float
    tau: float
    mu: float
    sigma: float
    F: float

    @classmethod
    def compute(cls, g_tilde: float, kappa: float, tau: float) -> "ReadoutStats":
        mu, sigma = signal_stats(g_tilde, kappa, tau)
        return cls(g_tilde, kappa, tau, mu, sigma, 1.0 - infidelity_from_snr(mu, sigma))


def time_to_infidelity(g_tilde: float, kappa: float, eps_target: float, tau_max: float | None = None) -> float:
    """Shortest integration time reaching ``1 - F <= eps_target``.

    The infidelity decreases monotonically with ``tau``, so the root of
    ``log(1 - F) = log(eps)`` is bracketed by doubling and refined with Brent's
    method to a relative tolerance far below ``1e-6``.
    """
    if not 0 < eps_target < 0.5:
        raise ValueError("eps_target must lie in (0, 1/2)")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    tau_max = 1e4 / kappa if tau_max is None else tau_max
    target = math.log(eps_target)

    def h(tau):
        mu, sigma = signal_stats(g_tilde, kappa, tau)
        return float(log_ndtr(-mu / sigma)) - target

    lo, hi = 1e-9 / kappa, 1.0 / kappa
    while h(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > tau_max:
            if h(tau_max) > 0:
                raise UnreachableTargetError(f"infidelity {eps_target} not reached within tau_max = {tau_max}")
            hi = tau_max
            break
    return brentq(h, lo, hi, xtol=1e-300, rtol=1e-12, maxiter=500)


# ---------------------------------------------------------------- Monte Carlo


def _chunks(n: int) -> list[int]:
    full, rest = divmod(n, MC_CHUNK)
    return [MC_CHUNK] * full + ([rest] if rest else [])


def _rng(seed: int, task: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, task])))


def _run_chunks(fn: Callable[[int, int], int], n: int, threads: int) -> int:
    sizes = _chunks(n)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return sum(ex.map(fn, range(len(sizes)), sizes))
    return sum(fn(k, m) for k, m in enumerate(sizes))


def _binomial(correct: int, n: int) -> tuple[float, float]:
    p = correct / n
    return p, math.sqrt(p * (1 - p) / n)


def sample_homodyne(mu: float, sigma: float, s: int, n: int, seed: int, threads: int = 1) -> tuple[float, float]:
    """Empirical assignment fidelity and its binomial standard error.

    Draws ``n`` integrated signals ``s mu + sigma eta`` and assigns the sign.
    Each chunk of ``MC_CHUNK`` shots has its own stream seeded by
    ``(seed, chunk index)``, so results do not depend on ``threads``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")

    def chunk(k, m):
        eta = _rng(seed, k).standard_normal(m)
        x = s * mu + sigma * eta
        return int(np.count_nonzero(s * x > 0))

    return _binomial(_run_chunks(chunk, n, threads), n)


def parameter_noise_fidelity(
    base: ReadoutStats, level: float, n: int, seed: int, s: int = 1, threads: int = 1
) -> tuple[float, float]:
    """Empirical fidelity when ``g_tilde`` fluctuates shot to shot by a relative Gaussian ``level``.

    The noise is classical and QND-preserving: it only rescales the mean
    signal, ``mu -> mu (1 + level xi)``. With ``level = 0`` the result is
    identical to ``sample_homodyne`` with the same seed.
    """
    if level < 0:
        raise ValueError("fluctuation level must be nonnegative")
    if n < 1:
        raise ValueError("n must be at least 1")
    mu, sigma = base.mu, base.sigma

    def chunk(k, m):
        rng = _rng(seed, k)
        eta = rng.standard_normal(m)
        scale = 1.0 + level * rng.standard_normal(m) if level > 0 else 1.0
        x = s * (mu * scale) + sigma * eta
        return int(np.count_nonzero(s * x > 0))

    return _binomial(_run_chunks(chunk, n, threads), n)


# ---------------------------------------------------------------- Lindblad


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    a: np.ndarray
    n_photon: np.ndarray
    sigma_z: np.ndarray | None
    purity: np.ndarray
    edge_occupancy: np.ndarray
    trace_error: np.ndarray
    final_rho: np.ndarray
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)
    dt: float = 0.0
    frame: str = "lab"
    states: np.ndarray | None = None
    """Lab-frame density matrices on the grid, when requested."""


def _edge_states(basis: FockBasis) -> np.ndarray:
    mask = np.zeros(basis.dim, dtype=bool)
    for k, s in enumerate(basis.sectors):
        v = basis.sector_values(k)
        if isinstance(s, BosonSector):
            mask |= v == s.n_max
        elif isinstance(s, ChargeSector):
            mask |= (v == s.lo) | (v == s.hi)
    return np.flatnonzero(mask)


def _as_density(state, dim: int) -> np.ndarray:
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 1:
        if rho.shape != (dim,):
            raise ValueError("state vector has wrong dimension")
        rho = np.outer(rho, rho.conj()) / np.vdot(rho, rho).real
    if rho.shape != (dim, dim):
        raise ValueError("density matrix has wrong shape")
    if np.abs(rho - rho.conj().T).max() > 1e-12:
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-10:
        raise ValueError("density matrix must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix must be positive semidefinite")
    return rho.copy()


def _one_norm(m: sparse.csr_matrix) -> float:
    return float(abs(m).sum(axis=0).max()) if m.nnz else 0.0


class _Generator:
    """Builds ``H(t)`` on a fixed sparsity pattern, optionally in the interaction frame of ``diag(H_static)``."""

    def __init__(self, model: ModelBundle, frame: str, times: np.ndarray):
        H0 = model.H_static.matrix
        self.energies = None
        if frame == "rotating":
            self.energies = H0.diagonal().real
            H0 = (H0 - sparse.diags(H0.diagonal())).tocsr()
        terms: list[tuple[sparse.csr_matrix, Callable | None]] = [(H0, None)]
        terms += [(op.matrix, env) for op, env in model.drives]
        dim = model.basis.dim
        pattern = sparse.csr_matrix((dim, dim), dtype=complex)
        for m, _ in terms:
            pattern = pattern + abs(m)
        pattern = pattern.tocsr()
        pattern.sort_indices()
        self.indices = pattern.indices.copy()
        self.indptr = pattern.indptr.copy()
        rows = np.repeat(np.arange(dim), np.diff(self.indptr))
        self.shape = (dim, dim)
        self.static = np.zeros(len(self.indices), dtype=complex)
        self.drive_data = []
        self.envs = []
        for m, env in terms:
            d = np.asarray(m[rows, self.indices]).ravel() if len(self.indices) else np.zeros(0, complex)
            if env is None:
                self.static += d
            else:
                self.drive_data.append(d)
                self.envs.append(env)
        self.freqs = None
        if self.energies is not None:
            self.freqs = self.energies[rows] - self.energies[self.indices]

        # largest frequency present in H(t): norm bound plus frame and modulation frequencies
        env_max = []
        for env in self.envs:
            if isinstance(env, QubitDrive):
                env_max.append(abs(env.g_bar) + abs(env.g_tilde))
            else:
                env_max.append(max(abs(env(t)) for t in times))
        norm = _one_norm(sparse.csr_matrix((np.abs(self.static), self.indices, self.indptr), shape=self.shape))
        for d, e in zip(self.drive_data, env_max):
            norm += e * _one_norm(sparse.csr_matrix((np.abs(d), self.indices, self.indptr), shape=self.shape))
        mod = max((env.omega_m for env in self.envs if isinstance(env, QubitDrive)), default=0.0)
        spread = 0.0
        if self.freqs is not None and len(self.freqs):
            spread = float(np.abs(self.freqs).max(initial=0.0))
        self.omega_max = norm + spread + mod

    def __call__(self, t: float) -> sparse.csr_matrix:
        data = self.static.copy()
        for d, env in zip(self.drive_data, self.envs):
            data += env(t) * d
        if self.freqs is not None:
            data = data * np.exp(1j * self.freqs * t)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def _collapse_frequency(L: sparse.csr_matrix, energies: np.ndarray) -> float | None:
    """Single frequency ``nu`` with ``e^{iH0 t} L e^{-iH0 t} = e^{i nu t} L``, or None."""
    coo = L.tocoo()
    if coo.nnz == 0:
        return 0.0
    f = energies[coo.row] - energies[coo.col]
    if np.ptp(f) > 1e-12 * max(1.0, np.abs(f).max()):
        return None
    return float(f[0])


def lindblad_evolve(
    model: ModelBundle,
    kappa: float,
    rho0,
    times: Sequence[float],
    dt: float | None = None,
    frame: str = "auto",
    collapse: str = "a",
    record: Sequence[str] = (),
    edge_tol: float = EDGE_TOL,
    trace_tol: float = TRACE_TOL,
    store_states: bool = False,
) -> TrajectoryRecord:
    """Integrate ``d rho/dt = -i[H(t), rho] + kappa D[a] rho`` with fixed-step RK4.

    ``frame="rotating"`` integrates in the interaction picture of the
    diagonal part of ``H_static``; ``"auto"`` picks it whenever the collapse
    operator only acquires a phase in that frame, which leaves the
    dissipator unchanged. Recorded quantities are
    always lab-frame values. The step is at most ``(2 pi/omega_max)/20``
    with ``omega_max`` a norm bound on the frequencies of ``H(t)`` in the
    chosen frame; an explicit larger ``dt`` raises ``StepSizeError``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    basis = model.basis
    dim = basis.dim
    rho = _as_density(rho0, dim)
    obs = model.observables
    if collapse not in obs:
        raise ValueError(f"model has no {collapse!r} operator")
    L = obs[collapse].matrix

    H0 = model.H_static.matrix
    if frame in ("auto", "rotating"):
        nu = _collapse_frequency(L, H0.diagonal().real)
        if nu is None:
            if frame == "rotating":
                raise ValueError("rotating frame needs a collapse operator with a single frame frequency")
            frame = "lab"
        else:
            frame = "rotating"
    elif frame != "lab":
        raise ValueError(f"unknown frame {frame!r}")

    gen = _Generator(model, frame, times)
    dt_max = 2 * math.pi / (STEPS_PER_PERIOD * gen.omega_max) if gen.omega_max > 0 else np.inf
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1 + 1e-12):
        raise StepSizeError(f"time step {dt:g} exceeds the stability bound {dt_max:g}")

    # in the rotating frame D[L] is unchanged because L only picks up a phase
    Ld = L.conj().T.tocsr()
    LdL = (Ld @ L).tocsr()

    def rhs(t, r):
        X = gen(t) @ r
        out = -1j * (X - X.conj().T)
        if kappa:
            Y = L @ r
            Z = LdL @ r
            out += kappa * ((L @ Y.conj().T) - 0.5 * (Z + Z.conj().T))
        return out

    energies = H0.diagonal().real if frame == "rotating" else None

    def lab(r, t):
        if energies is None:
            return r
        ph = np.exp(-1j * energies * t)
        return r * ph[:, None] * ph.conj()[None, :]

    edges = _edge_states(basis)
    sz_name = "sigma_z_logical" if "sigma_z_logical" in obs else ("sigma_z" if "sigma_z" in obs else None)
    n_op = (Ld @ L).tocsr()
    rec_ops = {name: obs[name] for name in record}
    out = {k: [] for k in ("a", "n", "sz", "purity", "edge", "trace")}
    extra = {name: [] for name in record}
    states = []

    def snapshot(r, t):
        rl = lab(r, t)
        if store_states:
            states.append(rl)
        tr = np.trace(rl).real
        edge = float(np.real(np.diag(rl))[edges].sum()) if len(edges) else 0.0
        out["trace"].append(abs(tr - 1))
        out["edge"].append(edge)
        if abs(tr - 1) > trace_tol:
            raise NumericAbort(f"trace error {abs(tr - 1):.3e} at t = {t:g}")
        if edge > edge_tol:
            raise TruncationError(f"truncation-edge occupancy {edge:.3e} at t = {t:g}; raise the cutoff")
        out["a"].append(np.sum(L.multiply(rl.T)))
        out["n"].append(np.sum(n_op.multiply(rl.T)).real)
        if sz_name:
            out["sz"].append(obs[sz_name].expect(rl).real)
        out["purity"].append(np.vdot(rl, rl).real)
        for name, op in rec_ops.items():
            extra[name].append(op.expect(rl))

    t = times[0]
    snapshot(rho, t)
    for t_next in times[1:]:
        n_sub = max(1, math.ceil((t_next - t) / dt - 1e-9))
        h = (t_next - t) / n_sub
        for k in range(n_sub):
            tk = t + k * h
            k1 = rhs(tk, rho)
            k2 = rhs(tk + h / 2, rho + (h / 2) * k1)
            k3 = rhs(tk + h / 2, rho + (h / 2) * k2)
            k4 = rhs(tk + h, rho + h * k3)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            # the right-hand side assumes a Hermitian argument
            rho = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(rho)):
            raise NumericAbort(f"non-finite density matrix at t = {t_next:g}")
        t = t_next
        snapshot(rho, t)

    return TrajectoryRecord(
        times=times,
        a=np.array(out["a"]),
        n_photon=np.array(out["n"]),
        sigma_z=np.array(out["sz"]) if sz_name else None,
        purity=np.array(out["purity"]),
        edge_occupancy=np.array(out["edge"]),
        trace_error=np.array(out["trace"]),
        final_rho=lab(rho, t),
        extra={k: np.array(v) for k, v in extra.items()},
        dt=float(dt),
        frame=frame,
        states=np.array(states) if store_states else None,
    )


def demodulate(times, a, omega: float, kappa: float, t_min: float = 0.0) -> complex:
    """Steady-state amplitude of the ``e^{-i omega t}`` component of a lab-frame field trace.

    Fits ``c0 + c1 e^{-i w t} + (c2 + c3 e^{-i w t}) e^{-kappa t / 2}`` by least
    squares over samples with ``t >= t_min`` and returns ``c1``. The constant
    term absorbs a static displacement; the decaying terms absorb the transient.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(a, dtype=complex)
    sel = t >= t_min
    t, a = t[sel], a[sel]
    rot = np.exp(-1j * omega * t)
    dec = np.exp(-0.5 * kappa * t)
    M = np.column_stack([np.ones_like(rot), rot, dec, rot * dec])
    if len(t) < M.shape[1] or np.linalg.matrix_rank(M) < M.shape[1]:
        raise ValueError("too few independent samples to demodulate")
    coef, *_ = np.linalg.lstsq(M, a, rcond=None)
    return complex(coef[1])


def coherent_state(n_max: int, alpha: complex) -> np.ndarray:
    n = np.arange(n_max + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * log_fact) * np.power(complex(alpha), n)
    return amp


def product_state(basis: FockBasis, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of per-sector state vectors, in basis order."""
    if len(factors) != len(basis.sectors):
        raise ValueError("one factor per sector required")
    psi = np.ones(1, dtype=complex)
    for f, s in zip(factors, basis.sectors):
        f = np.asarray(f, dtype=complex)
        if f.shape != (s.dim,):
            raise ValueError(f"factor for sector {s.name!r} has wrong length")
        psi = np.kron(psi, f)
    return psi


def reduced_density(rho: np.ndarray, basis: FockBasis, keep: Sequence[str | int]) -> np.ndarray:
    keep_idx = sorted(basis.sector_index(k) for k in keep)
    dims = basis.dims
    r = rho.reshape(dims + dims)
    nsec = len(dims)
    traced = [k for k in range(nsec) if k not in keep_idx]
    # trace out the highest axes first so remaining indices stay valid
    for k in sorted(traced, reverse=True):
        cur = r.ndim // 2
        r = np.trace(r, axis1=k, axis2=k + cur)
    d = int(np.prod([dims[k] for k in keep_idx]))
    return r.reshape(d, d)


def purity(rho: np.ndarray) -> float:
    return float(np.vdot(rho, rho).real)


# ---------------------------------------------------------------- two-qubit gate


def _zz_indices(basis: FockBasis):
    # occupancy 1 <-> Z = +1
    return basis.index((1, 1, 0)), basis.index((1, 0, 0)), basis.index((0, 1, 0)), basis.index((0, 0, 0))


def zz_phase(rho: np.ndarray, basis: FockBasis) -> float:
    """Conditional phase ``phi`` of ``exp(-i phi Z1 Z2)`` from the vacuum-photon coherences.

    The coherent pointer states have real positive vacuum overlap, so the
    phase of ``rho[(z, 0), (z', 0)]`` is the accumulated phase difference
    of the two qubit sectors. Single-qubit phases cancel in the combination.
    A single state only fixes ``phi`` modulo ``pi/2``; see ``zz_phase_series``.
    """
    pp, pm, mp, mm = _zz_indices(basis)
    return float(np.angle(rho[mp, mm] * np.conj(rho[pp, pm])) / 4)


def zz_phase_series(states: np.ndarray, basis: FockBasis) -> np.ndarray:
    """``zz_phase`` along a trajectory, unwrapped in time (grid must resolve ``4 phi``)."""
    pp, pm, mp, mm = _zz_indices(basis)
    z = states[:, mp, mm] * np.conj(states[:, pp, pm])
    return np.unwrap(np.angle(z)) / 4


@dataclass(frozen=True, eq=False)
class GateSimResult:
    t_final: float
    zz_phase: float
    J_numeric: float
    """Coefficient of ``Z1 Z2`` in the effective Hamiltonian, ``zz_phase / t_final``."""
    qubit_purity: float
    trajectory: TrajectoryRecord


def simulate_two_qubit_gate(
    p: TwoQubitParams,
    t_final: float,
    n_max: int = 8,
    n_points: int = 65,
    dt: float | None = None,
) -> GateSimResult:
    """Evolve ``|+>|+>|vac>`` under the modulated two-qubit model and extract the ZZ phase."""
    if n_points < 2:
        raise ValueError("need at least two grid points")
    bundle = build_two_qubit(p, n_max)
    plus = np.array([1, 1]) / math.sqrt(2)
    psi0 = product_state(bundle.basis, [plus, plus, np.eye(n_max + 1)[0]])
    times = np.linspace(0.0, t_final, n_points)
    traj = lindblad_evolve(bundle, p.kappa, psi0, times, dt=dt, store_states=True)
    phi = float(zz_phase_series(traj.states, bundle.basis)[-1])
    rq = reduced_density(traj.final_rho, bundle.basis, ["q1", "q2"])
    return GateSimResult(t_final, phi, phi / t_final, purity(rq), traj)
