"""Numerical Schrieffer-Wolff block diagonalization and Majorana-string projection.

``H = H0 + V`` with ``H0`` diagonal. The generator ``S = S1 + S2 + ...`` is
built order by order so that ``e^S H e^-S`` has no matrix elements between
the low-energy block and its complement. Because ``H0`` is diagonal, each
generator is obtained by entrywise division by energy differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .algebra import OperatorMatrix
from .models import FourMzmParams, build_four_mzm, ground_sector_indices

MAX_ORDER = 6


class SwError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SwProblem:
    H0: OperatorMatrix
    V: OperatorMatrix
    P_low: OperatorMatrix
    order: int = 2


@dataclass(frozen=True, eq=False)
class SwResult:
    low_indices: np.ndarray
    per_order: tuple[np.ndarray, ...]
    """Effective matrices on the low block, index k holds order k (index 0 is ``P H0 P``)."""
    H_eff: np.ndarray
    antihermitian_residual: float


def _low_indices(problem: SwProblem) -> np.ndarray:
    P = problem.P_low.matrix.toarray()
    d = np.real(np.diag(P))
    if np.abs(P - np.diag(np.diag(P))).max(initial=0.0) > 0 or not np.all(np.isin(d, (0.0, 1.0))):
        raise SwError("P_low must be a diagonal 0/1 projector in the working basis")
    return np.flatnonzero(d == 1.0)


def sw_effective(problem: SwProblem) -> SwResult:
    order = problem.order
    if order < 1:
        raise SwError("order must be at least 1")
    if order > MAX_ORDER:
        raise SwError(f"order {order} unsupported (max {MAX_ORDER})")
    H0 = problem.H0.toarray()
    if np.abs(H0 - np.diag(np.diag(H0))).max(initial=0.0) > 0:
        raise SwError("H0 must be diagonal in the working basis")
    V = problem.V.toarray()
    low = _low_indices(problem)
    dim = H0.shape[0]
    in_low = np.zeros(dim, dtype=bool)
    in_low[low] = True
    offblock = in_low[:, None] != in_low[None, :]

    E = np.real(np.diag(H0))
    gaps = np.abs(E[in_low][:, None] - E[~in_low][None, :])
    if gaps.size and gaps.min() == 0.0:
        raise SwError("degenerate SW: low block and complement share an energy")
    denom = np.where(offblock, E[:, None] - E[None, :], 1.0)

    zero = np.zeros_like(V)
    S = [zero]
    # terms[n][m]: order-m part of ad_S^n(H)/n!
    terms: list[list[np.ndarray]] = [[H0, V] + [zero] * (order - 1)]
    per_order = [H0[np.ix_(low, low)]]

    def comm(a, b):
        return a @ b - b @ a

    for k in range(1, order + 1):
        # order-k part of the transformed Hamiltonian, S_k excluded
        R = terms[0][k].copy()
        for n in range(1, k + 1):
            acc = zero.copy()
            for j in range(1, k - n + 2):
                if n == 1 and j == k:
                    continue
                acc += comm(S[j], terms[n - 1][k - j])
            R += acc / n
        Sk = np.where(offblock, R / denom, 0.0)
        S.append(Sk)
        for n in range(1, k + 1):
            if len(terms) <= n:
                terms.append([zero] * (order + 1))
            acc = zero.copy()
            for j in range(1, k - n + 2):
                acc += comm(S[j], terms[n - 1][k - j])
            terms[n][k] = acc / n
        Hk = sum(terms[n][k] for n in range(0, k + 1))
        per_order.append(Hk[np.ix_(low, low)])

    H_eff = sum(per_order)
    resid = float(np.abs(H_eff - H_eff.conj().T).max()) / 2
    H_eff = 0.5 * (H_eff + H_eff.conj().T)
    return SwResult(low, tuple(per_order), H_eff, resid)


def majorana_decompose(
    H_eff,
    generators: Mapping[str, np.ndarray | OperatorMatrix],
    indices: Sequence[int] | None = None,
    tol: float = 1e-10,
) -> dict[str, complex]:
    """Coefficients ``Tr(G^dag H)/Tr(G^dag G)`` of ``H_eff`` on orthogonal generators.

    Generators given as ``OperatorMatrix`` on a larger basis are restricted to
    ``indices`` first.
    """
    H = H_eff.toarray() if isinstance(H_eff, OperatorMatrix) else np.asarray(H_eff)
    names = list(generators)
    mats = []
    for name in names:
        G = generators[name]
        if isinstance(G, OperatorMatrix):
            G = G.restrict(indices) if indices is not None else G.toarray()
        mats.append(np.asarray(G))
    gram = np.array([[np.vdot(a, b) for b in mats] for a in mats])
    norms = np.sqrt(np.abs(np.diag(gram)))
    if np.any(norms == 0):
        raise SwError("zero generator in decomposition set")
    rel = np.abs(gram) / np.outer(norms, norms)
    np.fill_diagonal(rel, 0.0)
    if rel.max(initial=0.0) > tol:
        raise SwError(f"generators are not orthogonal; normalized Gram matrix:\n{np.array2string(rel, precision=3)}")
    return {name: complex(np.vdot(G, H) / gram[k, k]) for k, (name, G) in enumerate(zip(names, mats))}


def majorana_strings(gammas: Sequence[OperatorMatrix], names: Sequence[str] | None = None) -> dict[str, OperatorMatrix]:
    """All ordered products of the given Majoranas, made Hermitian by a factor ``i`` where needed.

    A product of ``k`` Majoranas is Hermitian up to ``(-1)^(k(k-1)/2)``; strings
    with ``k % 4 in (2, 3)`` receive a factor ``i``.
    """
    names = names or [f"g{k + 1}" for k in range(len(gammas))]
    out = {"I": OperatorMatrix.identity(gammas[0].basis)}
    for k in range(1, len(gammas) + 1):
        for combo in combinations(range(len(gammas)), k):
            op = gammas[combo[0]]
            for c in combo[1:]:
                op = op @ gammas[c]
            prefix = "i" if k % 4 in (2, 3) else ""
            if prefix:
                op = 1j * op
            out[prefix + "".join(names[c] for c in combo)] = op
    return out


def four_mzm_sw(p: FourMzmParams, order: int = 4, field_shift: float = 0.0) -> tuple[SwResult, dict[str, complex]]:
    """SW effective Hamiltonian of the boson-free four-MZM model and its Majorana-string coefficients.

    ``field_shift`` multiplies the capacitive coupling operator, i.e. it is the
    classical value substituted for ``i(a^dag - a)``.
    """
    bundle = build_four_mzm(p, field_shift=field_shift)
    obs = bundle.observables
    H0 = obs["H0"] + field_shift * obs["coupling"]
    low = ground_sector_indices(bundle)
    P = OperatorMatrix.diagonal(bundle.basis, np.isin(np.arange(bundle.basis.dim), low).astype(float))
    res = sw_effective(SwProblem(H0, obs["H_T"], P, order))
    coeffs = majorana_decompose(res.H_eff, majorana_strings([obs[f"gamma{k}"] for k in range(1, 5)]), indices=low)
    return res, coeffs


def p4_coefficient(p: FourMzmParams, order: int = 4, field_shift: float = 0.0) -> float:
    """Real coefficient of ``gamma1 gamma2 gamma3 gamma4`` in the SW effective Hamiltonian."""
    _, coeffs = four_mzm_sw(p, order, field_shift)
    return coeffs["g1g2g3g4"].real


def exact_ground_sector_heff(p: FourMzmParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact block-diagonalized Hamiltonian on the four-MZM ground sector.

    The four lowest eigenvectors of the full (boson-free) model are mapped
    onto the unperturbed ground sector by the direct rotation (polar factor
    of their overlap), which is the all-orders SW effective Hamiltonian.
    Returns ``(H_eff, low_indices)``.
    """
    bundle = build_four_mzm(p)
    low = ground_sector_indices(bundle)
    H = bundle.H_static.toarray()
    # restrict to the zero-total-charge sector, which contains the ground sector
    obs = bundle.observables
    b = bundle.basis
    q = b.sector_values("N_L") + b.sector_values("N_R") + b.sector_values("b1") + b.sector_values("b2")
    sector = np.flatnonzero(q == 0)
    w, v = np.linalg.eigh(H[np.ix_(sector, sector)])
    W = v[:, : len(low)]
    pos = np.searchsorted(sector, low)
    M = W[pos, :]
    u, _, vh = np.linalg.svd(M)
    Q = u @ vh
    return Q @ np.diag(w[: len(low)]) @ Q.conj().T, low


def exact_p4_coefficient(p: FourMzmParams) -> float:
    bundle = build_four_mzm(p)
    H_eff, low = exact_ground_sector_heff(p)
    return majorana_decompose(H_eff, {"P4": bundle.observables["P4"]}, indices=low)["P4"].real


def classical_field_b_oracle(p: FourMzmParams, x_step: float | None = None, order: int = 4) -> float:
    """Numerical ``B`` from the field derivative of the parity-string coefficient.

    With ``i(a^dag - a)`` replaced by a classical number ``x``, the
    effective Hamiltonian contains ``c(x) gamma1 gamma2 gamma3 gamma4`` with
    ``c(x) = -(A + A*) + (B + B*) x + O(x^2)``. The returned value is
    ``c'(0)/2`` from a five-point central difference, which equals ``B``
    for real tunnel amplitudes and ``Re B`` in general.
    """
    lam = np.array([p.lambda_L, p.lambda_R, p.lambda_1, p.lambda_2])
    lam_scale = np.abs(lam).max()
    if lam_scale == 0:
        return 0.0
    energies = np.array([p.E_L + p.eps1, p.E_L + p.eps2, p.E_R + p.eps1, p.E_R + p.eps2, p.E_L + p.E_R])
    if x_step is None:
        x_step = 1e-4 * energies.min() / lam_scale
    # every excited charge configuration must stay gapped under the shift
    if 2 * x_step * 2 * lam_scale >= energies.min():
        raise SwError("field step would close an energy denominator")
    c = {k: p4_coefficient(p, order, k * x_step) for k in (-2, -1, 1, 2)}
    deriv = (c[-2] - 8 * c[-1] + 8 * c[1] - c[2]) / (12 * x_step)
    return 0.5 * deriv
