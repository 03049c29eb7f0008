"""Acceptance criteria, one test each. Every test records a PASS/FAIL line in the terminal summary."""

import math

import mpmath
import numpy as np
import pytest

from mzm_readout import cli
from mzm_readout import effective as eff
from mzm_readout import readout as ro
from mzm_readout.algebra import (
    BosonSector,
    ChargeSector,
    FermionSector,
    OperatorMatrix,
    build_basis,
    fermion_annihilator,
    majorana_pair,
    parity_operator,
)
from mzm_readout.models import (
    DeviceParams,
    FourMzmParams,
    QubitDrive,
    TwoQubitParams,
    build_effective_readout,
    build_ideal_readout,
    build_single_qubit,
    default_boson_cutoff,
)
from mzm_readout.sw import classical_field_b_oracle, p4_coefficient

TWO_PI = 2 * math.pi


def _csv(path):
    lines = path.read_text().splitlines()
    return lines[1].split(","), np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


def test_criterion_01_300ns_infidelity(acceptance):
    # kappa/2pi = 1 MHz, g/2pi = 5 MHz, tau = 300 ns (units: rad/us, us)
    eps = ro.assignment_infidelity(5 * TWO_PI, TWO_PI, 0.3)
    ok = 2e-7 <= eps <= 2e-6
    acceptance(1, ok, "300 ns gives infidelity near 1e-6", f"1-F = {eps:.4e} (window [2e-7, 2e-6])")
    assert ok


def _tail_oracle(g, kappa, tau):
    mpmath.mp.dps = 40
    g, kappa, tau = mpmath.mpf(g), mpmath.mpf(kappa), mpmath.mpf(tau)
    x = kappa * tau
    mu = 2 * abs(g) * tau * (1 + (2 / x) * mpmath.expm1(-x / 2))
    sigma = mpmath.sqrt(x)
    pdf = lambda u: mpmath.exp(-u * u / 2) / mpmath.sqrt(2 * mpmath.pi)
    return mpmath.quad(pdf, [mu / sigma, mpmath.inf])


def test_criterion_02_fig4(tmp_path, acceptance):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"fig4": {"g_over_kappa": {"min": 0.1, "max": 10.0, "points": 20, "scale": "log"}}}')
    assert cli.main(["fig4", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_OK
    header, d = _csv(tmp_path / "fig4a_infidelity_vs_g_over_kappa.csv")
    e1 = d[:, header.index("infidelity_kappa_tau_1")]
    e2 = d[:, header.index("infidelity_kappa_tau_2")]
    monotone = bool(np.all(np.diff(e1) < 0) and np.all(np.diff(e2) < 0))
    below = bool(np.all(e2 < e1))
    worst = 0.0
    for row, r in enumerate(d[:, 0]):
        for col, kt in ((e1, 1.0), (e2, 2.0)):
            ref = _tail_oracle(r, 1.0, kt)
            worst = max(worst, float(abs(mpmath.mpf(col[row]) / ref - 1)))
    ok = monotone and below and worst <= 1e-6
    acceptance(2, ok, "fig4 curves monotone, ordered, match quadrature", f"monotone={monotone} ordered={below} max rel err={worst:.2e}")
    assert ok


def test_criterion_03_fig3(tmp_path, acceptance):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"fig3": {"t_over_delta": {"min": 0.01, "max": 2.0, "points": 200}}}')
    assert cli.main(["fig3", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_OK
    zeros = True
    for name in ("fig3c_gz_vs_phi.csv", "fig3f_omega_q_vs_phi.csv"):
        _, d = _csv(tmp_path / name)
        at_pi = np.isclose(d[:, 0], math.pi, rtol=0, atol=1e-12)
        zeros &= bool(at_pi.sum() == 1 and np.all(d[at_pi, 1:] == 0.0))
    _, d = _csv(tmp_path / "fig3e_omega_q_vs_t_over_delta.csv")
    row = int(np.argmin(np.abs(d[:, 0] - 1.0)))
    spot = abs(d[row, 1] - (math.sqrt(5) - 1) / 2) if abs(d[row, 0] - 1.0) < 1e-12 else math.inf
    slopes = []
    for name in ("fig3b_gz_vs_t_over_delta.csv", "fig3e_omega_q_vs_t_over_delta.csv"):
        _, d = _csv(tmp_path / name)
        small = d[:, 0] <= 0.1
        rel = np.abs(d[small, 1] - d[small, 2]) / np.abs(d[small, 1])
        slopes.append(float(np.polyfit(np.log(d[small, 0]), np.log(rel), 1)[0]))
    order_ok = all(abs(s - 2) <= 0.1 for s in slopes)
    ok = zeros and spot <= 1e-12 and order_ok
    acceptance(3, ok, "fig3 zeros at phi=pi, spot value, O((t/delta)^2) convergence",
               f"zeros={zeros} spot err={spot:.1e} slopes={[round(s, 3) for s in slopes]}")
    assert ok


def test_criterion_04_block_oracle(acceptance):
    check = cli.check_block_spectrum(1e-10, 100, seed=20240601)
    acceptance(4, check.passed, "charge-block eigenvalues match closed form", f"100 draws, max rel err = {check.measured:.2e}")
    assert check.passed


def test_criterion_05_g_z_adjudication(tmp_path, acceptance):
    check, winner = cli.gz_adjudication(1e-3)
    assert cli.main(["verify", "--out", str(tmp_path)]) == cli.EXIT_OK
    import json

    report = json.loads((tmp_path / "verify_report.json").read_text())
    named = report.get("canonical_g_z") == winner == "g_f(0)/2"
    ok = check.passed and named
    worst = max(r["rel_err_half"] for r in check.measured)
    acceptance(5, ok, "oracle picks exactly one coupling convention", f"winner={winner}, max rel err {worst:.1e}, report names it: {named}")
    assert ok


def test_criterion_06_four_mzm(acceptance):
    # A against the closed-form two-path coefficient at t/Delta = 0.02
    t = 0.02 * 15.0
    p = FourMzmParams(E_L=10.0, E_R=10.0, eps1=5.0, eps2=5.0, t=(t, t, t, t))
    c = eff.four_mzm_coefficients(p)
    assert c.A == pytest.approx(t**4 / 2250, rel=1e-14)
    sw_c = p4_coefficient(p)
    rel_a = abs(sw_c - c.parity_coefficient) / abs(c.parity_coefficient)
    # B against the closed form at the symmetric coupling point
    pb = FourMzmParams(E_L=10.0, E_R=10.0, eps1=5.0, eps2=5.0, t=(0.1,) * 4, lambda_1=1.0, lambda_2=1.0)
    cb = eff.four_mzm_coefficients(pb)
    b_num = classical_field_b_oracle(pb)
    rel_b = abs(b_num - cb.B.real) / abs(cb.B)
    pu = pb.replace(lambda_L=0.5, lambda_R=0.5, lambda_1=0.5, lambda_2=0.5)
    b_u = max(abs(classical_field_b_oracle(pu)), abs(eff.four_mzm_coefficients(pu).B))
    ok_a, ok_b, ok_u = rel_a <= 1e-3, rel_b <= 1e-4, b_u <= 1e-12
    ok = ok_a and ok_b and ok_u
    acceptance(6, ok, "four-MZM A and B from SW vs closed forms",
               f"A rel err {rel_a:.3g} (ratio {sw_c / c.parity_coefficient:.4f}); B rel err {rel_b:.3g} "
               f"(ratio {b_num / cb.B.real:.4f}); uniform B {b_u:.1e}")
    assert ok


def test_criterion_07_two_qubit_gate(acceptance):
    g, w_r, w_m = 0.005, 1.0, 1.1
    J, t_g = eff.two_qubit_gate(g, g, w_m, w_r)
    p = TwoQubitParams(0.3, 0.4, w_r, QubitDrive(0.0, g, w_m), QubitDrive(0.0, g, w_m))
    res = ro.simulate_two_qubit_gate(p, t_g, n_max=8, n_points=65)
    ratio = abs(res.zz_phase) / (math.pi / 4)
    ok = abs(ratio - 1) <= 0.05
    acceptance(7, ok, "ZZ phase at t_g equals pi/4", f"phase {res.zz_phase:.5f} = {ratio:.4f} x pi/4 (J formula {J:.4e}, simulated rate {res.J_numeric:.4e})")
    assert ok


def test_criterion_08_displacement_dynamics(acceptance):
    g, kappa = 1.0, 1.0
    n_max = default_boson_cutoff(g / kappa)
    ideal = build_ideal_readout(g, n_max)
    times = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    psi = ro.product_state(ideal.basis, [np.array([0.0, 1.0]), np.eye(n_max + 1)[0]])
    tr = ro.lindblad_evolve(ideal, kappa, psi, times)
    ref = ro.cavity_displacement(g, kappa, times[1:]).alpha
    err_ideal = float(np.max(np.abs(tr.a[1:] / ref - 1)))

    w_r = 200.0 * kappa
    n_max = default_boson_cutoff(2 * g / kappa)
    model = build_effective_readout(0.7, w_r, QubitDrive(0.0, g, w_r), n_max)
    t = np.linspace(0.0, 16.0 / kappa, 33)
    a, drift = {}, 0.0
    for s, occ in ((1, [0.0, 1.0]), (-1, [1.0, 0.0])):
        psi = ro.product_state(model.basis, [np.array(occ), np.eye(n_max + 1)[0]])
        tr = ro.lindblad_evolve(model, kappa, psi, t)
        a[s] = tr.a[-1]
        drift = max(drift, float(np.ptp(tr.sigma_z)))
    sep = abs(a[1] - a[-1])
    rel_sep = abs(sep / (2 * g / kappa) - 1)
    ok = err_ideal <= 1e-6 and rel_sep <= 0.05 and drift < 1e-8
    acceptance(8, ok, "Lindblad displacement: ideal model, resonant modulation, sigma_z drift",
               f"ideal rel err {err_ideal:.1e}; separation {sep:.4f} vs {2 * g / kappa:.1f}; drift {drift:.1e}")
    assert ok


def test_criterion_09_monte_carlo(tmp_path, acceptance):
    worst = 0.0
    for i, r in enumerate((1, 2, 5, 10)):
        for j, kt in enumerate((1.0, 2.0)):
            mu, sigma = ro.signal_stats(r, 1.0, kt)
            F, se = ro.sample_homodyne(mu, sigma, 1, 10**6, seed=1000 + 10 * i + j)
            ref = 1 - ro.infidelity_from_snr(mu, sigma)
            if se > 0:
                worst = max(worst, abs(F - ref) / se)
            else:
                worst = max(worst, 0.0 if 1 - ref < 1e-7 else math.inf)
    runs = []
    for k in ("a", "b"):
        assert cli.main(["fig4", "--out", str(tmp_path / k), "--samples", "100000", "--threads", "2"]) == cli.EXIT_OK
        runs.append([(tmp_path / k / n).read_bytes() for n in ("fig4a_infidelity_vs_g_over_kappa.csv", "fig4b_time_to_infidelity.csv")])
    identical = runs[0] == runs[1]
    ok = worst <= 5 and identical
    acceptance(9, ok, "Monte Carlo fidelity consistent and reproducible", f"max deviation {worst:.2f} SE; byte-identical reruns: {identical}")
    assert ok


def _jw_reference(basis, mode_idx, fermion_positions):
    """Dense annihilator from the occupation-number definition."""
    dim = basis.dim
    M = np.zeros((dim, dim))
    pos = fermion_positions.index(mode_idx)
    for col in range(dim):
        lab = list(basis.label(col))
        if lab[mode_idx] == 0:
            continue
        sign = (-1) ** sum(lab[m] for m in fermion_positions[:pos])
        lab[mode_idx] = 0
        M[basis.index(tuple(lab)), col] = sign
    return M


def test_criterion_10_algebra_properties(acceptance):
    rng = np.random.default_rng(99)
    n_bases, max_dim, failures = 0, 0, []
    # the largest single-qubit layout first, then random layouts
    fixed = [ChargeSector(-2, 2, "N"), FermionSector("b"), FermionSector("f"), BosonSector(15, "a")]
    while n_bases < 30:
        sectors = fixed if n_bases == 0 else []
        for k in range(0 if sectors else int(rng.integers(1, 6))):
            kind = rng.integers(0, 3)
            if kind == 0:
                lo = int(rng.integers(-2, 1))
                sectors.append(ChargeSector(lo, lo + int(rng.integers(0, 4)), f"s{k}"))
            elif kind == 1:
                sectors.append(FermionSector(f"s{k}"))
            else:
                sectors.append(BosonSector(int(rng.integers(1, 16)), f"s{k}"))
        modes = [k for k, s in enumerate(sectors) if isinstance(s, FermionSector)]
        if not modes:
            continue
        b = build_basis(sectors)
        if b.dim > 320:
            continue
        n_bases += 1
        max_dim = max(max_dim, b.dim)
        gammas = [g for m in modes for g in majorana_pair(b, m)]
        I = OperatorMatrix.identity(b)
        for i, gi in enumerate(gammas):
            if not gi.is_hermitian():
                failures.append("hermiticity")
            for j, gj in enumerate(gammas):
                target = 2 * I if i == j else OperatorMatrix.zeros(b)
                if (gi.anticommutator(gj) - target).max_abs() != 0:
                    failures.append("anticommutation")
        P = parity_operator(b, modes)
        for m in modes:
            f = fermion_annihilator(b, m)
            if not np.array_equal(f.toarray(), _jw_reference(b, m, modes)):
                failures.append("jordan-wigner")
            if P.anticommutator(f).max_abs() != 0:
                failures.append("parity")
    # the assembled single-qubit Hamiltonian conserves the barrier-fermion parity
    p = DeviceParams(E_C=1.0, eps0=0.8, n_g=0.1, t_L=0.3, t_R=0.5, phi_x=0.7, lambda_C=0.02, lambda_0=0.05, omega_r=2.0)
    sq = build_single_qubit(p, n_max=4)
    Pbf = parity_operator(sq.basis, ["b", "f"])
    model_comm = sq.H_static.commutator(Pbf).max_abs() / sq.H_static.max_abs()
    if model_comm > 1e-12:
        failures.append("model parity")
    ok = not failures
    acceptance(10, ok, "algebra properties on random bases", f"{n_bases} bases up to dim {max_dim}; model parity commutator {model_comm:.1e}; failures: {sorted(set(failures)) or 'none'}")
    assert ok
