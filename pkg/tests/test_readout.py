import math

import numpy as np
import pytest

from mzm_readout.effective import zz_rate
from mzm_readout.models import (
    QubitDrive,
    TwoQubitParams,
    build_effective_readout,
    build_ideal_readout,
    default_boson_cutoff,
)
from mzm_readout.readout import (
    ReadoutStats,
    StepSizeError,
    TruncationError,
    UnreachableTargetError,
    assignment_fidelity,
    assignment_infidelity,
    cavity_displacement,
    coherent_state,
    demodulate,
    infidelity_from_snr,
    lindblad_evolve,
    parameter_noise_fidelity,
    product_state,
    purity,
    reduced_density,
    sample_homodyne,
    signal_stats,
    simulate_two_qubit_gate,
    time_to_infidelity,
)

TWO_PI_MHZ = 2 * math.pi  # rad/us


def _vacuum_state(bundle, occ, n_max):
    return product_state(bundle.basis, [np.asarray(occ, float), np.eye(n_max + 1)[0]])


def test_cavity_displacement_examples():
    g, k = 0.7, 1.3
    assert cavity_displacement(g, k, 0.0).alpha == 0
    assert cavity_displacement(g, k, 1e4, s=-1).alpha == pytest.approx(-g / k, rel=1e-15)
    assert cavity_displacement(g, k, 2 * math.log(2) / k).alpha == pytest.approx(0.5 * g / k, rel=1e-14)
    lin = cavity_displacement(g, 0.0, 3.0)
    assert lin.linear and lin.alpha == pytest.approx(g * 1.5)
    with pytest.raises(ValueError):
        cavity_displacement(g, k, -1.0)
    with pytest.raises(ValueError):
        cavity_displacement(g, k, 1.0, s=0)


def test_signal_stats_examples():
    kappa, g, tau = TWO_PI_MHZ, 5 * TWO_PI_MHZ, 0.3
    mu, sigma = signal_stats(g, kappa, tau)
    assert mu == pytest.approx(6.64, abs=5e-3)
    assert sigma == pytest.approx(1.373, abs=5e-4)
    assert sigma == pytest.approx(math.sqrt(kappa * tau), rel=1e-15)
    assert signal_stats(0.0, kappa, tau)[0] == 0.0
    mu, _ = signal_stats(g, kappa, 1e6)
    assert mu / 1e6 == pytest.approx(2 * g, rel=1e-6)


def test_fidelity_examples():
    kappa, g = TWO_PI_MHZ, 5 * TWO_PI_MHZ
    eps = assignment_infidelity(g, kappa, 0.3)
    assert eps == pytest.approx(6.545e-7, rel=1e-3)
    assert assignment_fidelity(0.0, kappa, 0.3) == 0.5
    taus = np.linspace(0.01, 2.0, 200)
    F = [assignment_fidelity(g, kappa, t) for t in taus]
    assert np.all(np.diff(F) >= 0)
    eps_t = [assignment_infidelity(g, kappa, t) for t in taus]
    assert np.all(np.diff(eps_t) < 0)
    # large argument stays nonzero
    assert 0 < infidelity_from_snr(8 * math.sqrt(2), 1.0) < 1e-28
    s = ReadoutStats.compute(g, kappa, 0.3)
    assert s.F == pytest.approx(1 - eps, abs=1e-16)


def test_time_to_infidelity():
    kt = time_to_infidelity(5.0, 1.0, 1e-6)
    assert kt == pytest.approx(1.8580814710836, rel=1e-9)
    assert kt == pytest.approx(1.9, abs=0.05)
    assert assignment_infidelity(5.0, 1.0, kt) == pytest.approx(1e-6, rel=1e-9)
    t = time_to_infidelity(5.0, 1.0, 0.4)
    assert t > 0
    assert assignment_fidelity(5.0, 1.0, t) == pytest.approx(0.6, rel=1e-10)
    taus = [time_to_infidelity(r, 1.0, 1e-3) for r in (0.5, 1, 2, 5, 10)]
    assert np.all(np.diff(taus) < 0)
    with pytest.raises(UnreachableTargetError):
        time_to_infidelity(1e-4, 1.0, 1e-12)
    with pytest.raises(ValueError):
        time_to_infidelity(1.0, 1.0, 0.5)


def test_free_cavity_decay():
    n_max = 20
    bundle = build_ideal_readout(0.0, n_max)
    alpha0 = 1.2 + 0.5j
    psi = np.kron(np.array([1.0, 0.0]), coherent_state(n_max, alpha0))
    times = np.linspace(0, 4, 9)
    tr = lindblad_evolve(bundle, 0.8, psi, times, dt=0.005, edge_tol=1e-6)
    assert np.allclose(tr.a, alpha0 * np.exp(-0.4 * times), rtol=1e-7, atol=0)


def test_ideal_model_matches_analytic_displacement():
    g, kappa = 1.5, 1.0
    n_max = default_boson_cutoff(g / kappa)
    bundle = build_ideal_readout(g, n_max)
    times = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    for s, occ in ((1, [0, 1]), (-1, [1, 0])):
        tr = lindblad_evolve(bundle, kappa, _vacuum_state(bundle, occ, n_max), times)
        ref = cavity_displacement(g, kappa, times[1:], s).alpha
        assert np.abs(tr.a[1:] / ref - 1).max() <= 1e-6
        assert np.ptp(tr.sigma_z) <= 1e-8
        rq = reduced_density(tr.final_rho, bundle.basis, ["f"])
        assert purity(rq) == pytest.approx(1.0, abs=1e-6)
        assert np.all(tr.purity <= 1 + 1e-6)


def test_resonant_longitudinal_model_separation():
    # smaller omega_r/kappa than the acceptance run keeps this quick
    g, kappa, w = 1.0, 1.0, 50.0
    n_max = default_boson_cutoff(2 * g / kappa)
    bundle = build_effective_readout(0.7, w, QubitDrive(0.0, g, w), n_max)
    times = np.linspace(0, 16, 65)
    a = {}
    for s, occ in ((1, [0, 1]), (-1, [1, 0])):
        tr = lindblad_evolve(bundle, kappa, _vacuum_state(bundle, occ, n_max), times)
        assert np.ptp(tr.sigma_z) <= 1e-8
        a[s] = tr.a
    sep = abs(a[1][-1] - a[-1][-1])
    assert sep == pytest.approx(2 * g / kappa, rel=0.05)
    # lower state stays near vacuum
    assert abs(a[-1][-1]) < 0.05


def test_demodulate_recovers_rotating_amplitude():
    t = np.linspace(0, 40, 300)
    w, k = 3.0, 0.5
    c0, c1 = 0.2 - 0.1j, 0.7 + 0.3j
    a = c0 + c1 * np.exp(-1j * w * t) + 0.4 * np.exp(-1j * w * t - k * t / 2)
    assert demodulate(t, a, w, k, t_min=5) == pytest.approx(c1, abs=1e-12)
    with pytest.raises(ValueError):
        demodulate(t[:3], a[:3], w, k)


def test_step_size_and_truncation_errors():
    bundle = build_ideal_readout(1.0, 10)
    psi = _vacuum_state(bundle, [0, 1], 10)
    with pytest.raises(StepSizeError):
        lindblad_evolve(bundle, 1.0, psi, [0.0, 1.0], dt=10.0)
    small = build_ideal_readout(6.0, 3)
    with pytest.raises(TruncationError):
        lindblad_evolve(small, 1.0, _vacuum_state(small, [0, 1], 3), np.linspace(0, 5, 11))
    with pytest.raises(ValueError):
        lindblad_evolve(bundle, 1.0, psi, [1.0, 0.0])


def test_homodyne_grid_consistency():
    worst = 0.0
    for i, r in enumerate((1, 2, 5, 10)):
        for j, kt in enumerate((1.0, 2.0)):
            mu, sigma = signal_stats(r, 1.0, kt)
            F, se = sample_homodyne(mu, sigma, 1, 10**6, seed=100 + 10 * i + j)
            F_ref = 1 - infidelity_from_snr(mu, sigma)
            if se == 0:
                assert F == 1.0 and 1 - F_ref < 1e-6
                continue
            worst = max(worst, abs(F - F_ref) / se)
    assert worst <= 5


def test_homodyne_determinism_and_threads():
    a = sample_homodyne(1.0, 1.0, -1, 3 * 2**20 + 17, seed=42)
    b = sample_homodyne(1.0, 1.0, -1, 3 * 2**20 + 17, seed=42)
    c = sample_homodyne(1.0, 1.0, -1, 3 * 2**20 + 17, seed=42, threads=4)
    assert a == b == c
    assert sample_homodyne(1.0, 1.0, -1, 10**5, seed=43) != sample_homodyne(1.0, 1.0, -1, 10**5, seed=44)
    F, se = sample_homodyne(0.0, 1.0, 1, 10**6, seed=1)
    assert abs(F - 0.5) <= 5 * se


def test_homodyne_at_300ns_point():
    mu, sigma = signal_stats(5 * TWO_PI_MHZ, TWO_PI_MHZ, 0.3)
    F, se = sample_homodyne(mu, sigma, 1, 10**8, seed=7, threads=4)
    assert abs((1 - F) - infidelity_from_snr(mu, sigma)) <= 5 * se


def test_parameter_noise():
    base = ReadoutStats.compute(5.0, 1.0, 1.0)
    mu, sigma = base.mu, base.sigma
    assert parameter_noise_fidelity(base, 0.0, 10**5, seed=9) == sample_homodyne(mu, sigma, 1, 10**5, seed=9)
    # mu/sigma = 3.4
    scale = 3.4 * sigma / mu
    noisy_base = ReadoutStats.compute(5.0 * scale, 1.0, 1.0)
    clean = noisy_base.F
    F, se = parameter_noise_fidelity(noisy_base, 0.1, 10**7, seed=5, threads=4)
    assert clean - F > 5 * se
    F, _ = parameter_noise_fidelity(ReadoutStats.compute(0.0, 1.0, 1.0), 2.0, 10**5, seed=5)
    assert F >= 0.5 - 5 * math.sqrt(0.25 / 10**5)


def _gate_params(dw, g1=0.005, g2=0.005):
    return TwoQubitParams(0.3, 0.4, 1.0, QubitDrive(0.0, g1, 1.0 + dw), QubitDrive(0.0, g2, 1.0 + dw))


def test_two_qubit_zz_rate_scaling():
    # near resonance, g/(w_m - w_r) = 0.05 at the smaller detuning
    g, t = 1e-3, 8000.0
    r1 = simulate_two_qubit_gate(_gate_params(0.02, g, g), t, n_max=5, n_points=33)
    r2 = simulate_two_qubit_gate(_gate_params(0.04, g, g), t, n_max=5, n_points=33)
    assert r1.J_numeric == pytest.approx(zz_rate(g, g, 1.02, 1.0), rel=0.02)
    assert r2.J_numeric == pytest.approx(zz_rate(g, g, 1.04, 1.0), rel=0.02)
    assert r1.J_numeric / r2.J_numeric == pytest.approx(2.0, rel=0.05)


def test_two_qubit_no_coupling_no_phase():
    r = simulate_two_qubit_gate(_gate_params(0.1, g1=0.0), 200.0, n_max=4, n_points=17)
    assert abs(r.zz_phase) < 1e-9
