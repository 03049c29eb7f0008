"""Command-line front end: figure sweeps, oracle verification and simulations.

Exit codes: 0 success, 1 check failure, 2 config error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np
import scipy

from . import effective as eff
from . import readout as ro
from . import sw
from .models import (
    DeviceParams,
    FourMzmParams,
    QubitDrive,
    TwoQubitParams,
    build_effective_readout,
    build_ideal_readout,
    build_single_qubit,
    default_boson_cutoff,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (ro.StepSizeError, ro.TruncationError, ro.NumericAbort, eff.DegenerateSectorError, sw.SwError)

DEFAULTS: dict[str, Any] = {
    "fig3": {
        "delta_over_t": {"min": 0.1, "max": 10.0, "points": 101, "scale": "log"},
        "t_over_delta": {"min": 0.01, "max": 2.0, "points": 200, "scale": "linear"},
        "phi_x_over_pi": {"min": 0.0, "max": 2.0, "points": 201, "scale": "linear"},
        "phi_t_over_delta": [1.0, 0.5],
    },
    "fig4": {
        "kappa": 1.0,
        "g_over_kappa": {"min": 0.1, "max": 10.0, "points": 100, "scale": "log"},
        "kappa_tau": [1.0, 2.0],
        "targets": [1e-3, 1e-6],
        "samples": 0,
    },
    "verify": {
        "tolerances": {
            "block_spectrum": 1e-10,
            "g_z_adjudication": 1e-3,
            "sw_A": 1e-3,
            "sw_B": 1e-4,
            "sw_B_uniform": 1e-12,
            "lindblad_displacement": 1e-6,
            "two_qubit_J": 0.05,
        },
        "draws": 100,
    },
    "readout": {
        "model": "ideal",
        "g_tilde": 2.0,
        "kappa": 1.0,
        "omega_r": 200.0,
        "omega_q": 0.7,
        "t_final": 10.0,
        "points": 101,
        "n_max": None,
        "device": None,
        "drive": {"kind": "phi_x", "amplitude": 0.1},
    },
    "gate": {
        "omega_q1": 0.3,
        "omega_q2": 0.4,
        "omega_r": 1.0,
        "omega_m": 1.1,
        "g1_tilde": 0.005,
        "g2_tilde": 0.005,
        "g1_bar": 0.0,
        "g2_bar": 0.0,
        "kappa": 0.0,
        "n_max": 8,
        "points": 65,
    },
    "seed": 20240601,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _normalize_units(obj: Any) -> Any:
    """Convert every ``*_hz`` key to its angular-frequency counterpart."""
    if isinstance(obj, dict):
        out = {}
        for key, value in obj.items():
            value = _normalize_units(value)
            if isinstance(key, str) and key.endswith("_hz"):
                base = key[: -len("_hz")]
                if base in obj:
                    raise ConfigError(f"both {key!r} and {base!r} given")
                out[base] = _scale(value, 2 * math.pi, key)
            else:
                out[key] = value
        return out
    if isinstance(obj, list):
        return [_normalize_units(v) for v in obj]
    return obj


def _scale(value, factor, key):
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{key!r} must be numeric")
    if isinstance(value, (int, float)):
        return value * factor
    if isinstance(value, list):
        return [_scale(v, factor, key) for v in value]
    if isinstance(value, dict):
        return {k: (_scale(v, factor, key) if k in ("min", "max") else v) for k, v in value.items()}
    raise ConfigError(f"{key!r} must be numeric")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_schema() -> dict:
    return json.loads(resources.files("mzm_readout").joinpath("config.schema.json").read_text())


def load_config(path: str | None) -> dict:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from exc
    return _merge(DEFAULTS, _normalize_units(raw))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def axis(spec: dict, name: str) -> np.ndarray:
    try:
        lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["points"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep {name!r}: {exc}") from exc
    scale = spec.get("scale", "linear")
    if n < 2:
        raise ConfigError(f"sweep {name!r} needs at least 2 points")
    if scale == "log":
        if lo <= 0 or hi <= 0:
            raise ConfigError(f"log sweep {name!r} needs positive bounds")
        return np.geomspace(lo, hi, n)
    if scale != "linear":
        raise ConfigError(f"unknown sweep scale {scale!r}")
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------- output


def write_csv(path: Path, header: Sequence[str], rows, digest: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".16e")


@dataclass
class Check:
    name: str
    passed: bool
    measured: Any
    tolerance: Any
    detail: str = ""

    def as_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": _jsonable(self.measured),
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def write_report(path: Path, cfg: dict, command: str, t0: float, checks: list[Check], **extra) -> dict:
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg_version = version("artifact")
    except PackageNotFoundError:
        pkg_version = "unknown"
    report = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "artifact": pkg_version,
        },
        "wall_time_s": time.perf_counter() - t0,
        "checks": [c.as_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    report.update({k: _jsonable(v) for k, v in extra.items()})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")
    return report


def _pmap(fn: Callable, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- fig3


def _fig3_params(delta: float, t: float, phi: float) -> DeviceParams:
    # E_C = 1, n_g = 0 so that delta(0) = eps0 + 1; delta_lambda = lambda_0 - lambda_C = 1
    return DeviceParams(E_C=1.0, eps0=delta - 1.0, t_L=t, t_R=t, phi_x=phi, lambda_C=0.0, lambda_0=1.0)


def _fig3_row(delta, t, phi):
    e = eff.effective_params(_fig3_params(delta, t, phi))
    return e


def cmd_fig3(cfg: dict, out: Path, threads: int = 1) -> int:
    c = cfg["fig3"]
    digest = config_hash(cfg)
    d_over_t = axis(c["delta_over_t"], "delta_over_t")
    t_over_d = axis(c["t_over_delta"], "t_over_delta")
    phis = math.pi * axis(c["phi_x_over_pi"], "phi_x_over_pi")
    phi_ts = [float(x) for x in c["phi_t_over_delta"]]
    if any(x <= 0 for x in np.concatenate([d_over_t, t_over_d])) or any(x <= 0 for x in phi_ts):
        raise ConfigError("ratio sweeps must be positive")

    rows_a = _pmap(lambda x: _fig3_row(x, 1.0, 0.0), d_over_t, threads)
    rows_b = _pmap(lambda x: _fig3_row(1.0, x, 0.0), t_over_d, threads)
    rows_c = {tt: _pmap(lambda ph, tt=tt: _fig3_row(1.0, tt, ph), phis, threads) for tt in phi_ts}

    # g_z / delta_lambda with delta_lambda = 1
    write_csv(
        out / "fig3a_gz_vs_delta_over_t.csv",
        ["delta_over_t", "gz_over_dlambda_exact", "gz_over_dlambda_small_t"],
        [(x, e.g_z, e.small_t_g_z) for x, e in zip(d_over_t, rows_a)],
        digest,
    )
    write_csv(
        out / "fig3b_gz_vs_t_over_delta.csv",
        ["t_over_delta", "gz_over_dlambda_exact", "gz_over_dlambda_small_t"],
        [(x, e.g_z, e.small_t_g_z) for x, e in zip(t_over_d, rows_b)],
        digest,
    )
    head_c, head_f = ["phi_x"], ["phi_x"]
    for tt in phi_ts:
        head_c += [f"gz_over_dlambda_exact_t{tt:g}", f"gz_over_dlambda_small_t_t{tt:g}"]
        head_f += [f"omega_q_over_delta_exact_t{tt:g}", f"omega_q_over_delta_small_t_t{tt:g}"]
    write_csv(
        out / "fig3c_gz_vs_phi.csv",
        head_c,
        [[ph] + [v for tt in phi_ts for v in (rows_c[tt][k].g_z, rows_c[tt][k].small_t_g_z)] for k, ph in enumerate(phis)],
        digest,
    )
    # omega_q / t with t = 1
    write_csv(
        out / "fig3d_omega_q_vs_delta_over_t.csv",
        ["delta_over_t", "omega_q_over_t_exact", "omega_q_over_t_small_t"],
        [(x, e.omega_q, e.small_t_omega_q) for x, e in zip(d_over_t, rows_a)],
        digest,
    )
    # omega_q / delta with delta = 1
    write_csv(
        out / "fig3e_omega_q_vs_t_over_delta.csv",
        ["t_over_delta", "omega_q_over_delta_exact", "omega_q_over_delta_small_t"],
        [(x, e.omega_q, e.small_t_omega_q) for x, e in zip(t_over_d, rows_b)],
        digest,
    )
    write_csv(
        out / "fig3f_omega_q_vs_phi.csv",
        head_f,
        [
            [ph] + [v for tt in phi_ts for v in (rows_c[tt][k].omega_q, rows_c[tt][k].small_t_omega_q)]
            for k, ph in enumerate(phis)
        ],
        digest,
    )
    return EXIT_OK


# ---------------------------------------------------------------- fig4


def cmd_fig4(cfg: dict, out: Path, seed: int, samples: int, threads: int = 1) -> int:
    c = cfg["fig4"]
    digest = config_hash(cfg)
    kappa = float(c["kappa"])
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    gk = axis(c["g_over_kappa"], "g_over_kappa")
    kts = [float(x) for x in c["kappa_tau"]]
    targets = [float(x) for x in c["targets"]]
    if any(x <= 0 for x in kts) or any(not 0 < x < 0.5 for x in targets):
        raise ConfigError("kappa_tau must be positive and targets in (0, 1/2)")
    if samples > 0 and seed is None:
        raise ConfigError("Monte Carlo requested without a seed")

    header = ["g_over_kappa"]
    for kt in kts:
        header.append(f"infidelity_kappa_tau_{kt:g}")
        if samples:
            header += [f"mc_infidelity_kappa_tau_{kt:g}", f"mc_se_kappa_tau_{kt:g}"]
    rows = []
    for i, x in enumerate(gk):
        row = [x]
        for j, kt in enumerate(kts):
            tau = kt / kappa
            row.append(ro.assignment_infidelity(x * kappa, kappa, tau))
            if samples:
                mu, sigma = ro.signal_stats(x * kappa, kappa, tau)
                task_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1)[0])
                f, se = ro.sample_homodyne(mu, sigma, 1, samples, task_seed, threads)
                row += [1 - f, se]
        rows.append(row)
    write_csv(out / "fig4a_infidelity_vs_g_over_kappa.csv", header, rows, digest)

    header_b = ["g_over_kappa"]
    for eps in targets:
        header_b += [f"kappa_tau_eps_{eps:g}", f"unreachable_eps_{eps:g}"]

    def row_b(x):
        row = [x]
        for eps in targets:
            try:
                row += [kappa * ro.time_to_infidelity(x * kappa, kappa, eps), 0]
            except ro.UnreachableTargetError:
                row += [float("nan"), 1]
        return row

    write_csv(out / "fig4b_time_to_infidelity.csv", header_b, _pmap(row_b, gk, threads), digest)
    return EXIT_OK


# ---------------------------------------------------------------- verify


def check_block_spectrum(tol: float, draws: int, seed: int) -> Check:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    worst = 0.0
    for _ in range(draws):
        n = int(rng.integers(-1, 2))
        delta = float(rng.choice([-1, 1]) * rng.uniform(0.5, 3.0))
        E_C = float(rng.uniform(0.5, 2.0))
        n_g = float(rng.uniform(-0.3, 0.3))
        ratio = 10 ** rng.uniform(-2, 1)
        t_L = ratio * abs(delta) * rng.uniform(0.5, 1.5)
        t_R = ratio * abs(delta) * rng.uniform(0.5, 1.5)
        phi = float(rng.uniform(0, 4 * math.pi))
        # choose eps0 so that delta(n) takes the drawn value
        eps0 = delta + 2 * E_C * (n - n_g) - E_C
        p = DeviceParams(E_C=E_C, eps0=eps0, n_g=n_g, t_L=t_L, t_R=t_R, phi_x=phi)
        worst = max(worst, block_spectrum_error(n, p))
    return Check("block_spectrum", worst <= tol, worst, tol, f"{draws} random draws, max relative eigenvalue error")


def block_spectrum_error(n: int, p: DeviceParams) -> float:
    lo, hi = min(n - 1, -1) - 1, max(n, 0) + 1
    b = build_single_qubit(p, (lo, hi), n_max=1)
    N = b.basis.sector_values("N")
    nb = b.basis.sector_values("b")
    na = b.basis.sector_values("a")
    idx = np.flatnonzero((N + nb == n) & (na == 0))
    w = np.linalg.eigvalsh(b.H_static.restrict(idx))
    ref = np.sort(eff.block_spectrum(n, p).levels)
    scale = max(np.abs(ref).max(), 1e-300)
    return float(np.abs(w - ref).max() / scale)


GZ_POINTS = (0.1, 0.5, 1.0)


def gz_adjudication(tol: float) -> tuple[Check, str]:
    """Compare the full-model oracle with ``g_f/2`` and ``g_f/4`` at ``t/delta`` in ``GZ_POINTS``."""
    rows = []
    wins = {"g_f(0)/2": 0, "g_f(0)/4": 0}
    for r in GZ_POINTS:
        p = DeviceParams(E_C=1.0, eps0=1.0, t_L=2 * r, t_R=2 * r, phi_x=0.3, lambda_C=1e-3, lambda_0=1.1e-2)
        g_f = eff.block_couplings(0, p).g_f
        num = eff.full_model_coupling_oracle(p)
        err2 = abs(num - g_f / 2) / abs(g_f / 2)
        err4 = abs(num - g_f / 4) / abs(g_f / 4)
        wins["g_f(0)/2"] += err2 <= tol
        wins["g_f(0)/4"] += err4 <= tol
        rows.append({"t_over_delta": r, "oracle": num, "g_f_half": g_f / 2, "g_f_quarter": g_f / 4, "rel_err_half": err2, "rel_err_quarter": err4})
    winner = [k for k, v in wins.items() if v == len(GZ_POINTS)]
    exclusive = len(winner) == 1 and all(v == 0 for k, v in wins.items() if k not in winner)
    name = winner[0] if exclusive else "undecided"
    passed = exclusive and name == "g_f(0)/2"
    return Check("g_z_adjudication", passed, rows, tol, f"oracle matches {name}; canonical is g_f(0)/2"), name


SW_SYMMETRIC = dict(E_L=10.0, E_R=10.0, eps1=5.0, eps2=5.0)
SW_B_LAMBDAS = dict(lambda_L=0.01, lambda_R=-0.02, lambda_1=0.03, lambda_2=0.005)


def sw_checks(tol_a: float, tol_b: float, tol_uniform: float) -> tuple[list[Check], list[dict]]:
    t = 0.02 * 15.0
    p = FourMzmParams(**SW_SYMMETRIC, t=(t, t, t, t))
    coeffs = eff.four_mzm_coefficients(p)
    c_sw = sw.p4_coefficient(p)
    rel_a = abs(c_sw - coeffs.parity_coefficient_complete) / abs(coeffs.parity_coefficient_complete)
    checks = [Check("sw_A", rel_a <= tol_a, {"sw": c_sw, "analytic": coeffs.parity_coefficient_complete}, tol_a,
                    "4th-order SW parity-string coefficient vs -(A + A*) summed over all loop orderings")]
    pb = FourMzmParams(E_L=10.0, E_R=12.0, eps1=5.0, eps2=6.0, t=(0.3, 0.25, 0.2, 0.35), **SW_B_LAMBDAS)
    cb = eff.four_mzm_coefficients(pb)
    b_num = sw.classical_field_b_oracle(pb)
    rel_b = abs(b_num - cb.B_complete.real) / abs(cb.B_complete.real)
    checks.append(Check("sw_B", rel_b <= tol_b, {"oracle": b_num, "analytic": cb.B_complete.real}, tol_b,
                        "classical-field derivative vs B summed over all loop orderings"))
    pu = pb.replace(lambda_L=0.02, lambda_R=0.02, lambda_1=0.02, lambda_2=0.02)
    b_u = sw.classical_field_b_oracle(pu)
    b_ua = abs(eff.four_mzm_coefficients(pu).B)
    worst = max(abs(b_u), b_ua)
    checks.append(Check("sw_B_uniform", worst <= tol_uniform, {"oracle": b_u, "analytic": b_ua}, tol_uniform, "uniform coupling gives B = 0"))
    comparisons = [
        {"name": "sw_A_two_path_form", "sw": c_sw, "formula": coeffs.parity_coefficient, "ratio": c_sw / coeffs.parity_coefficient},
        {"name": "sw_B_two_path_form", "oracle": b_num, "formula": cb.B.real, "ratio": b_num / cb.B.real},
    ]
    return checks, comparisons


def lindblad_displacement_check(tol: float) -> Check:
    g, kappa = 1.0, 1.0
    times = np.array([0.0, 0.5, 1.0, 2.0, 5.0]) / kappa
    b = build_ideal_readout(g, n_max=default_boson_cutoff(g / kappa))
    psi = ro.product_state(b.basis, [np.array([0.0, 1.0]), np.eye(b.basis.dims[1])[0]])
    tr = ro.lindblad_evolve(b, kappa, psi, times)
    ref = ro.cavity_displacement(g, kappa, times[1:], 1).alpha
    err = float(np.max(np.abs(tr.a[1:] - ref) / np.abs(ref)))
    return Check("lindblad_displacement", err <= tol, err, tol, "ideal model, kappa t in {0.5, 1, 2, 5}")


def default_gate_params(c: dict) -> TwoQubitParams:
    return TwoQubitParams(
        omega_q1=c["omega_q1"],
        omega_q2=c["omega_q2"],
        omega_r=c["omega_r"],
        drive1=QubitDrive(c["g1_bar"], c["g1_tilde"], c["omega_m"]),
        drive2=QubitDrive(c["g2_bar"], c["g2_tilde"], c["omega_m"]),
        kappa=c["kappa"],
    )


def gate_checks(c: dict, tol: float) -> tuple[list[Check], list[dict], ro.GateSimResult]:
    p = default_gate_params(c)
    J, t_g = eff.two_qubit_gate(c["g1_tilde"], c["g2_tilde"], c["omega_m"], c["omega_r"])
    res = ro.simulate_two_qubit_gate(p, t_g, n_max=int(c["n_max"]), n_points=int(c["points"]))
    J_avg = eff.zz_rate(c["g1_tilde"], c["g2_tilde"], c["omega_m"], c["omega_r"], c["g1_bar"], c["g2_bar"])
    rel = abs(res.J_numeric - J_avg) / abs(J_avg)
    checks = [Check("two_qubit_J", rel <= tol, {"J_numeric": res.J_numeric, "J_second_order": J_avg}, tol,
                    "simulated ZZ rate vs time-averaged second-order Z1 Z2 coefficient")]
    comparisons = [{
        "name": "zz_phase_at_t_g",
        "J_formula": J,
        "t_g": t_g,
        "zz_phase": res.zz_phase,
        "target": math.pi / 4,
        "ratio": abs(res.zz_phase) / (math.pi / 4),
        "within_5_percent": abs(abs(res.zz_phase) / (math.pi / 4) - 1) <= 0.05,
    }]
    return checks, comparisons, res


def cmd_verify(cfg: dict, out: Path) -> int:
    t0 = time.perf_counter()
    v = cfg["verify"]
    tol = v["tolerances"]
    seed = int(cfg["seed"])
    checks = [check_block_spectrum(tol["block_spectrum"], int(v["draws"]), seed)]
    gz_check, winner = gz_adjudication(tol["g_z_adjudication"])
    checks.append(gz_check)
    sw_c, sw_cmp = sw_checks(tol["sw_A"], tol["sw_B"], tol["sw_B_uniform"])
    checks += sw_c
    checks.append(lindblad_displacement_check(tol["lindblad_displacement"]))
    g_c, g_cmp, _ = gate_checks(cfg["gate"], tol["two_qubit_J"])
    checks += g_c
    report = write_report(
        out / "verify_report.json",
        cfg,
        "verify",
        t0,
        checks,
        canonical_g_z=winner,
        formula_comparisons=sw_cmp + g_cmp,
    )
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
    return EXIT_OK if report["passed"] else EXIT_CHECK


# ---------------------------------------------------------------- readout-sim


def _device(d: dict | None) -> DeviceParams:
    base = dict(E_C=20.0, eps0=10.0, t_L=3.0, t_R=3.0, phi_x=0.5 * math.pi, lambda_C=0.0, lambda_0=0.2, omega_r=5.0, kappa=0.025)
    try:
        return DeviceParams(**{**base, **(d or {})})
    except TypeError as exc:
        raise ConfigError(f"bad device block: {exc}") from exc


def _full_model_runs(c: dict, times: np.ndarray):
    p = _device(c.get("device"))
    drive = c["drive"]
    amp = float(drive["amplitude"])
    kind = drive["kind"]
    w = p.omega_r
    h = 1e-4
    if kind == "phi_x":
        dgz = (eff.longitudinal_coupling(p.replace(phi_x=p.phi_x + h)).exact
               - eff.longitudinal_coupling(p.replace(phi_x=p.phi_x - h)).exact) / (2 * h)
        kwargs = {"flux_drive": lambda t: p.phi_x + amp * math.cos(w * t)}
    elif kind == "eps0":
        dgz = (eff.longitudinal_coupling(p.replace(eps0=p.eps0 + h)).exact
               - eff.longitudinal_coupling(p.replace(eps0=p.eps0 - h)).exact) / (2 * h)
        kwargs = {"eps_drive": lambda t: amp * math.cos(w * t)}
    else:
        raise ConfigError(f"unknown drive kind {kind!r}")
    g_tilde = dgz * amp
    n_max = c["n_max"] or default_boson_cutoff(2 * g_tilde / p.kappa)
    charge = (-2, 1)
    bundle = build_single_qubit(p, charge, n_max, **kwargs)
    _, psi0, psi1 = eff.dressed_logical_states(p, charge, n_max)
    runs = {}
    for s, psi in ((1, psi1), (-1, psi0)):
        runs[s] = ro.lindblad_evolve(bundle, p.kappa, psi, times)
    return runs, g_tilde, p.kappa


def cmd_readout_sim(cfg: dict, out: Path) -> int:
    t0 = time.perf_counter()
    c = cfg["readout"]
    digest = config_hash(cfg)
    times = np.linspace(0.0, float(c["t_final"]), int(c["points"]))
    model = c["model"]
    runs = {}
    if model in ("ideal", "effective"):
        g, kappa = float(c["g_tilde"]), float(c["kappa"])
        if kappa <= 0:
            raise ConfigError("kappa must be positive")
        for s in (1, -1):
            if model == "ideal":
                n_max = c["n_max"] or default_boson_cutoff(g / kappa)
                bundle = build_ideal_readout(g, n_max)
            else:
                n_max = c["n_max"] or default_boson_cutoff(2 * g / kappa)
                bundle = build_effective_readout(float(c["omega_q"]), float(c["omega_r"]), QubitDrive(0.0, g, float(c["omega_r"])), n_max)
            occ = np.array([0.0, 1.0]) if s == 1 else np.array([1.0, 0.0])
            psi = ro.product_state(bundle.basis, [occ, np.eye(n_max + 1)[0]])
            runs[s] = ro.lindblad_evolve(bundle, kappa, psi, times)
    elif model == "full":
        runs, g, kappa = _full_model_runs(c, times)
    else:
        raise ConfigError(f"unknown readout model {model!r}")

    for s, tr in runs.items():
        write_csv(
            out / f"readout_trajectory_s{'+' if s > 0 else '-'}1.csv",
            ["t", "re_a", "im_a", "sigma_z", "purity"],
            zip(tr.times, tr.a.real, tr.a.imag, tr.sigma_z, tr.purity),
            digest,
        )
    if model == "full":
        # lab-frame field: demodulate at the drive frequency over the second half
        w = _device(c.get("device")).omega_r
        amp = {s: ro.demodulate(tr.times, tr.a, w, kappa, t_min=0.5 * tr.times[-1]) for s, tr in runs.items()}
        sep = abs(amp[1] - amp[-1])
    else:
        sep = abs(runs[1].a[-1] - runs[-1].a[-1])
    expected = 2 * abs(g) / kappa
    drift = max(float(np.ptp(tr.sigma_z)) for tr in runs.values())
    checks = [
        Check("displacement_separation", abs(sep - expected) <= 0.05 * expected, sep, 0.05,
              f"final separation vs 2 g/kappa = {expected:.6g}") if expected > 0 else
        Check("displacement_decay", sep <= 1e-8, sep, 1e-8, "no drive: resonator stays in vacuum"),
        Check("sigma_z_drift", drift <= 1e-8, drift, 1e-8, "logical sigma_z constant"),
    ]
    report = write_report(out / "readout_report.json", cfg, "readout-sim", t0, checks, g_tilde=g, kappa=kappa)
    return EXIT_OK if report["passed"] else EXIT_CHECK


# ---------------------------------------------------------------- gate-sim


def cmd_gate_sim(cfg: dict, out: Path) -> int:
    t0 = time.perf_counter()
    c = cfg["gate"]
    digest = config_hash(cfg)
    try:
        checks, comparisons, res = gate_checks(c, cfg["verify"]["tolerances"]["two_qubit_J"])
    except ValueError as exc:
        if "no coupling" in str(exc):
            raise ConfigError("both modulation amplitudes must be nonzero for a gate") from exc
        raise
    tr = res.trajectory
    from .models import build_two_qubit

    basis = build_two_qubit(default_gate_params(c), int(c["n_max"])).basis
    phases = ro.zz_phase_series(tr.states, basis)
    q_purity = [ro.purity(ro.reduced_density(r, basis, ["q1", "q2"])) for r in tr.states]
    write_csv(
        out / "gate_trajectory.csv",
        ["t", "zz_phase", "n_photon", "qubit_purity"],
        zip(tr.times, phases, tr.n_photon, q_purity),
        digest,
    )
    report = write_report(
        out / "gate_report.json",
        cfg,
        "gate-sim",
        t0,
        checks,
        zz_phase=res.zz_phase,
        J_numeric=res.J_numeric,
        qubit_purity=res.qubit_purity,
        formula_comparisons=comparisons,
    )
    return EXIT_OK if report["passed"] else EXIT_CHECK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mzm-readout", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("fig3", "fig4", "verify", "readout-sim", "gate-sim"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
        sp.add_argument("--samples", type=int, help="Monte Carlo samples per point")
        sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.samples is not None:
            if args.samples < 0:
                raise ConfigError("samples must be nonnegative")
            cfg["fig4"]["samples"] = args.samples
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        if args.command == "fig3":
            return cmd_fig3(cfg, out, args.threads)
        if args.command == "fig4":
            return cmd_fig4(cfg, out, cfg.get("seed"), int(cfg["fig4"]["samples"]), args.threads)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "readout-sim":
            return cmd_readout_sim(cfg, out)
        return cmd_gate_sim(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
