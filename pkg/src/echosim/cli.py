"""Batch experiment runner.

Subcommands: decay, ldos, saturation, shorttime, lyapunov, selftest.
Each run reads one JSON config (overridable with repeatable --set
key=value flags), writes plot-ready CSV files plus a manifest.json that
echoes the resolved config, the derived per-member seeds, and the
derived physical scales, enough to reproduce every CSV byte for byte.

All randomness flows from the single master seed in the config; numeric
output uses 17 significant digits so reruns are byte-identical,
including under different --workers counts.

Exit codes: 0 success, 2 config error, 3 numerical failure; errors are
one machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classical, echo, experiments, models, numkernel, spectral

SCHEMA_VERSION = "1"

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_NUMERICAL_ERRORS = (
    numkernel.NumericsError,
    spectral.FitError,
    experiments.NoDecayWindowError,
)


# ---------------------------------------------------------------------------
# config handling

_DEFAULTS = {
    "decay": {
        "model": "kicked_rotator",
        "N": 256, "K1": 57.0, "deltaK": 1e-3, "tau": 1.0,
        "theta_x": 0.0, "theta_p": 0.0,
        "epsilon": 1.0, "model_seed": 7,
        "ensemble": {"count": 100, "seed": 1234, "kind": "haar"},
        "echo_kind": "both",
        "times": {"max_kicks": 2000, "stride": 4},
        "ct_times": {"t_max": 1.0, "points": 64},
        "engine": "auto",
    },
    "ldos": {
        "model": "kicked_rotator",
        "N": 256, "K1": 57.0, "deltaK": 1e-3, "tau": 1.0,
        "theta_x": 0.0, "theta_p": 0.0,
        "bin_width": None,
        "synthetic": False, "synthetic_gamma": 0.1,
        "ensemble": {"count": 1, "seed": 1234, "kind": "haar"},
    },
    "saturation": {
        "model": "kicked_rotator",
        "K1": 57.0, "tau": 1.0,
        "Ns": [128, 256, 512],
        "deltaKs": [0.0003, 0.0005, 0.0008, 0.0013, 0.0021, 0.0034, 0.0055],
        "synthetic": False,
        "ensemble": {"count": 100, "seed": 1234, "kind": "haar"},
    },
    "shorttime": {
        "model": "ct_pair",
        "N": 64, "epsilon": 1.0, "model_seed": 7,
        "ensemble": {"count": 1, "seed": 1234, "kind": "haar"},
        "points": 72,
    },
    "lyapunov": {
        "K1": 57.0, "tau": 1.0,
        "steps": 20000, "lyap_ensemble": 100,
        "ensemble": {"count": 1, "seed": 1234, "kind": "haar"},
    },
    "selftest": {
        "ensemble": {"count": 8, "seed": 99, "kind": "haar"},
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown configuration field")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set needs key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"{key}: unknown configuration field")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"{key}: unknown configuration field")
    node[parts[-1]] = value


def _require(config: dict, field: str, kinds, positive: bool = False):
    value = config
    for part in field.split("."):
        value = value[part]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise ConfigError(f"{field}: expected {kinds}, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{field}: must be positive, got {value!r}")
    return value


def load_config(command: str, args) -> dict:
    config = copy.deepcopy(_DEFAULTS[command])
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be an object")
        config = _merge(config, loaded)
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.seed is not None:
        config["ensemble"]["seed"] = args.seed
    return config


# ---------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _write_csv(path: Path, schema: str, digest: str, columns, rows) -> None:
    lines = [
        f"# echosim {schema} schema={SCHEMA_VERSION}",
        f"# manifest_digest={digest}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_keyvalues(path: Path, schema: str, digest: str, items) -> None:
    lines = [
        f"# echosim {schema} schema={SCHEMA_VERSION}",
        f"# manifest_digest={digest}",
    ]
    for key, value in items:
        lines.append(f"{key}={_fmt(value)}")
    path.write_text("\n".join(lines) + "\n")


def _derived_seeds(config: dict) -> list[int]:
    ens = config["ensemble"]
    return [
        int(experiments.member_seed(ens["seed"], i).generate_state(1, np.uint64)[0])
        for i in range(ens["count"])
    ]


def _start_run(command: str, config: dict, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _derived_seeds(config)
    digest = _digest({"command": command, "config": config, "derived_seeds": seeds})
    manifest = {
        "tool": "echosim",
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "master_seed": config["ensemble"]["seed"],
        "derived_seeds": seeds,
        "digest": digest,
        "derived": {},
        "warnings": [],
    }
    return manifest, digest


def _finish_run(manifest: dict, out_dir: Path, started: float) -> None:
    manifest["wall_clock_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    manifest["duration_s"] = time.time() - started
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _floquet_pair(config: dict):
    n = _require(config, "N", int, positive=True)
    k1 = _require(config, "K1", (int, float))
    delta_k = _require(config, "deltaK", (int, float))
    tau = _require(config, "tau", (int, float), positive=True)
    if delta_k < 0:
        raise ConfigError(f"deltaK: must be nonnegative, got {delta_k}")
    try:
        return models.kr_pair(n, k1, delta_k, tau,
                              config.get("theta_x", 0.0), config.get("theta_p", 0.0))
    except numkernel.NumericsError as exc:
        raise ConfigError(f"N: {exc}") from exc


# ---------------------------------------------------------------------------
# decay

def cmd_decay(config: dict, out_dir: Path, workers: int) -> int:
    started = time.time()
    model = config["model"]
    kinds = {"both": ["M_L", "M_Da"], "M_L": ["M_L"], "M_Da": ["M_Da"]}.get(config["echo_kind"])
    if kinds is None:
        raise ConfigError(f"echo_kind: must be M_L, M_Da or both, got {config['echo_kind']!r}")
    manifest, digest = _start_run("decay", config, out_dir)
    ens = config["ensemble"]

    if model == "kicked_rotator":
        map1, map2 = _floquet_pair(config)
        stride = _require(config, "times.stride", int, positive=True)
        max_kicks = _require(config, "times.max_kicks", int, positive=True)
        if "M_Da" in kinds and stride % 2 == 1:
            stride += 1
            manifest["warnings"].append(
                f"stride coerced to {stride}: M_Da needs even kick counts")
            print(f"warning: stride coerced to {stride} (M_Da needs even kick counts)",
                  file=sys.stderr)
        times = np.arange(0, max_kicks + 1, stride, dtype=np.int64)
        spec = experiments.EnsembleSpec(count=ens["count"], seed=ens["seed"],
                                        n_dim=map1.N, state_kind=ens["kind"])
        scales = models.SpectralScales.floquet(map1.N)
        gamma_est = spectral.golden_rule_gamma(
            models.kr_golden_rule_sigma(map1, map2), scales.delta)
        manifest["derived"].update({
            "Delta": scales.delta, "B": scales.bandwidth, "hbar_eff": map1.hbar_eff,
            "lambda_formula": math.log(config["K1"] * config["tau"] / 2.0),
            "gamma_golden_rule": gamma_est,
        })
        curves = {}
        for kind in kinds:
            resolved = echo._resolve_engine(config["engine"], kind, times)
            manifest["derived"][f"engine_{kind}"] = resolved
            eng = echo.make_floquet_engine(map1, map2, resolved, kind, times)
            curves[kind] = experiments.ensemble_curve(spec, eng, kind, times,
                                                      workers=workers)
    elif model == "ct_pair":
        n = _require(config, "N", int, positive=True)
        pair = models.ct_pair(n, _require(config, "epsilon", (int, float)),
                              _require(config, "model_seed", int))
        t_max = _require(config, "ct_times.t_max", (int, float), positive=True)
        points = _require(config, "ct_times.points", int, positive=True)
        times = np.linspace(0.0, t_max, points + 1)
        spec = experiments.EnsembleSpec(count=ens["count"], seed=ens["seed"],
                                        n_dim=n, state_kind=ens["kind"])
        prop = echo.CtPropagator(pair)
        manifest["derived"]["gamma_golden_rule"] = spectral.golden_rule_gamma(
            models.ct_golden_rule_sigma(pair), 1.0)
        curves = {kind: experiments.ensemble_curve(spec, prop, kind, times,
                                                   workers=workers)
                  for kind in kinds}
    else:
        raise ConfigError(f"model: must be kicked_rotator or ct_pair, got {model!r}")

    nan = float("nan")
    rows = []
    for i, t in enumerate(times):
        ml = curves.get("M_L")
        mda = curves.get("M_Da")
        rows.append((
            t,
            ml.values[i] if ml is not None else nan,
            ml.stderr[i] if ml is not None else nan,
            mda.values[i] if mda is not None else nan,
            mda.stderr[i] if mda is not None else nan,
        ))
    _write_csv(out_dir / "decay.csv", "decay", digest,
               ("time", "M_L_mean", "M_L_stderr", "M_Da_mean", "M_Da_stderr"), rows)
    _finish_run(manifest, out_dir, started)
    return 0


# ---------------------------------------------------------------------------
# ldos

def _auto_ldos_fit(ov, bin_width):
    """Two-pass histogram: coarse pass sets the resolution from the
    half-height width, final bin width max(Delta, Gamma_init/10)."""
    delta = 2.0 * np.pi / ov.dim
    if bin_width is None:
        coarse = spectral.ldos_histogram(ov, delta)
        gamma_init = spectral.lorentzian_fit(coarse).gamma
        bin_width = max(delta, gamma_init / 10.0)
    hist = spectral.ldos_histogram(ov, bin_width)
    return hist, spectral.lorentzian_fit(hist)


def cmd_ldos(config: dict, out_dir: Path, workers: int) -> int:
    started = time.time()
    if config["model"] != "kicked_rotator":
        raise ConfigError(f"model: ldos requires kicked_rotator, got {config['model']!r}")
    n = _require(config, "N", int, positive=True)
    if n > numkernel.EIG_DIMENSION_CAP:
        raise ConfigError(f"N: eigendecomposition cap is {numkernel.EIG_DIMENSION_CAP}, got {n}")
    manifest, digest = _start_run("ldos", config, out_dir)
    scales = models.SpectralScales.floquet(n)

    if config["synthetic"]:
        gamma_true = _require(config, "synthetic_gamma", (int, float), positive=True)
        hist = spectral.synthetic_lorentzian_histogram(
            gamma_true, scales.delta, max(scales.delta, gamma_true / 10.0))
        fit = spectral.lorentzian_fit(hist)
        gamma_gr = gamma_true
        manifest["derived"]["synthetic_gamma"] = gamma_true
        status = "ok"
    else:
        map1, map2 = _floquet_pair(config)
        eig1 = numkernel.unitary_eig(numkernel.densify(map1.apply, n))
        eig2 = numkernel.unitary_eig(numkernel.densify(map2.apply, n))
        ov = spectral.overlap_matrix(eig1, eig2)
        gamma_gr = spectral.golden_rule_gamma(
            models.kr_golden_rule_sigma(map1, map2), scales.delta)
        try:
            hist, fit = _auto_ldos_fit(ov, config["bin_width"])
            status = "ok"
        except spectral.NoPeakError as exc:
            hist = spectral.ldos_histogram(ov, max(scales.delta, 1e-6))
            fit = None
            status = "no_peak"
            manifest["warnings"].append(str(exc))

    manifest["derived"].update({"Delta": scales.delta, "B": scales.bandwidth,
                                "gamma_golden_rule": gamma_gr, "fit_status": status})
    rows = [(hist.bin_centers[i], hist.density[i], int(hist.counts[i]))
            for i in range(hist.bin_centers.size)]
    _write_csv(out_dir / "ldos.csv", "ldos", digest,
               ("bin_center", "density", "count"), rows)
    items = [("status", status)]
    if fit is not None:
        items += [
            ("gamma", fit.gamma),
            ("amplitude", fit.amplitude),
            ("rms_residual", fit.rms_residual),
            ("gamma_golden_rule", gamma_gr),
            ("fit_over_golden_rule", fit.gamma / gamma_gr if gamma_gr > 0 else float("nan")),
        ]
    else:
        items += [("gamma_golden_rule", gamma_gr)]
    _write_keyvalues(out_dir / "ldos_fit.txt", "ldos_fit", digest, items)
    _finish_run(manifest, out_dir, started)
    return 0


# ---------------------------------------------------------------------------
# saturation

def cmd_saturation(config: dict, out_dir: Path, workers: int) -> int:
    started = time.time()
    manifest, digest = _start_run("saturation", config, out_dir)
    if config["synthetic"]:
        xs = np.geomspace(2.0, 40.0, 12)
        points = [experiments.ScalingPoint(n_dim=0, delta_k=0.0, m_inf=float(x) ** -4,
                                           stderr=0.0, x=float(x), regime_flag="ok")
                  for x in xs]
        fit = experiments.fit_power_law(points)
    else:
        n_dims = config["Ns"]
        if not isinstance(n_dims, list) or len(n_dims) < 2:
            raise ConfigError("Ns: need a list with at least 2 dimensions")
        delta_ks = config["deltaKs"]
        if not isinstance(delta_ks, list) or not delta_ks:
            raise ConfigError("deltaKs: need a nonempty list")
        ens = config["ensemble"]
        points, fit = experiments.scaling_scan(
            n_dims, delta_ks, config["K1"], count=ens["count"], seed=ens["seed"],
            workers=workers, tau=config["tau"])
    rows = [(p.n_dim, p.delta_k, p.x, p.m_inf, p.stderr, p.regime_flag) for p in points]
    _write_csv(out_dir / "scaling.csv", "scaling", digest,
               ("N", "deltaK", "x", "m_inf", "stderr", "regime_flag"), rows)
    _write_csv(out_dir / "scaling_raw.csv", "scaling_raw", digest,
               ("N", "deltaK", "m_inf", "stderr"),
               [(p.n_dim, p.delta_k, p.m_inf, p.stderr) for p in points])
    if fit is not None:
        items = [("status", "fitted"), ("b", fit.exponent_b),
                 ("b_stderr", fit.stderr), ("n_points", fit.n_points)]
        manifest["derived"]["exponent_b"] = fit.exponent_b
    else:
        items = [("status", "not fitted")]
    _write_keyvalues(out_dir / "scaling_fit.txt", "scaling_fit", digest, items)
    _finish_run(manifest, out_dir, started)
    return 0


# ---------------------------------------------------------------------------
# shorttime

SHORTTIME_WINDOW = (1e-8, 1e-3)


def cmd_shorttime(config: dict, out_dir: Path, workers: int) -> int:
    started = time.time()
    if config["model"] != "ct_pair":
        raise ConfigError(f"model: shorttime requires ct_pair, got {config['model']!r}")
    n = _require(config, "N", int, positive=True)
    pair = models.ct_pair(n, _require(config, "epsilon", (int, float)),
                          _require(config, "model_seed", int))
    manifest, digest = _start_run("shorttime", config, out_dir)
    ens = config["ensemble"]
    psi = experiments.random_state(n, experiments.member_seed(ens["seed"], 0), ens["kind"])
    sigma_l, sigma_da = echo.short_time_rates(pair, psi)
    manifest["derived"].update({"sigma_l": sigma_l, "sigma_da": sigma_da})

    lo, hi = SHORTTIME_WINDOW
    commuting = sigma_da == 0.0
    t_low = (lo ** 0.5) / sigma_l if sigma_l > 0 else 1e-4
    t_high = (hi ** 0.25) / sigma_da if not commuting else (hi ** 0.5) / max(sigma_l, 1e-12)
    points = _require(config, "points", int, positive=True)
    times = np.geomspace(0.7 * min(t_low, t_high), 1.4 * max(t_low, t_high), points)
    prop = echo.CtPropagator(pair)
    grid = np.concatenate(([0.0], times))
    values_l = prop.curve(psi, "M_L", grid)[1:, 0]
    values_da = prop.curve(psi, "M_Da", grid)[1:, 0]
    deficit_l = 1.0 - values_l
    deficit_da = 1.0 - values_da

    rows = [(times[i], deficit_l[i], deficit_da[i],
             (sigma_l * times[i]) ** 2, (sigma_da * times[i]) ** 4)
            for i in range(times.size)]
    _write_csv(out_dir / "shorttime.csv", "shorttime", digest,
               ("t", "one_minus_M_L", "one_minus_M_Da",
                "pred_quadratic", "pred_quartic"), rows)

    items = [("sigma_l", sigma_l), ("sigma_da", sigma_da)]
    fit_l = experiments.fit_short_time_power(times, deficit_l, 2.0, (lo, hi))
    items += [("slope_M_L", fit_l.slope),
              ("prefactor_M_L", fit_l.prefactor),
              ("prefactor_M_L_over_sigma_l_sq", fit_l.prefactor / sigma_l ** 2)]
    if commuting:
        items += [("slope_M_Da", "commuting_pair")]
    else:
        fit_da = experiments.fit_short_time_power(times, deficit_da, 4.0, (lo, hi))
        items += [("slope_M_Da", fit_da.slope),
                  ("prefactor_M_Da", fit_da.prefactor),
                  ("prefactor_M_Da_over_sigma_da_4", fit_da.prefactor / sigma_da ** 4)]
    _write_keyvalues(out_dir / "shorttime_fit.txt", "shorttime_fit", digest, items)
    _finish_run(manifest, out_dir, started)
    return 0


# ---------------------------------------------------------------------------
# lyapunov

def cmd_lyapunov(config: dict, out_dir: Path, workers: int) -> int:
    started = time.time()
    manifest, digest = _start_run("lyapunov", config, out_dir)
    k1 = _require(config, "K1", (int, float))
    tau = _require(config, "tau", (int, float), positive=True)
    steps = _require(config, "steps", int, positive=True)
    ensemble = _require(config, "lyap_ensemble", int, positive=True)
    est = classical.lyapunov_estimate(k1, steps, ensemble, config["ensemble"]["seed"],
                                      tau=tau)
    formula = math.log(k1 * tau / 2.0) if k1 * tau > 0 else float("nan")
    manifest["derived"].update({"lambda": est.lam, "lambda_stderr": est.stderr,
                                "lambda_formula": formula,
                                "out_of_regime": est.out_of_regime})
    line = (f"lambda = {est.lam:.6f} +- {est.stderr:.6f}"
            f"  formula ln(K*tau/2) = {formula:.6f}"
            + ("  [formula-out-of-regime: K*tau <= 7]" if est.out_of_regime else ""))
    print(line)
    _write_keyvalues(out_dir / "lyapunov.txt", "lyapunov", digest, [
        ("lambda", est.lam),
        ("stderr", est.stderr),
        ("transient_discarded", est.transient_discarded),
        ("formula_ln_K_tau_over_2", formula),
        ("out_of_regime", "true" if est.out_of_regime else "false"),
    ])
    _finish_run(manifest, out_dir, started)
    return 0


# ---------------------------------------------------------------------------
# selftest

def _selftest_checks(out_dir: Path, workers: int):
    def fft_vs_naive():
        rng = np.random.default_rng(5)
        v = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        k = np.arange(16)
        dft = np.exp(-2j * np.pi * np.outer(k, k) / 16) / 4.0
        assert np.abs(numkernel.fft(v) - dft @ v).max() <= 1e-12

    def floquet_unitarity():
        kr_map = models.KickedRotatorMap(64, 57.0)
        u = numkernel.densify(kr_map.apply, 64)
        assert np.linalg.norm(u.conj().T @ u - np.eye(64)) <= 1e-10

    def lorentzian_recovery():
        hist = spectral.synthetic_lorentzian_histogram(0.1, 2 * np.pi / 256, 0.01)
        fit = spectral.lorentzian_fit(hist)
        assert abs(fit.gamma - 0.1) <= 1e-6

    def power_law_recovery():
        xs = np.geomspace(2.0, 40.0, 12)
        points = [experiments.ScalingPoint(0, 0.0, float(x) ** -4, 0.0, float(x), "ok")
                  for x in xs]
        fit = experiments.fit_power_law(points)
        assert abs(fit.exponent_b - 4.0) <= 1e-10

    def determinism():
        base = {
            "model": "kicked_rotator", "N": 64, "K1": 57.0, "deltaK": 2e-3,
            "tau": 1.0, "theta_x": 0.0, "theta_p": 0.0,
            "epsilon": 1.0, "model_seed": 7,
            "ensemble": {"count": 8, "seed": 99, "kind": "haar"},
            "echo_kind": "both", "times": {"max_kicks": 40, "stride": 2},
            "ct_times": {"t_max": 1.0, "points": 64}, "engine": "auto",
        }
        outputs = []
        for tag, nworkers in (("a", 1), ("b", 1), ("c", 2)):
            sub = out_dir / f"selftest_decay_{tag}"
            cmd_decay(copy.deepcopy(base), sub, nworkers)
            outputs.append((sub / "decay.csv").read_bytes())
        assert outputs[0] == outputs[1], "reruns differ"
        assert outputs[0] == outputs[2], "worker counts change bytes"

    return [
        ("fft_vs_naive_dft", fft_vs_naive),
        ("floquet_unitarity", floquet_unitarity),
        ("lorentzian_fit_recovery", lorentzian_recovery),
        ("power_law_fit_recovery", power_law_recovery),
        ("byte_determinism", determinism),
    ]


def cmd_selftest(config: dict, out_dir: Path, workers: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, check in _selftest_checks(out_dir, workers):
        try:
            check()
        except AssertionError as exc:
            print(f"selftest: {name}: FAIL {exc}", file=sys.stderr)
            raise numkernel.NumericsError(f"selftest {name} failed: {exc}") from exc
        print(f"selftest: {name}: ok")
    return 0


# ---------------------------------------------------------------------------
# entry point

_COMMANDS = {
    "decay": cmd_decay,
    "ldos": cmd_ldos,
    "saturation": cmd_saturation,
    "shorttime": cmd_shorttime,
    "lyapunov": cmd_lyapunov,
    "selftest": cmd_selftest,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echosim",
        description="Echo-decay and fidelity-freeze experiments on chaotic testbeds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted path, repeatable)")
        p.add_argument("--out", default="runs/latest", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads for ensemble evaluation")
        p.add_argument("--seed", type=int, help="override the master seed")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.command, args)
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"workers: must be at least 1, got {args.workers}")
        return _COMMANDS[args.command](config, Path(args.out), args.workers)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
