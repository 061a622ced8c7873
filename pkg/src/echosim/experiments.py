"""Ensemble orchestration and statistical estimation.

Random initial states, averaged decay curves, exponential-rate fits,
saturation tail averages, and the saturation scaling scan with its
power-law fit.

Reproducibility: every member state is seeded as
SeedSequence(master_seed, spawn_key=(index,)), so ensembles are
deterministic and order-independent.  Batched evaluation uses a fixed
chunk width (CHUNK = 32 states) whatever the worker count, which keeps
all floating-point results bitwise identical under any degree of
parallelism; worker threads only distribute whole chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .echo import (
    CtPropagator,
    EchoCurve,
    SpectralPropagator,
    make_floquet_engine,
)
from .models import (
    HermitianPair,
    KickedRotatorMap,
    SpectralScales,
    kr_golden_rule_sigma,
    kr_pair,
)
from .numkernel import NumericsError
from .spectral import FitError, golden_rule_gamma

__all__ = [
    "CHUNK",
    "EnsembleSpec",
    "SaturationResult",
    "ScalingPoint",
    "ExponentialFit",
    "PowerLawFit",
    "NoDecayWindowError",
    "ShortTimePowerFit",
    "member_seed",
    "random_state",
    "ensemble_curve",
    "fit_exponential_rate",
    "fit_short_time_power",
    "estimate_saturation",
    "scaling_scan",
    "fit_power_law",
]

CHUNK = 32

# Scan grid sizing: runs end at max(SCAN_MIN_KICKS, SCAN_DECAY_FACTOR/Gamma,
# SCAN_PLATEAU_N_FACTOR*N) kicks, so the tail window sits past the
# exponential shoulder and past the O(N)-kick dephasing of quasi-degenerate
# eigenphase pairs that the frozen plateau needs to settle.
SCAN_MIN_KICKS = 400
SCAN_MAX_KICKS = 40000
SCAN_DECAY_FACTOR = 14.0
SCAN_PLATEAU_N_FACTOR = 14
SCAN_TAIL_POINTS = 48


class NoDecayWindowError(RuntimeError):
    """The curve offers no usable exponential-decay window."""


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble of random initial states, reproducible from one master seed."""

    count: int
    seed: int
    n_dim: int
    state_kind: str = "haar"

    def __post_init__(self):
        if self.count < 1:
            raise NumericsError(f"count must be at least 1, got {self.count}")
        if self.state_kind not in ("haar", "position"):
            raise NumericsError(f"state_kind must be 'haar' or 'position', got {self.state_kind!r}")


def member_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Public per-member seed derivation: SeedSequence(master, spawn_key=(index,))."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def random_state(n_dim: int, seed, kind: str = "haar") -> np.ndarray:
    """Normalized random initial state, deterministic in the seed.

    'haar': independent complex Gaussian components, normalized (Haar
    measure on the sphere).  'position': a basis vector at a seeded site.
    """
    if n_dim < 1:
        raise NumericsError(f"N must be positive, got {n_dim}")
    rng = np.random.default_rng(seed)
    if kind == "haar":
        psi = rng.standard_normal(n_dim) + 1j * rng.standard_normal(n_dim)
        return psi / np.linalg.norm(psi)
    if kind == "position":
        psi = np.zeros(n_dim, dtype=np.complex128)
        psi[int(rng.integers(0, n_dim))] = 1.0
        return psi
    raise NumericsError(f"kind must be 'haar' or 'position', got {kind!r}")


def _member_batch(spec: EnsembleSpec, lo: int, hi: int) -> np.ndarray:
    batch = np.empty((spec.n_dim, hi - lo), dtype=np.complex128)
    for j, idx in enumerate(range(lo, hi)):
        batch[:, j] = random_state(spec.n_dim, member_seed(spec.seed, idx), spec.state_kind)
    return batch


def _resolve_curve_engine(instance, kind: str, times, engine: str):
    if hasattr(instance, "curve"):
        return instance
    if isinstance(instance, HermitianPair):
        return CtPropagator(instance)
    map1, map2 = instance
    if not isinstance(map1, KickedRotatorMap):
        raise NumericsError(f"unsupported instance type {type(instance)!r}")
    return make_floquet_engine(map1, map2, engine, kind, times)


def ensemble_curve(spec: EnsembleSpec, instance, kind: str, times,
                   engine: str = "auto", workers: int = 1,
                   return_members: bool = False):
    """Pointwise ensemble mean of per-state echo intensities.

    ``instance`` is a (map1, map2) pair, a HermitianPair, or a prebuilt
    curve engine.  Results are bitwise independent of ``workers``.  With
    return_members=True the (T, count) matrix of per-state intensities is
    returned alongside the curve.
    """
    eng = _resolve_curve_engine(instance, kind, times, engine)
    chunks = [(lo, min(lo + CHUNK, spec.count)) for lo in range(0, spec.count, CHUNK)]

    def run_chunk(bounds):
        lo, hi = bounds
        return eng.curve(_member_batch(spec, lo, hi), kind, times)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    members = np.concatenate(parts, axis=1)
    mean = members.mean(axis=1)
    if spec.count > 1:
        stderr = members.std(axis=1, ddof=1) / math.sqrt(spec.count)
    else:
        stderr = np.zeros_like(mean)
    curve = EchoCurve(times=np.asarray(times), values=mean, stderr=stderr, kind=kind)
    if return_members:
        return curve, members
    return curve


@dataclass(frozen=True)
class ExponentialFit:
    """Fitted decay constant of an exponential regime."""

    rate: float
    stderr: float
    window: tuple[float, float]
    n_points: int


def _weighted_line(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least-squares line fit; returns slope, intercept, slope variance."""
    sw = w.sum()
    xbar = (w * x).sum() / sw
    ybar = (w * y).sum() / sw
    sxx = (w * (x - xbar) ** 2).sum()
    if sxx <= 0:
        raise FitError("degenerate abscissa in line fit")
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    n = x.size
    if np.all(w == w[0]):
        mse = (resid ** 2).sum() / max(n - 2, 1)
        var_slope = mse / sxx
    else:
        var_slope = 1.0 / sxx
    return slope, intercept, var_slope


def fit_exponential_rate(curve: EchoCurve, floor: float) -> ExponentialFit:
    """Fit ln(value) vs t over the window where value is in (3*floor, 0.5).

    Weighted by 1/stderr^2 on the log scale when standard errors are
    available.  The window is the first contiguous run of valid points;
    fewer than two valid points raise NoDecayWindowError.
    """
    t = np.asarray(curve.times, dtype=np.float64)
    v = np.asarray(curve.values, dtype=np.float64)
    ok = (v < 0.5) & (v > 3.0 * floor)
    if not ok.any():
        raise NoDecayWindowError("no decay window: no points in (3*floor, 0.5)")
    i0 = int(np.argmax(ok))
    i1 = i0
    while i1 < ok.size and ok[i1]:
        i1 += 1
    if i1 - i0 < 2:
        raise NoDecayWindowError("no decay window: fewer than 2 usable points")
    tw = t[i0:i1]
    vw = v[i0:i1]
    y = np.log(vw)
    if curve.stderr is not None and np.all(curve.stderr[i0:i1] > 0):
        w = (vw / curve.stderr[i0:i1]) ** 2
    else:
        w = np.ones_like(y)
    slope, _, var_slope = _weighted_line(tw, y, w)
    if slope >= 0:
        raise NoDecayWindowError(f"window is not decaying (slope {slope:.3e})")
    return ExponentialFit(
        rate=float(-slope), stderr=float(np.sqrt(var_slope)),
        window=(float(tw[0]), float(tw[-1])), n_points=int(i1 - i0),
    )


@dataclass(frozen=True)
class SaturationResult:
    """Tail average of an echo curve over its final plateau window."""

    mean: float
    stderr: float
    window: tuple[float, float]
    n_points: int


def _saturation_window(times: np.ndarray, rate: float | None, values: np.ndarray):
    t_end = float(times[-1])
    if rate is not None:
        if rate <= 0:
            raise NumericsError(f"rate must be positive, got {rate}")
        if t_end < 10.0 / rate:
            raise NumericsError(
                f"curve too short for saturation: t_end={t_end} < 10/rate={10.0 / rate:.3g}"
            )
        start = max(10.0 / rate, 0.75 * t_end)
    else:
        below = np.nonzero(values < 0.5)[0]
        if below.size == 0:
            raise NumericsError("cannot locate decay: curve never drops below 0.5")
        t_half = float(times[below[0]])
        if t_end < 4.0 * t_half:
            raise NumericsError(
                f"curve too short for saturation: t_end={t_end} < 4*t_half={4 * t_half:.3g}"
            )
        start = 0.75 * t_end
    idx = np.nonzero(times >= start)[0]
    if idx.size == 0:
        raise NumericsError("saturation window contains no samples")
    return idx, t_end


def estimate_saturation(curve: EchoCurve, rate: float | None = None) -> SaturationResult:
    """Mean and standard error over the final plateau window.

    The window is [max(10/rate, 0.75*t_end), t_end]; without a rate the
    curve must extend to at least 4 times the time of first crossing
    below 0.5.  Window points are treated as decorrelated when combining
    per-point standard errors (plateau phases randomize within a few
    kicks for chaotic spectra).
    """
    t = np.asarray(curve.times, dtype=np.float64)
    idx, t_end = _saturation_window(t, rate, np.asarray(curve.values))
    vals = np.asarray(curve.values)[idx]
    mean = float(vals.mean())
    n = idx.size
    if curve.stderr is not None and np.any(curve.stderr[idx] > 0):
        stderr = float(np.sqrt(np.mean(curve.stderr[idx] ** 2) / n))
    elif n > 1:
        stderr = float(vals.std(ddof=1) / math.sqrt(n))
    else:
        stderr = 0.0
    return SaturationResult(
        mean=mean, stderr=stderr, window=(float(t[idx][0]), t_end), n_points=int(n),
    )


@dataclass(frozen=True)
class ShortTimePowerFit:
    """Extrapolated short-time power law deficit ~ prefactor * t^slope."""

    slope: float
    prefactor: float
    n_points: int


def fit_short_time_power(times, deficits, exponent: float,
                         window: tuple[float, float] = (1e-8, 1e-3),
                         order: int = 2) -> ShortTimePowerFit:
    """Power-law fit of a short-time deficit 1 - M(t) on a geometric grid.

    Computes two-point log-slopes inside the deficit window and
    extrapolates them to t -> 0 with a degree-``order`` polynomial bias
    model (Richardson style), which removes the next-order corrections
    that a plain secant fit picks up near the window top.  The prefactor
    is the same extrapolation applied to ln(deficit) - exponent*ln(t),
    with ``exponent`` the theoretical power (2 for M_L, 4 for M_Da).
    """
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(deficits, dtype=np.float64)
    mask = (d >= window[0]) & (d <= window[1]) & (t > 0)
    t, d = t[mask], d[mask]
    if t.size < order + 3:
        raise FitError(
            f"short-time window holds {t.size} points, need {order + 3}")
    slopes = np.log(d[1:] / d[:-1]) / np.log(t[1:] / t[:-1])
    mid = np.sqrt(t[1:] * t[:-1])
    coef, *_ = np.linalg.lstsq(np.vander(mid, order + 1, increasing=True),
                               slopes, rcond=None)
    y = np.log(d) - exponent * np.log(t)
    coef2, *_ = np.linalg.lstsq(np.vander(t, order + 1, increasing=True),
                                y, rcond=None)
    return ShortTimePowerFit(slope=float(coef[0]),
                             prefactor=float(np.exp(coef2[0])),
                             n_points=int(t.size))


@dataclass(frozen=True)
class ScalingPoint:
    """One saturation measurement of the scaling scan.

    x = delta_k * N^{3/2} is the collapse abscissa; regime_flag is 'ok'
    for points usable in the power-law fit, else the exclusion reason.
    """

    n_dim: int
    delta_k: float
    m_inf: float
    stderr: float
    x: float
    regime_flag: str


@dataclass(frozen=True)
class PowerLawFit:
    """Fit of m_inf proportional to x^(-b) on the regime-valid points."""

    exponent_b: float
    stderr: float
    n_points: int


def scan_time_grid(gamma_estimate: float, n_dim: int = 0) -> np.ndarray:
    """Tail-heavy kick grid for one saturation point: t=0 plus an even
    grid across the last 30% of a run long enough to pass the decay and
    the plateau settling time."""
    t_end = int(min(max(SCAN_MIN_KICKS,
                        SCAN_DECAY_FACTOR / max(gamma_estimate, 1e-12),
                        SCAN_PLATEAU_N_FACTOR * n_dim),
                    SCAN_MAX_KICKS))
    t_end += t_end % 2
    start = int(0.70 * t_end)
    start += start % 2
    stride = max(2, 2 * ((t_end - start) // (2 * SCAN_TAIL_POINTS)))
    tail = np.arange(start, t_end + 1, stride, dtype=np.int64)
    return np.concatenate(([0], tail))


def _classify_regime(n_dim: int, delta_k: float, m_inf: float,
                     bandwidth: float) -> str:
    if m_inf < 2.0 / n_dim:
        return "ergodic_floor"
    if m_inf > 0.5:
        return "weak_perturbation"
    if delta_k > 0.1 * bandwidth:
        return "strong_perturbation"
    return "ok"


def scaling_scan(n_dims, delta_ks, k1: float, count: int = 100, seed: int = 0,
                 workers: int = 1, tau: float = 1.0):
    """Saturation scan over (N, delta_k) with the collapse power-law fit.

    For every combination the M_Da tail average is measured via the full
    ensemble pipeline (eigenphase engine, tail window per the golden-rule
    decay estimate) and flagged by regime; the fit of m_inf ~ x^(-b)
    runs on the 'ok' points and is None when fewer than 5 survive.
    """
    points: list[ScalingPoint] = []
    for n_dim in n_dims:
        eig1 = None
        scales = SpectralScales.floquet(n_dim)
        for delta_k in delta_ks:
            map1, map2 = kr_pair(n_dim, k1, delta_k, tau)
            gamma_est = golden_rule_gamma(kr_golden_rule_sigma(map1, map2), scales.delta)
            times = scan_time_grid(gamma_est, n_dim)
            prop = SpectralPropagator(map1, map2, eig1=eig1)
            eig1 = prop.eig1
            spec = EnsembleSpec(count=count, seed=seed, n_dim=n_dim)
            curve, members = ensemble_curve(spec, prop, "M_Da", times,
                                            workers=workers, return_members=True)
            idx, _ = _saturation_window(np.asarray(times, dtype=np.float64),
                                        gamma_est, curve.values)
            tails = members[idx].mean(axis=0)
            m_inf = float(tails.mean())
            stderr = float(tails.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
            points.append(ScalingPoint(
                n_dim=int(n_dim), delta_k=float(delta_k), m_inf=m_inf,
                stderr=stderr, x=float(delta_k) * float(n_dim) ** 1.5,
                regime_flag=_classify_regime(n_dim, delta_k, m_inf, scales.bandwidth),
            ))
    try:
        fit = fit_power_law(points)
    except FitError:
        fit = None
    return points, fit


def fit_power_law(points) -> PowerLawFit:
    """Log-log fit of m_inf versus x on the regime-valid points.

    Returns the positive exponent b of m_inf ~ x^(-b), weighted by the
    relative errors when available.
    """
    valid = [p for p in points if p.regime_flag == "ok"]
    if len(valid) < 5:
        raise FitError(f"fewer than 5 regime-valid points ({len(valid)})")
    x = np.log(np.array([p.x for p in valid]))
    y = np.log(np.array([p.m_inf for p in valid]))
    rel = np.array([p.stderr / p.m_inf if p.m_inf > 0 else 0.0 for p in valid])
    w = 1.0 / rel ** 2 if np.all(rel > 0) else np.ones_like(y)
    slope, _, var_slope = _weighted_line(x, y, w)
    return PowerLawFit(exponent_b=float(-slope), stderr=float(np.sqrt(var_slope)),
                       n_points=len(valid))
