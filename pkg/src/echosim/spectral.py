"""Eigenbasis overlap analysis.

Given eigendecompositions of the unperturbed and perturbed propagators,
this module builds the overlap matrix |<u|v>|^2, the local density of
states (LDOS) histogram over quasi-energy differences, its Lorentzian
fit, and the long-time saturation predictors together with brute-force
saturation sums used as oracles:

* m_Da saturation (amplitude level):  (1/N) sum_{u,v} |<u|v>|^4
* M_L saturation for coefficients c:  the exact quadruple sum over
  (u, u', u'', v), evaluated in factorized O(N^2) form with the literal
  O(N^4) sum retained as a cross-check.
* Lorentzian LDOS with golden-rule width Gamma = sigma^2 / Delta and the
  freeze level max[(Delta/(pi*Gamma))^2, 1/N].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .numkernel import EigenSystem, NumericsError

__all__ = [
    "FitError",
    "NoPeakError",
    "OverlapMatrix",
    "LdosHistogram",
    "LorentzianFit",
    "overlap_matrix",
    "mda_saturation_oracle",
    "ml_saturation_sum",
    "ml_saturation_sum_naive",
    "ldos_histogram",
    "lorentzian_fit",
    "synthetic_lorentzian_histogram",
    "golden_rule_gamma",
    "saturation_predict",
    "min_eigenphase_gap",
]

TWO_PI = 2.0 * np.pi
STOCHASTICITY_ATOL = 1e-8
ML_SUM_DIMENSION_CAP = 64
ML_NAIVE_DIMENSION_CAP = 32


class FitError(RuntimeError):
    """A least-squares fit failed or was not applicable."""


class NoPeakError(FitError):
    """The binned density shows no peak to fit."""


@dataclass(frozen=True)
class OverlapMatrix:
    """Eigenbasis overlaps between two propagators.

    entries[u, v] = |<u|v>|^2 (doubly stochastic within 1e-8); the
    complex overlaps <u|v> are kept alongside for the saturation sums
    that need phases.  u_phases / v_phases hold the eigenphases (or
    eigenvalues, for Hermitian input) of the two systems.
    """

    entries: np.ndarray
    overlaps: np.ndarray
    u_phases: np.ndarray
    v_phases: np.ndarray
    stochasticity_defect: float

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def overlap_matrix(eig_u: EigenSystem, eig_v: EigenSystem) -> OverlapMatrix:
    """Overlap matrix between two orthonormal eigenbases."""
    if eig_u.dim != eig_v.dim:
        raise NumericsError(
            f"dimension mismatch: {eig_u.dim} vs {eig_v.dim}"
        )
    w = eig_u.vectors.conj().T @ eig_v.vectors
    entries = np.abs(w) ** 2
    row_defect = np.abs(entries.sum(axis=1) - 1.0).max()
    col_defect = np.abs(entries.sum(axis=0) - 1.0).max()
    defect = float(max(row_defect, col_defect))
    if defect > STOCHASTICITY_ATOL:
        raise NumericsError(
            f"overlap matrix is not doubly stochastic: defect {defect:.3e}"
        )
    return OverlapMatrix(
        entries=entries, overlaps=w,
        u_phases=np.asarray(eig_u.values, dtype=np.float64),
        v_phases=np.asarray(eig_v.values, dtype=np.float64),
        stochasticity_defect=defect,
    )


def mda_saturation_oracle(ov: OverlapMatrix) -> float:
    """Long-time M_Da amplitude saturation: (1/N) * sum |<u|v>|^4.

    This is the exact ensemble-averaged freeze level of the echo
    amplitude; it lies in [1/N, 1] by the stochasticity bounds.
    """
    return float((ov.entries ** 2).sum() / ov.dim)


def ml_saturation_sum(ov: OverlapMatrix, c) -> float:
    """Time-averaged M_L saturation for a fixed coefficient vector c.

    Evaluates the quadruple sum over (u, u', u'', v) of
    c_u^* c_{u''} |c_{u'}|^2 <u|v><v|u'><u'|v><v|u''> using complex
    overlaps, factorized to O(N^2):
        sum_v |a_v|^2 p_v,  a_v = sum_u c_u^* <u|v>,
                            p_v = sum_u |c_u|^2 |<u|v>|^2.
    """
    n = ov.dim
    if n > ML_SUM_DIMENSION_CAP:
        raise NumericsError(f"dimension {n} exceeds cap {ML_SUM_DIMENSION_CAP}")
    c = np.asarray(c, dtype=np.complex128)
    if c.shape != (n,):
        raise NumericsError(f"coefficient vector must have shape ({n},)")
    a = c.conj() @ ov.overlaps
    p = (np.abs(c) ** 2) @ ov.entries
    return float(((np.abs(a) ** 2) * p).sum())


def ml_saturation_sum_naive(ov: OverlapMatrix, c) -> float:
    """Literal O(N^4) evaluation of the M_L saturation sum (cross-check)."""
    n = ov.dim
    if n > ML_NAIVE_DIMENSION_CAP:
        raise NumericsError(f"dimension {n} exceeds cap {ML_NAIVE_DIMENSION_CAP}")
    c = np.asarray(c, dtype=np.complex128)
    w = ov.overlaps
    total = 0.0 + 0.0j
    for u in range(n):
        for u2 in range(n):
            for u3 in range(n):
                for v in range(n):
                    total += (c[u].conjugate() * c[u3] * abs(c[u2]) ** 2
                              * w[u, v] * w[u2, v].conjugate()
                              * w[u2, v] * w[u3, v].conjugate())
    if abs(total.imag) > 1e-10:
        raise NumericsError(f"saturation sum has imaginary part {total.imag:.3e}")
    return float(total.real)


@dataclass(frozen=True)
class LdosHistogram:
    """Binned mean overlap versus quasi-energy difference in (-pi, pi].

    density[b] is the mean of |<u|v>|^2 over the pairs falling in bin b,
    which makes sum(density * bin_width / Delta) = 1 up to sampling
    noise.  Bins with zero counts carry density 0 and are excluded from
    fits.
    """

    bin_centers: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    bin_width: float
    mean_spacing: float


def _bin_grid(bin_width: float) -> tuple[int, float]:
    nbins = int(np.ceil(TWO_PI / bin_width))
    if nbins % 2 == 0:
        nbins += 1
    return nbins, TWO_PI / nbins


def _wrap_phase_diff(d: np.ndarray) -> np.ndarray:
    out = np.mod(d + np.pi, TWO_PI) - np.pi
    out[out == -np.pi] = np.pi
    return out


def ldos_histogram(ov: OverlapMatrix, bin_width: float) -> LdosHistogram:
    """Histogram of mean overlap versus wrapped eigenphase difference."""
    delta = TWO_PI / ov.dim
    if bin_width < delta / 4 - 1e-15:
        raise NumericsError(
            f"bin_width {bin_width:.3e} is below Delta/4 = {delta / 4:.3e}"
        )
    nbins, width = _bin_grid(bin_width)
    diffs = _wrap_phase_diff(ov.u_phases[:, np.newaxis] - ov.v_phases[np.newaxis, :])
    idx = np.clip(((diffs + np.pi) / width).astype(np.int64), 0, nbins - 1)
    weights = np.bincount(idx.ravel(), weights=ov.entries.ravel(), minlength=nbins)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    density = np.zeros(nbins)
    nonzero = counts > 0
    density[nonzero] = weights[nonzero] / counts[nonzero]
    centers = (np.arange(nbins) - (nbins - 1) / 2.0) * width
    return LdosHistogram(
        bin_centers=centers, density=density, counts=counts,
        bin_width=width, mean_spacing=delta,
    )


def synthetic_lorentzian_histogram(gamma: float, mean_spacing: float,
                                   bin_width: float, noise: float = 0.0,
                                   seed: int = 0,
                                   counts_per_bin: int = 64) -> LdosHistogram:
    """Histogram sampled from an exact Lorentzian profile (self-test input).

    With noise > 0 the densities get multiplicative Gaussian jitter of
    that relative size.
    """
    if gamma <= 0 or mean_spacing <= 0:
        raise NumericsError("gamma and mean_spacing must be positive")
    nbins, width = _bin_grid(bin_width)
    centers = (np.arange(nbins) - (nbins - 1) / 2.0) * width
    half = gamma / 2.0
    density = (mean_spacing / np.pi) * half / (centers ** 2 + half ** 2)
    if noise > 0:
        rng = np.random.default_rng(seed)
        density = density * (1.0 + noise * rng.standard_normal(nbins))
        density = np.maximum(density, 0.0)
    return LdosHistogram(
        bin_centers=centers, density=density,
        counts=np.full(nbins, counts_per_bin),
        bin_width=width, mean_spacing=mean_spacing,
    )


@dataclass(frozen=True)
class LorentzianFit:
    """Fitted Lorentzian rho(E) = amplitude * (Gamma/2) / (E^2 + (Gamma/2)^2)."""

    gamma: float
    amplitude: float
    rms_residual: float


def _initial_gamma(centers: np.ndarray, density: np.ndarray) -> float:
    peak_idx = int(np.argmax(density))
    peak = density[peak_idx]
    if peak <= 0:
        raise NoPeakError("no peak: density is empty")
    half = peak / 2.0
    crossings = []
    for step in (1, -1):
        i = peak_idx
        while 0 <= i + step < centers.size:
            i += step
            if density[i] < half:
                crossings.append(abs(centers[i] - centers[peak_idx]))
                break
    if not crossings:
        raise NoPeakError("no peak: density never drops below half height")
    return 2.0 * float(np.mean(crossings))


def lorentzian_fit(hist: LdosHistogram) -> LorentzianFit:
    """Least-squares Lorentzian fit of the binned density.

    Fits on the central region |E| <= min(pi/2, 20*Gamma_init), with
    Gamma_init taken from the half-height crossing.  Requires at least 8
    nonempty bins; flat input raises NoPeakError.
    """
    filled = hist.counts > 0
    if int(filled.sum()) < 8:
        raise FitError(f"need at least 8 nonempty bins, got {int(filled.sum())}")
    centers = hist.bin_centers[filled]
    density = hist.density[filled]
    peak = float(density.max())
    if peak <= 0 or peak < 2.0 * float(np.median(density)):
        raise NoPeakError("no peak: density is flat")
    gamma0 = _initial_gamma(centers, density)
    window = np.abs(centers) <= min(np.pi / 2, 20.0 * gamma0)
    if int(window.sum()) < 4:
        window = np.abs(centers) <= np.pi / 2
    x = centers[window]
    y = density[window]

    def model(e, gamma, amplitude):
        half = gamma / 2.0
        return amplitude * half / (e ** 2 + half ** 2)

    try:
        popt, _ = curve_fit(
            model, x, y, p0=(gamma0, peak * gamma0 / 2.0),
            bounds=((1e-12, 0.0), (TWO_PI, np.inf)), maxfev=5000,
        )
    except RuntimeError as exc:
        resid = float(np.sqrt(np.mean((model(x, gamma0, peak * gamma0 / 2) - y) ** 2)))
        raise FitError(
            f"Lorentzian fit did not converge (initial rms residual {resid:.3e})"
        ) from exc
    gamma, amplitude = float(popt[0]), float(popt[1])
    rms = float(np.sqrt(np.mean((model(x, gamma, amplitude) - y) ** 2)))
    return LorentzianFit(gamma=gamma, amplitude=amplitude, rms_residual=rms)


def golden_rule_gamma(sigma_l: float, delta: float) -> float:
    """Golden-rule spreading width Gamma = sigma^2 / Delta.

    The identity holds with sigma^2 = 2*pi * mean squared off-diagonal
    coupling matrix element (see the per-model helpers in models.py).
    """
    if delta <= 0:
        raise NumericsError(f"Delta must be positive, got {delta}")
    if sigma_l < 0:
        raise NumericsError(f"sigma must be nonnegative, got {sigma_l}")
    return sigma_l * sigma_l / delta


def saturation_predict(gamma: float, delta: float, n_dim: int,
                       bandwidth: float = TWO_PI) -> float:
    """Predicted long-time M_Da freeze level max[(Delta/(pi*Gamma))^2, 1/N].

    Monotone nonincreasing in Gamma; equals the ergodic value 1/N for
    all Gamma >= bandwidth/(pi*sqrt(N)).
    """
    if gamma <= 0 or delta <= 0 or n_dim <= 0 or bandwidth <= 0:
        raise NumericsError("all arguments must be positive")
    return max((delta / (math.pi * gamma)) ** 2, 1.0 / n_dim)


def min_eigenphase_gap(phases) -> float:
    """Smallest gap between eigenphases on the circle (quasi-degeneracy guard)."""
    p = np.sort(np.asarray(phases, dtype=np.float64))
    if p.size < 2:
        return TWO_PI
    gaps = np.diff(p)
    wrap = TWO_PI - (p[-1] - p[0])
    return float(min(gaps.min(), wrap))
