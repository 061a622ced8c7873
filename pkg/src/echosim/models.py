"""Physical testbeds: the torus-quantized kicked rotator and dense Hermitian pairs.

The kicked rotator Hamiltonian is H = p^2/2 + K cos(x) * sum_n delta(t - n*tau)
quantized on the torus with grids x_l = 2*pi*l/N, p_l = 2*pi*l/N and
hbar_eff = 1/N.  One period is the Floquet operator

    U = exp(-i p^2 tau / (2 hbar_eff)) * exp(-i K cos(x) / hbar_eff)

applied as a split step: kick phases in position representation, kinetic
phases in momentum representation, with the unitary FFT in between.

The continuous-time testbed is a pair of dense Hermitian matrices
H2 = H1 + epsilon*V, with H1 a Gaussian Hermitian draw scaled to unit
mean level spacing at band center and V an independent Gaussian
Hermitian draw with ||V||_F = sqrt(N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numkernel import APPLY_DIMENSION_CAP, NumericsError, _is_power_of_two

__all__ = [
    "KickedRotatorMap",
    "HermitianPair",
    "SpectralScales",
    "kr_apply",
    "kr_pair",
    "ct_pair",
    "perturbation_operators",
    "kr_golden_rule_sigma",
    "ct_golden_rule_sigma",
]

TWO_PI = 2.0 * np.pi


class KickedRotatorMap:
    """One-period Floquet propagator of the quantized kicked rotator.

    Parameters: Hilbert dimension N (power of two), kick strength K,
    kick period tau, and Bloch phase offsets theta_x, theta_p in [0, 1)
    shifting the position and momentum grids by a fraction of a cell.
    hbar_eff = 1/N always.  Instances are immutable and safe to share.
    """

    def __init__(self, n_dim: int, kick_strength: float, tau: float = 1.0,
                 theta_x: float = 0.0, theta_p: float = 0.0):
        if not _is_power_of_two(n_dim):
            raise NumericsError(f"N must be a power of two, got {n_dim}")
        if n_dim > APPLY_DIMENSION_CAP:
            raise NumericsError(f"N={n_dim} exceeds split-step cap {APPLY_DIMENSION_CAP}")
        if tau <= 0:
            raise NumericsError(f"tau must be positive, got {tau}")
        if not (0.0 <= theta_x < 1.0 and 0.0 <= theta_p < 1.0):
            raise NumericsError("Bloch offsets must lie in [0, 1)")
        self.N = int(n_dim)
        self.K = float(kick_strength)
        self.tau = float(tau)
        self.theta_x = float(theta_x)
        self.theta_p = float(theta_p)

        l = np.arange(self.N, dtype=np.float64)
        x = TWO_PI * (l + self.theta_x) / self.N
        p = TWO_PI * (l + self.theta_p) / self.N
        hbar = self.hbar_eff
        self._kick_phase = np.exp(-1j * self.K * np.cos(x) / hbar)
        self._kinetic_phase = np.exp(-1j * p * p * self.tau / (2.0 * hbar))
        self._twisted = theta_x != 0.0 or theta_p != 0.0
        if self._twisted:
            self._twist_in = np.exp(-2j * np.pi * self.theta_p * l / self.N)
            self._twist_out = np.exp(-2j * np.pi * self.theta_x * (l + self.theta_p) / self.N)
        for arr in (self._kick_phase, self._kinetic_phase):
            arr.setflags(write=False)

    @property
    def hbar_eff(self) -> float:
        return 1.0 / self.N

    def __eq__(self, other):
        if not isinstance(other, KickedRotatorMap):
            return NotImplemented
        return (self.N, self.K, self.tau, self.theta_x, self.theta_p) == \
               (other.N, other.K, other.tau, other.theta_x, other.theta_p)

    def __repr__(self):
        return (f"KickedRotatorMap(N={self.N}, K={self.K}, tau={self.tau}, "
                f"theta_x={self.theta_x}, theta_p={self.theta_p})")

    def _mul(self, phase: np.ndarray, v: np.ndarray) -> np.ndarray:
        return phase[:, np.newaxis] * v if v.ndim == 2 else phase * v

    def _to_momentum(self, v: np.ndarray) -> np.ndarray:
        if self._twisted:
            v = self._mul(self._twist_in, v)
        out = np.fft.fft(v, axis=0, norm="ortho")
        if self._twisted:
            out = self._mul(self._twist_out, out)
        return out

    def _to_position(self, v: np.ndarray) -> np.ndarray:
        if self._twisted:
            v = self._mul(self._twist_out.conj(), v)
        out = np.fft.ifft(v, axis=0, norm="ortho")
        if self._twisted:
            out = self._mul(self._twist_in.conj(), out)
        return out

    def apply(self, v, direction: str = "forward") -> np.ndarray:
        """Apply one Floquet period (or its adjoint) to a state or (N, m) batch."""
        v = np.asarray(v, dtype=np.complex128)
        if v.shape[0] != self.N:
            raise NumericsError(f"state dimension {v.shape[0]} != map dimension {self.N}")
        if direction == "forward":
            out = self._mul(self._kick_phase, v)
            out = self._to_momentum(out)
            out = self._mul(self._kinetic_phase, out)
            return self._to_position(out)
        if direction == "backward":
            out = self._to_momentum(v)
            out = self._mul(self._kinetic_phase.conj(), out)
            out = self._to_position(out)
            return self._mul(self._kick_phase.conj(), out)
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")

    def apply_n(self, v, n: int, direction: str = "forward") -> np.ndarray:
        """Apply ``n`` Floquet periods."""
        out = np.asarray(v, dtype=np.complex128)
        for _ in range(int(n)):
            out = self.apply(out, direction)
        return out


def kr_apply(kr_map: KickedRotatorMap, v, direction: str = "forward") -> np.ndarray:
    """Functional form of KickedRotatorMap.apply."""
    return kr_map.apply(v, direction)


def kr_pair(n_dim: int, k1: float, delta_k: float, tau: float = 1.0,
            theta_x: float = 0.0, theta_p: float = 0.0):
    """Two kicked-rotator maps sharing grids and tau, with K2 = K1 + delta_k."""
    if delta_k < 0:
        raise NumericsError(f"delta_k must be nonnegative, got {delta_k}")
    m1 = KickedRotatorMap(n_dim, k1, tau, theta_x, theta_p)
    m2 = KickedRotatorMap(n_dim, k1 + delta_k, tau, theta_x, theta_p)
    return m1, m2


@dataclass(frozen=True)
class HermitianPair:
    """Dense Hermitian pair (H1, H2 = H1 + epsilon*V) for continuous-time tests."""

    h1: np.ndarray
    h2: np.ndarray
    epsilon: float
    perturbation_fnorm: float = field(default=0.0)

    def __post_init__(self):
        for name, h in (("h1", self.h1), ("h2", self.h2)):
            if h.ndim != 2 or h.shape[0] != h.shape[1]:
                raise NumericsError(f"{name} must be square")
            defect = float(np.abs(h - h.conj().T).max())
            if defect > 1e-12:
                raise NumericsError(f"{name} is not Hermitian: defect {defect:.3e}")
            h.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.h1.shape[0]


def _gaussian_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (m + m.conj().T) / 2.0


def ct_pair(n_dim: int, epsilon: float, seed: int) -> HermitianPair:
    """Seeded Gaussian Hermitian pair with unit mean level spacing at band center.

    H1 is scaled by sqrt(N)/pi so the semicircle-center spacing is 1; the
    perturbation direction V is an independent draw rescaled to
    ||V||_F = sqrt(N), so sigma_L ~ epsilon for generic states.  The draw
    order (H1 first, then V) is fixed, making the pair a deterministic
    function of (n_dim, epsilon, seed).
    """
    if n_dim < 2:
        raise NumericsError(f"N must be at least 2, got {n_dim}")
    if epsilon < 0:
        raise NumericsError(f"epsilon must be nonnegative, got {epsilon}")
    rng = np.random.default_rng(seed)
    h1 = _gaussian_hermitian(rng, n_dim) * (math.sqrt(n_dim) / math.pi)
    v = _gaussian_hermitian(rng, n_dim)
    v *= math.sqrt(n_dim) / np.linalg.norm(v)
    h2 = h1 + epsilon * v
    return HermitianPair(
        h1=h1, h2=h2, epsilon=float(epsilon),
        perturbation_fnorm=float(np.linalg.norm(h2 - h1)),
    )


def perturbation_operators(pair: HermitianPair):
    """Perturbation operators of the pair.

    Returns (sigma_l_op, sigma_da_op) with sigma_l_op = H1 - H2 and
    sigma_da_op = (i/4)[H1, H2].  Both are Hermitian by construction:
    the commutator is formed as C - C^dag with C = H1 @ H2, which is
    exactly anti-Hermitian in floating point.
    """
    sigma_l = pair.h1 - pair.h2
    c = pair.h1 @ pair.h2
    sigma_da = 0.25j * (c - c.conj().T)
    return sigma_l, sigma_da


@dataclass(frozen=True)
class SpectralScales:
    """Bandwidth B and mean level spacing Delta = B/N of a spectrum."""

    bandwidth: float
    n_levels: int

    @property
    def delta(self) -> float:
        return self.bandwidth / self.n_levels

    @classmethod
    def floquet(cls, n_dim: int) -> "SpectralScales":
        return cls(bandwidth=TWO_PI, n_levels=n_dim)


def kr_golden_rule_sigma(map1: KickedRotatorMap, map2: KickedRotatorMap) -> float:
    """Coupling dispersion feeding the golden-rule width for a Floquet pair.

    The per-period perturbation generator is (K2-K1) cos(x)/hbar_eff.
    With sigma^2 = 2*pi * mean |<u|Sigma|v>|^2 over eigenstate pairs of a
    chaotic map, the Lorentzian spreading width is Gamma = sigma^2/Delta,
    which for these grids evaluates to (delta_k * N)^2 * var(cos) with
    var(cos) = 1/2.
    """
    if (map1.N, map1.tau, map1.theta_x, map1.theta_p) != \
       (map2.N, map2.tau, map2.theta_x, map2.theta_p):
        raise NumericsError("maps must share N, tau, and Bloch offsets")
    n = map1.N
    delta_k = map2.K - map1.K
    x = TWO_PI * (np.arange(n) + map1.theta_x) / n
    c = np.cos(x)
    var_cos = float(np.mean(c * c) - np.mean(c) ** 2)
    mean_sq_element = (delta_k * n) ** 2 * var_cos / n
    return math.sqrt(TWO_PI * mean_sq_element)


def ct_golden_rule_sigma(pair: HermitianPair) -> float:
    """Coupling dispersion for a Hermitian pair (use with Delta = 1 at band center)."""
    sigma_l_op = pair.h1 - pair.h2
    n = pair.dim
    tr1 = float(np.trace(sigma_l_op).real) / n
    tr2 = float(np.einsum("ij,ji->", sigma_l_op, sigma_l_op).real) / n
    mean_sq_element = max(tr2 - tr1 * tr1, 0.0) / n
    return math.sqrt(TWO_PI * mean_sq_element)
