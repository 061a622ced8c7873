from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg

from echosim import numkernel as nk
from echosim.echo import (
    CtPropagator,
    EchoCurve,
    FloquetKickEngine,
    SpectralPropagator,
    amplitude_ct,
    amplitude_floquet,
    canonical_sequence,
    echo_curve,
    short_time_rates,
)
from echosim.models import HermitianPair, ct_pair, kr_pair

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def haar_state(n, seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return psi / np.linalg.norm(psi)


class TestSequences:
    def test_loschmidt_sequence(self):
        seq = canonical_sequence("M_L")
        assert len(seq.segments) == 2
        assert (seq.segments[0].generator, seq.segments[0].sign) == (1, -1)
        assert (seq.segments[1].generator, seq.segments[1].sign) == (2, +1)
        assert all(s.fraction == 1 for s in seq.segments)

    def test_two_interval_sequence(self):
        seq = canonical_sequence("M_Da")
        assert len(seq.segments) == 4
        assert all(s.fraction == Fraction(1, 2) for s in seq.segments)
        assert [s.generator for s in seq.segments] == [1, 2, 1, 2]
        assert [s.sign for s in seq.segments] == [-1, -1, +1, +1]

    def test_adjoint_conjugates_amplitude(self):
        maps = kr_pair(32, 57.0, 2e-3)
        psi = haar_state(32, 8)
        for kind in ("M_L", "M_Da"):
            seq = canonical_sequence(kind)
            amp = amplitude_floquet(seq, maps, psi, 8)
            adj = amplitude_floquet(seq.adjoint(), maps, psi, 8)
            assert abs(adj - np.conj(amp)) <= 1e-12

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError, match="kind"):
            canonical_sequence("M_X")


class TestAmplitudeFloquet:
    def test_zero_kicks(self):
        maps = kr_pair(16, 57.0, 1e-3)
        psi = haar_state(16, 1)
        amp = amplitude_floquet(canonical_sequence("M_Da"), maps, psi, 0)
        assert abs(amp - 1.0) <= 1e-12

    def test_perfect_reversal(self):
        maps = kr_pair(32, 57.0, 0.0)
        psi = haar_state(32, 2)
        seq = canonical_sequence("M_Da")
        for n in (2, 8, 20):
            assert abs(amplitude_floquet(seq, maps, psi, n) - 1.0) <= 1e-12

    def test_dense_matrix_oracle(self):
        maps = kr_pair(32, 57.0, 3e-3)
        u1 = nk.densify(maps[0].apply, 32)
        u2 = nk.densify(maps[1].apply, 32)
        psi = haar_state(32, 5)
        n = 6
        k = n // 2
        for kind, product in (
            ("M_L", np.linalg.matrix_power(u2.conj().T, n) @ np.linalg.matrix_power(u1, n)),
            ("M_Da", np.linalg.matrix_power(u2.conj().T, k)
                     @ np.linalg.matrix_power(u1.conj().T, k)
                     @ np.linalg.matrix_power(u2, k)
                     @ np.linalg.matrix_power(u1, k)),
        ):
            amp = amplitude_floquet(canonical_sequence(kind), maps, psi, n)
            assert abs(amp - np.vdot(psi, product @ psi)) <= 1e-10

    def test_rejects_odd_kicks_for_half_fractions(self):
        maps = kr_pair(16, 57.0, 1e-3)
        psi = haar_state(16, 3)
        with pytest.raises(nk.NumericsError, match="even"):
            amplitude_floquet(canonical_sequence("M_Da"), maps, psi, 5)

    def test_modulus_bounded(self):
        maps = kr_pair(32, 57.0, 5e-3)
        psi = haar_state(32, 6)
        for kind in ("M_L", "M_Da"):
            amp = amplitude_floquet(canonical_sequence(kind), maps, psi, 10)
            assert abs(amp) <= 1.0 + 1e-12


class TestAmplitudeCt:
    def test_zero_time(self):
        pair = ct_pair(16, 0.4, seed=2)
        psi = haar_state(16, 4)
        assert abs(amplitude_ct(canonical_sequence("M_Da"), pair, psi, 0.0) - 1.0) <= 1e-12

    def test_identical_hamiltonians_cancel(self):
        pair = ct_pair(16, 0.0, seed=2)
        psi = haar_state(16, 4)
        for t in (0.3, 1.7, 6.0):
            amp = amplitude_ct(canonical_sequence("M_Da"), pair, psi, t)
            assert abs(amp - 1.0) <= 1e-12

    def test_dense_exponential_oracle(self):
        pair = ct_pair(16, 0.5, seed=6)
        psi = haar_state(16, 7)
        t = 0.5
        expm = scipy.linalg.expm
        direct = np.vdot(psi, expm(1j * pair.h2 * t) @ expm(-1j * pair.h1 * t) @ psi)
        amp = amplitude_ct(canonical_sequence("M_L"), pair, psi, t)
        assert abs(abs(amp) ** 2 - abs(direct) ** 2) <= 1e-11
        half = t / 2
        direct_da = np.vdot(psi, expm(1j * pair.h2 * half) @ expm(1j * pair.h1 * half)
                            @ expm(-1j * pair.h2 * half) @ expm(-1j * pair.h1 * half) @ psi)
        amp_da = amplitude_ct(canonical_sequence("M_Da"), pair, psi, t)
        assert abs(amp_da - direct_da) <= 1e-11


class TestShortTimeRates:
    def test_pauli_z_dispersion(self):
        pair = HermitianPair(h1=PAULI_Z.copy(), h2=np.zeros((2, 2), dtype=complex),
                             epsilon=1.0)
        psi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
        sigma_l, _ = short_time_rates(pair, psi)
        assert sigma_l == pytest.approx(1.0, abs=1e-12)

    def test_commuting_pair(self):
        h1 = np.diag([1.0, 2.0]).astype(complex)
        h2 = np.diag([3.0, 1.0]).astype(complex)
        pair = HermitianPair(h1=h1, h2=h2, epsilon=1.0)
        _, sigma_da = short_time_rates(pair, haar_state(2, 1))
        assert sigma_da == 0.0

    def test_pauli_commutator_rate(self):
        pair = HermitianPair(h1=PAULI_X.copy(), h2=PAULI_Z.copy(), epsilon=1.0)
        psi = np.array([1.0, 0.0], dtype=complex)
        _, sigma_da = short_time_rates(pair, psi)
        assert sigma_da == pytest.approx(4.0 ** -0.25, abs=1e-12)

    def test_rejects_unnormalized(self):
        pair = ct_pair(8, 0.1, seed=1)
        with pytest.raises(nk.NumericsError, match="normalized"):
            short_time_rates(pair, np.ones(8, dtype=complex))


class TestEchoCurve:
    def test_zero_perturbation_constant(self):
        maps = kr_pair(32, 57.0, 0.0)
        psi = haar_state(32, 9)
        curve = echo_curve("floquet", maps, psi, "M_L", np.arange(0, 21))
        assert np.abs(curve.values - 1.0).max() <= 1e-12

    def test_single_time_zero(self):
        maps = kr_pair(16, 57.0, 1e-3)
        curve = echo_curve("floquet", maps, haar_state(16, 1), "M_Da", [0])
        assert curve.values[0] == pytest.approx(1.0, abs=1e-12)

    def test_incremental_matches_from_scratch(self):
        maps = kr_pair(64, 57.0, 2e-3)
        psi = haar_state(64, 11)
        times = np.arange(0, 22, 2)
        curve = echo_curve("floquet", maps, psi, "M_Da", times, engine="kick")
        seq = canonical_sequence("M_Da")
        for i, n in enumerate(times):
            direct = abs(amplitude_floquet(seq, maps, psi, int(n))) ** 2
            assert abs(curve.values[i] - direct) <= 1e-12

    def test_engines_agree(self):
        maps = kr_pair(64, 57.0, 2e-3)
        psi = haar_state(64, 12)
        for kind, times in (("M_L", np.arange(0, 31)), ("M_Da", np.arange(0, 42, 2))):
            kick = echo_curve("floquet", maps, psi, kind, times, engine="kick")
            spec = echo_curve("floquet", maps, psi, kind, times, engine="spectral")
            assert np.abs(kick.values - spec.values).max() <= 1e-11

    def test_intensities_bounded(self):
        maps = kr_pair(64, 57.0, 8e-3)
        psi = haar_state(64, 13)
        curve = echo_curve("floquet", maps, psi, "M_L", np.arange(0, 101))
        assert curve.values.min() >= 0.0
        assert curve.values.max() <= 1.0 + 1e-9

    def test_swap_and_reverse_symmetry(self):
        # m_Da is invariant in modulus under H1 <-> H2 with conjugation and
        # time reversal of the sequence
        pair = ct_pair(12, 0.4, seed=3)
        swapped = HermitianPair(h1=pair.h2.copy(), h2=pair.h1.copy(), epsilon=pair.epsilon)
        psi = haar_state(12, 5)
        seq = canonical_sequence("M_Da")
        amp = amplitude_ct(seq, pair, psi, 0.8)
        amp_swapped = amplitude_ct(seq.adjoint(), swapped, psi, 0.8)
        assert abs(abs(amp) - abs(amp_swapped)) <= 1e-12

    def test_ct_curve_matches_amplitude(self):
        pair = ct_pair(12, 0.4, seed=8)
        psi = haar_state(12, 6)
        times = np.linspace(0.0, 1.0, 6)
        curve = echo_curve("ct", pair, psi, "M_Da", times)
        for i, t in enumerate(times):
            amp = amplitude_ct(canonical_sequence("M_Da"), pair, psi, float(t))
            assert abs(curve.values[i] - abs(amp) ** 2) <= 1e-12

    def test_times_must_start_at_zero(self):
        maps = kr_pair(16, 57.0, 1e-3)
        with pytest.raises(nk.NumericsError, match="start at 0"):
            echo_curve("floquet", maps, haar_state(16, 1), "M_L", [2, 4])

    def test_curve_validation(self):
        with pytest.raises(nk.NumericsError, match="t=0"):
            EchoCurve(times=np.array([0, 1]), values=np.array([0.9, 0.8]),
                      stderr=None, kind="M_L")
        with pytest.raises(nk.NumericsError, match="intensities"):
            EchoCurve(times=np.array([0, 1]), values=np.array([1.0, 1.5]),
                      stderr=None, kind="M_L")


class TestEngines:
    def test_kick_engine_batch(self):
        maps = kr_pair(32, 57.0, 2e-3)
        eng = FloquetKickEngine(*maps)
        batch = np.stack([haar_state(32, s) for s in (1, 2, 3)], axis=1)
        times = np.arange(0, 11)
        out = eng.curve(batch, "M_L", times)
        assert out.shape == (11, 3)
        for j in range(3):
            single = echo_curve("floquet", maps, batch[:, j], "M_L", times, engine="kick")
            assert np.abs(out[:, j] - single.values).max() <= 1e-13

    def test_spectral_propagator_exposes_eigs(self):
        maps = kr_pair(32, 57.0, 1e-3)
        prop = SpectralPropagator(*maps)
        assert prop.eig1.dim == 32
        assert prop.eig2.residual <= 1e-9

    def test_ct_propagator_batch(self):
        pair = ct_pair(12, 0.3, seed=4)
        prop = CtPropagator(pair)
        batch = np.stack([haar_state(12, s) for s in (5, 6)], axis=1)
        out = prop.curve(batch, "M_L", np.linspace(0.0, 0.5, 4))
        assert out.shape == (4, 2)
        assert np.abs(out[0] - 1.0).max() <= 1e-12
