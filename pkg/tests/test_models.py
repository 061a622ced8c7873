import numpy as np
import pytest

from echosim import numkernel as nk
from echosim.models import (
    HermitianPair,
    KickedRotatorMap,
    SpectralScales,
    ct_golden_rule_sigma,
    ct_pair,
    kr_apply,
    kr_golden_rule_sigma,
    kr_pair,
    perturbation_operators,
)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def haar_state(n, seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return psi / np.linalg.norm(psi)


class TestKickedRotatorMap:
    def test_effective_planck(self):
        kr = KickedRotatorMap(64, 57.0)
        assert kr.hbar_eff * kr.N == 1.0

    def test_free_map_momentum_eigenstate_phase(self):
        # K=0: momentum eigenstate l picks up exp(-2i pi^2 l^2 / N)
        n, l = 32, 5
        kr = KickedRotatorMap(n, 0.0)
        j = np.arange(n)
        psi = np.exp(2j * np.pi * l * j / n) / np.sqrt(n)
        out = kr.apply(psi)
        expected = np.exp(-2j * np.pi ** 2 * l ** 2 / n) * psi
        assert np.abs(out - expected).max() <= 1e-12

    def test_backward_inverts_forward(self):
        kr = KickedRotatorMap(64, 57.0)
        psi = haar_state(64, 3)
        assert np.abs(kr.apply(kr.apply(psi), "backward") - psi).max() <= 1e-12

    @pytest.mark.parametrize("n_dim,kick", [(64, 57.0), (256, 57.0)])
    def test_densified_unitarity(self, n_dim, kick):
        kr = KickedRotatorMap(n_dim, kick)
        u = nk.densify(kr.apply, n_dim)
        assert np.linalg.norm(u.conj().T @ u - np.eye(n_dim)) <= 1e-10

    def test_norm_preservation_many_states(self):
        for n_dim in (64, 256):
            kr = KickedRotatorMap(n_dim, 57.0)
            rng = np.random.default_rng(n_dim)
            batch = rng.standard_normal((n_dim, 1000)) + 1j * rng.standard_normal((n_dim, 1000))
            batch /= np.linalg.norm(batch, axis=0)
            out = kr.apply(batch)
            assert np.abs(np.linalg.norm(out, axis=0) - 1.0).max() <= 1e-12

    def test_linearity(self):
        kr = KickedRotatorMap(32, 12.0)
        u, v = haar_state(32, 1), haar_state(32, 2)
        a, b = 0.3 - 0.7j, 1.1 + 0.2j
        lhs = kr.apply(a * u + b * v)
        rhs = a * kr.apply(u) + b * kr.apply(v)
        assert np.abs(lhs - rhs).max() <= 1e-12

    def test_fast_path_matches_dense_matrix(self):
        kr = KickedRotatorMap(64, 57.0)
        u = nk.densify(kr.apply, 64)
        psi = haar_state(64, 9)
        assert np.abs(kr.apply(psi) - u @ psi).max() <= 1e-10

    def test_bloch_offsets_stay_unitary(self):
        kr = KickedRotatorMap(64, 57.0, theta_x=0.3, theta_p=0.25)
        u = nk.densify(kr.apply, 64)
        assert np.linalg.norm(u.conj().T @ u - np.eye(64)) <= 1e-10
        psi = haar_state(64, 4)
        assert np.abs(kr.apply(kr.apply(psi), "backward") - psi).max() <= 1e-12

    def test_rejects_bad_dimension(self):
        with pytest.raises(nk.NumericsError, match="power of two"):
            KickedRotatorMap(48, 5.0)
        kr = KickedRotatorMap(16, 5.0)
        with pytest.raises(nk.NumericsError, match="dimension"):
            kr.apply(np.zeros(8, dtype=complex))

    def test_grid_convention_is_statistically_equivalent(self):
        # Same model with 1-based grid labels (x_l, p_l at l = 1..N).  The
        # two labelings are not related by an exact unitary frame change
        # (the kinetic phase at the wrap slot differs), but ensemble echo
        # curves agree at desk tolerances.
        n, k1, dk, count, nmax = 64, 57.0, 1e-3, 128, 24
        map1, map2 = kr_pair(n, k1, dk)
        l = np.arange(1, n + 1, dtype=float)
        kin_b = np.exp(-2j * np.pi ** 2 * l ** 2 / n)
        kick_b1 = np.exp(-1j * k1 * n * np.cos(2 * np.pi * l / n))
        kick_b2 = np.exp(-1j * (k1 + dk) * n * np.cos(2 * np.pi * l / n))

        def apply_b(kick, v):
            return np.fft.ifft(kin_b[:, None] * np.fft.fft(kick[:, None] * v, axis=0,
                                                           norm="ortho"),
                               axis=0, norm="ortho")

        rng = np.random.default_rng(2718)
        batch = rng.standard_normal((n, count)) + 1j * rng.standard_normal((n, count))
        batch /= np.linalg.norm(batch, axis=0)
        sa1 = sa2 = batch
        sb1 = sb2 = batch
        for _ in range(nmax):
            sa1, sa2 = map1.apply(sa1), map2.apply(sa2)
            sb1, sb2 = apply_b(kick_b1, sb1), apply_b(kick_b2, sb2)
        ml_a = (np.abs(np.sum(sa2.conj() * sa1, axis=0)) ** 2).mean()
        ml_b = (np.abs(np.sum(sb2.conj() * sb1, axis=0)) ** 2).mean()
        assert abs(ml_a - ml_b) <= 0.01


class TestKrPair:
    def test_zero_perturbation_identical(self):
        m1, m2 = kr_pair(64, 57.0, 0.0)
        psi = haar_state(64, 5)
        assert np.abs(m1.apply(psi) - m2.apply(psi)).max() <= 1e-15

    def test_reference_parameter_set(self):
        # headline instance: N=8192, K1=57, deltaK=5e-5
        m1, m2 = kr_pair(8192, 57.0, 5e-5)
        assert m2.K - m1.K == pytest.approx(5e-5)
        assert m1.hbar_eff == 1.0 / 8192
        psi = haar_state(8192, 0)
        assert abs(np.linalg.norm(m2.apply(psi)) - 1.0) <= 1e-12

    def test_rejects_negative_delta(self):
        with pytest.raises(nk.NumericsError, match="nonnegative"):
            kr_pair(64, 57.0, -1e-3)


class TestCtPair:
    def test_zero_epsilon_exact_equality(self):
        pair = ct_pair(16, 0.0, seed=4)
        assert np.array_equal(pair.h1, pair.h2)

    def test_deterministic_in_seed(self):
        a = ct_pair(32, 0.5, seed=12)
        b = ct_pair(32, 0.5, seed=12)
        assert np.array_equal(a.h1, b.h1) and np.array_equal(a.h2, b.h2)
        c = ct_pair(32, 0.5, seed=13)
        assert not np.array_equal(a.h1, c.h1)

    def test_perturbation_scale(self):
        pair = ct_pair(64, 0.1, seed=1)
        # the perturbation direction carries ||V||_F = sqrt(N)
        assert pair.perturbation_fnorm == pytest.approx(0.1 * np.sqrt(64), abs=1e-12)

    def test_hermitian_and_unit_center_spacing(self):
        pair = ct_pair(128, 0.0, seed=5)
        assert np.abs(pair.h1 - pair.h1.conj().T).max() == 0.0
        values = np.linalg.eigvalsh(pair.h1)
        center = values[np.abs(values) < 0.25 * np.abs(values).max()]
        spacing = np.diff(np.sort(center)).mean()
        assert 0.7 <= spacing <= 1.3


class TestPerturbationOperators:
    def test_commuting_pair_gives_zero_commutator(self):
        h1 = np.diag([1.0, 2.0, 3.0]).astype(complex)
        h2 = np.diag([2.0, 1.0, 5.0]).astype(complex)
        pair = HermitianPair(h1=h1, h2=h2, epsilon=1.0)
        sigma_l, sigma_da = perturbation_operators(pair)
        assert np.abs(sigma_da).max() <= 1e-15
        assert np.abs(sigma_l - (h1 - h2)).max() == 0.0

    def test_pauli_algebra(self):
        pair = HermitianPair(h1=PAULI_X.copy(), h2=PAULI_Z.copy(), epsilon=1.0)
        _, sigma_da = perturbation_operators(pair)
        assert np.abs(sigma_da - PAULI_Y / 2.0).max() <= 1e-15

    def test_hermiticity_random(self):
        pair = ct_pair(16, 0.3, seed=9)
        sigma_l, sigma_da = perturbation_operators(pair)
        assert np.abs(sigma_l - sigma_l.conj().T).max() <= 1e-12
        assert np.abs(sigma_da - sigma_da.conj().T).max() <= 1e-12


class TestSpectralScales:
    def test_floquet(self):
        scales = SpectralScales.floquet(256)
        assert scales.bandwidth == pytest.approx(2 * np.pi)
        assert scales.delta == pytest.approx(2 * np.pi / 256)


class TestGoldenRuleSigmas:
    def test_kr_sigma_closed_form(self):
        # Gamma = sigma^2/Delta must equal (deltaK*N)^2 * var(cos) with
        # var(cos) = 1/2 on these grids
        m1, m2 = kr_pair(256, 57.0, 1e-3)
        sigma = kr_golden_rule_sigma(m1, m2)
        delta = 2 * np.pi / 256
        gamma = sigma ** 2 / delta
        assert gamma == pytest.approx((1e-3 * 256) ** 2 / 2.0, rel=1e-12)

    def test_ct_sigma_scales_with_epsilon(self):
        a = ct_golden_rule_sigma(ct_pair(64, 0.1, seed=3))
        b = ct_golden_rule_sigma(ct_pair(64, 0.2, seed=3))
        assert b / a == pytest.approx(2.0, rel=1e-10)
