import numpy as np
import pytest

from relaxbl.linalg import eigen_small, subspace_gap
from relaxbl.models import (
    JinXinModel,
    LinearRelaxationSystem,
    default_gkc_samples,
    derive_structure,
    gkc_sample_ratio,
    jinxin_as_linear,
    validate,
)


def three_wave_system(epsilon=1e-6, with_bc=True):
    """u_t + v_x = 0, v_t + (u+p)_x = 0, p_t + (v+p)_x = -p/eps with
    u(0,t) = -sin t and v(0,t) + 2 p(0,t) = 0."""
    a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    q = np.diag([0.0, 0.0, -1.0])
    b = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 2.0]]) if with_bc else None
    bc = (lambda t: np.array([-np.sin(t), 0.0])) if with_bc else None
    return LinearRelaxationSystem(
        n=3, r=1, a=a, q=q, b=b, bc_data=bc,
        init=lambda x: np.stack([2 * np.sin(x), 0 * x, 0 * x], axis=-1),
        epsilon=epsilon,
    )


def interface_wave_system(epsilon=1.0):
    """u_t - u_x + v_x = 0, v_t + u_x + p_x = -v/eps, p_t + v_x = -p/eps."""
    a = np.array([[-1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    q = np.diag([0.0, -1.0, -1.0])
    return LinearRelaxationSystem(
        n=3, r=2, a=a, q=q,
        init=lambda x: np.stack([np.sin(np.pi * x), 0 * x, 0 * x], axis=-1),
        epsilon=epsilon,
    )


class TestValidate:
    def test_three_wave_passes(self):
        rep = validate(three_wave_system())
        assert rep.ok, rep.summary()
        # n_plus = 2 cross-checked against an independent eigenvalue oracle.
        n_plus = int(np.sum(np.linalg.eigvals(three_wave_system().a).real > 0))
        assert n_plus == 2

    def test_positive_s_fails(self):
        sys = three_wave_system()
        sys.q = np.diag([0.0, 0.0, +1.0])
        rep = validate(sys)
        assert not rep.ok
        assert any("s_negative_definite" == c.name for c in rep.failures())

    def test_singular_a_fails(self):
        sys = three_wave_system()
        sys.a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
        rep = validate(sys)
        assert any(c.name == "a_invertible" for c in rep.failures())

    def test_wrong_boundary_row_count_fails(self):
        sys = three_wave_system()
        sys.b = np.array([[1.0, 0.0, 0.0]])
        rep = validate(sys)
        assert any(c.name == "boundary_rows_match_incoming" for c in rep.failures())

    def test_ivp_without_boundary_matrix(self):
        rep = validate(interface_wave_system())
        assert rep.ok, rep.summary()


class TestDeriveStructure:
    def test_three_wave_blocks(self):
        # Hand solve: A11 = [[0,1],[1,0]] so A11^{-1} A12 = (1, 0)^T,
        # X = (A22 - A21 A11^{-1} A12)^{-1} = 1 and H = X S = -1.
        der = derive_structure(three_wave_system())
        assert np.allclose(der.a11_inv_a12, [[1.0], [0.0]], atol=1e-13)
        assert np.allclose(der.x_mat, [[1.0]], atol=1e-13)
        assert np.allclose(der.h, [[-1.0]], atol=1e-13)
        assert der.split_h.n_plus == 0 and der.split_h.n_minus == 1
        assert der.r_inf_plus.shape == (3, 2)
        assert der.r_inf_minus.shape == (3, 1)

    def test_interface_system_scalar_block(self):
        der = derive_structure(interface_wave_system())
        assert der.split_a11.n_plus == 0 and der.split_a11.n_minus == 1
        # H has eigenvalues (1 +- sqrt(5))/2: one stable, one unstable.
        h_eigs = sorted(p.value.real for p in eigen_small(der.h))
        assert h_eigs[0] == pytest.approx((1 - np.sqrt(5)) / 2, abs=1e-10)
        assert h_eigs[1] == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-10)
        assert der.r_inf_plus.shape == (3, 1)
        assert der.r_inf_minus.shape == (3, 2)

    def test_block_diagonal_decouples(self):
        # With A12 = 0 the limit bases are plain block stacks.
        a = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, -2.0]])
        sys = LinearRelaxationSystem(
            n=3, r=2, a=a, q=np.diag([0.0, -1.0, -3.0]),
            b=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), epsilon=1.0,
        )
        der = derive_structure(sys)
        assert np.abs(der.a11_inv_a12).max() == 0.0
        # H = A22^{-1} S = diag(-2, 1.5): the stable direction e1 of H joins
        # the unstable block, so R+ spans {e1, e2} and R- spans {e3}.
        gap_plus = subspace_gap(
            der.r_inf_plus,
            np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        )
        assert gap_plus < 1e-10
        gap_minus = subspace_gap(
            der.r_inf_minus, np.array([[0.0], [0.0], [1.0]])
        )
        assert gap_minus < 1e-10

    def test_left_right_inverse_pairing(self):
        for sys in (three_wave_system(), interface_wave_system()):
            der = derive_structure(sys)
            concat = np.hstack([der.r_inf_plus, der.r_inf_minus])
            stacked = np.vstack([der.l_inf_plus, der.l_inf_minus])
            assert np.abs(stacked @ concat - np.eye(sys.n)).max() < 1e-12

    def test_limit_matches_numerical_split_at_large_eta(self):
        from relaxbl.linalg import inverse, spectral_split

        for sys in (three_wave_system(), interface_wave_system(),
                    jinxin_as_linear(-0.5, 1e-8), jinxin_as_linear(0.5, 1e-8)):
            der = derive_structure(sys)
            m = inverse(sys.a) @ (np.eye(sys.n) - 1e8 * sys.q)
            sp = spectral_split(m)
            assert subspace_gap(sp.r_plus, der.r_inf_plus) <= 1e-5
            assert subspace_gap(sp.r_minus, der.r_inf_minus) <= 1e-5


class TestGkc:
    def test_eta_zero_reduces_to_kreiss_ratio(self):
        sys = three_wave_system()
        rep = gkc_sample_ratio(sys, samples=[(1.0 + 0j, 0.0)])
        # Independent evaluation for M = A^{-1}: unstable directions of A.
        from relaxbl.linalg import determinant, orthonormal_columns, spectral_split

        split = spectral_split(sys.a)
        r_plus = orthonormal_columns(split.r_plus.astype(complex))
        expected = abs(determinant(sys.b.astype(complex) @ r_plus)) / np.sqrt(
            abs(determinant(np.conj(r_plus.T) @ r_plus))
        )
        assert rep.min_ratio == pytest.approx(expected, rel=1e-10)

    def test_linear_jinxin_ratio_positive(self):
        sys = jinxin_as_linear(-0.5, 1e-6)
        samples = default_gkc_samples(n_mod=20, n_arg=20, n_eta=8)
        rep = gkc_sample_ratio(sys, samples)
        assert rep.min_ratio > 0.0
        assert not rep.skipped

    def test_annihilating_boundary_detected(self):
        sys = jinxin_as_linear(-0.5, 1e-6)
        # Choose B orthogonal to the unstable direction at one sample.
        from relaxbl.linalg import inverse, spectral_split

        m = inverse(sys.a) @ (np.eye(2) - 10.0 * sys.q)
        sp = spectral_split(m)
        v = sp.r_plus[:, 0]
        sys.b = np.array([[-v[1], v[0]]])
        rep = gkc_sample_ratio(sys, samples=[(1.0 + 0j, 10.0)])
        assert rep.min_ratio < 1e-10

    def test_column_recombination_invariance(self):
        # The ratio must not depend on the basis of the unstable subspace;
        # equivalently it is insensitive to orthonormal recombination.
        sys = three_wave_system()
        rng = np.random.default_rng(5)
        samples = [(1.0 + 0.3j, 2.0)]
        base = gkc_sample_ratio(sys, samples).min_ratio
        from relaxbl.linalg import determinant, inverse, eigen_small as eig

        m = inverse(sys.a.astype(complex)) @ ((1.0 + 0.3j) * np.eye(3) - 2.0 * sys.q)
        cols = [p.vector for p in eig(m) if p.value.real > 0]
        r_plus = np.column_stack(cols)
        for _ in range(100):
            t = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            t += 3.0 * np.eye(2)
            rt = r_plus @ t
            num = abs(determinant(sys.b.astype(complex) @ rt))
            den = np.sqrt(abs(determinant(np.conj(rt.T) @ rt).real))
            assert num / den == pytest.approx(base, rel=1e-10)

    def test_bad_sample_rejected(self):
        sys = three_wave_system()
        with pytest.raises(ValueError):
            gkc_sample_ratio(sys, samples=[(-1.0 + 0j, 0.0)])


class TestJinXinWrap:
    def test_equilibrium_speed_is_a(self):
        for a_const in (-0.5, 0.5):
            sys = jinxin_as_linear(a_const, 1e-9)
            der = derive_structure(sys)
            # Equilibrium block is the scalar advection speed.
            assert sys.a[0, 0] == pytest.approx(a_const)
            assert der.split_a11.n_plus == (1 if a_const > 0 else 0)
            # Layer matrix equals the flux slope: the decaying layer profile
            # exp(a y) from the scalar layer equation.
            assert der.h[0, 0] == pytest.approx(a_const, abs=1e-12)

    def test_wave_speeds_preserved(self):
        sys = jinxin_as_linear(-0.5, 1.0)
        vals = sorted(p.value.real for p in eigen_small(sys.a))
        assert vals[0] == pytest.approx(-1.0, abs=1e-12)
        assert vals[1] == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_speed_rejected(self):
        with pytest.raises(ValueError):
            jinxin_as_linear(0.0, 1.0)

    def test_model_flux_sign_guard(self):
        from relaxbl.errors import DegenerateSign

        model = JinXinModel(
            flux=lambda u: 0.25 * (np.exp(-u) - 1.0),
            flux_derivative=lambda u: -0.25 * np.exp(-u),
            epsilon=1e-6,
        )
        assert model.flux_sign(np.linspace(-1, 1, 50)) == -1.0
        bad = JinXinModel(
            flux=lambda u: u * u,
            flux_derivative=lambda u: 2.0 * u,
            epsilon=1.0,
        )
        with pytest.raises(DegenerateSign):
            bad.flux_sign(np.linspace(-1, 1, 50))
