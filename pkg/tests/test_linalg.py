import numpy as np
import pytest

from relaxbl.errors import CharacteristicBoundary, SingularMatrix
from relaxbl.linalg import (
    determinant,
    eigen_small,
    inverse,
    solve_dense,
    spectral_split,
    subspace_gap,
)


def eigvals(m):
    return sorted((p.value for p in eigen_small(m)), key=lambda z: (z.real, z.imag))


class TestEigenSmall:
    def test_identity_2x2(self):
        vals = eigvals(np.eye(2))
        assert vals == [1.0, 1.0]

    def test_jinxin_coefficient_matrix(self):
        vals = eigvals(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert vals[0] == pytest.approx(-1.0, abs=1e-12)
        assert vals[1] == pytest.approx(1.0, abs=1e-12)

    def test_three_wave_system_sign_pattern(self):
        # Characteristic polynomial -l^3 + l^2 + 2l - 1 changes sign on
        # (-2,-1), (0,1) and (1,2): one negative, two positive real roots.
        poly = lambda l: -l**3 + l**2 + 2 * l - 1
        signs = [np.sign(poly(x)) for x in (-2, -1, 0, 1, 2)]
        assert signs == [1, -1, -1, 1, -1]
        a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        vals = eigvals(a)
        assert all(abs(v.imag) < 1e-12 for v in vals)
        assert -2 < vals[0].real < -1
        assert 0 < vals[1].real < 1
        assert 1 < vals[2].real < 2
        # Cross-check against an independent root oracle.
        expected = sorted(np.roots([-1, 1, 2, -1]).real)
        for got, ref in zip(vals, expected):
            assert got.real == pytest.approx(ref, abs=1e-10)

    def test_residuals_on_random_matrices(self):
        rng = np.random.default_rng(20240817)
        checked = 0
        while checked < 1000:
            n = int(rng.integers(1, 5))
            m = rng.uniform(-1.0, 1.0, size=(n, n))
            ref = np.linalg.eigvals(m)  # independent oracle for the gap filter
            gaps = [
                abs(ref[i] - ref[j])
                for i in range(n)
                for j in range(i + 1, n)
            ]
            if gaps and min(gaps) < 1e-4:
                continue
            pairs = eigen_small(m)
            scale = max(np.abs(m).max(), 1e-300)
            for p in pairs:
                res = np.abs(m @ p.vector - p.value * p.vector).max()
                assert res <= 1e-10 * scale
            got = sorted(eigvals(m), key=lambda z: (round(z.real, 9), round(z.imag, 9)))
            expected = sorted(ref, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
            for g, e in zip(got, expected):
                assert abs(g - e) <= 1e-8 * max(1.0, abs(e))
            checked += 1

    def test_unit_norm_vectors(self):
        for p in eigen_small(np.array([[1.0, 2.0], [3.0, 4.0]])):
            assert np.sqrt(np.real(np.conj(p.vector) @ p.vector)) == pytest.approx(1.0)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            eigen_small(np.ones((2, 3)))

    def test_complex_matrix(self):
        m = np.array([[1j, 1.0], [0.0, -2j]])
        vals = eigvals(m)
        assert vals[0] == pytest.approx(-2j, abs=1e-12)
        assert vals[1] == pytest.approx(1j, abs=1e-12)


class TestSpectralSplit:
    def test_jinxin_matrix_spans(self):
        split = spectral_split(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert split.n_plus == 1 and split.n_minus == 1
        assert subspace_gap(split.r_plus, np.array([[1.0], [1.0]])) < 1e-12
        assert subspace_gap(split.r_minus, np.array([[-1.0], [1.0]])) < 1e-12

    def test_diagonal(self):
        split = spectral_split(np.diag([-2.0, 3.0]))
        assert subspace_gap(split.r_minus, np.array([[1.0], [0.0]])) < 1e-12
        assert subspace_gap(split.r_plus, np.array([[0.0], [1.0]])) < 1e-12

    def test_three_wave_counts_match_root_signs(self):
        # Roots of l^3 + l^2 - 2l - 1 lie in (-2,-1), (-1,0) and (1,2).
        a = np.array([[-1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        roots = np.roots([1, 1, -2, -1])
        n_plus_oracle = int(np.sum(roots.real > 0))
        split = spectral_split(a)
        assert split.n_plus == n_plus_oracle == 1
        assert split.n_minus == 2

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(1, 5))
            m = rng.uniform(-1.0, 1.0, size=(n, n))
            try:
                split = spectral_split(m)
            except CharacteristicBoundary:
                continue
            recon = split.r_plus @ split.l_plus + split.r_minus @ split.l_minus
            assert np.abs(recon - np.eye(n)).max() < 1e-10

    def test_invariant_subspace_property(self):
        rng = np.random.default_rng(11)
        from relaxbl.linalg import eigen_small as eig

        for _ in range(100):
            n = int(rng.integers(2, 5))
            m = rng.uniform(-1.0, 1.0, size=(n, n))
            try:
                split = spectral_split(m)
            except CharacteristicBoundary:
                continue
            for block, stable in ((split.r_minus, True), (split.r_plus, False)):
                k = block.shape[1]
                if k == 0:
                    continue
                left = split.l_minus if stable else split.l_plus
                s = left @ (m @ block)
                assert np.abs(m @ block - block @ s).max() < 1e-9
                for p in eig(s):
                    assert (p.value.real < 0) == stable

    def test_characteristic_eigenvalue_raises(self):
        with pytest.raises(CharacteristicBoundary):
            spectral_split(np.array([[0.0, 1.0], [-1.0, 0.0]]))  # eigenvalues +-i
        with pytest.raises(CharacteristicBoundary):
            spectral_split(np.diag([0.0, 1.0]))


class TestSolveDense:
    def test_identity(self):
        assert np.allclose(solve_dense(np.eye(2), [3.0, 4.0]), [3.0, 4.0])

    def test_permutation(self):
        x = solve_dense(np.array([[0.0, 1.0], [1.0, 0.0]]), [5.0, -2.0])
        assert np.allclose(x, [-2.0, 5.0])

    def test_reduced_boundary_system(self):
        # 2x2 system assembled for the three-wave example; checked against
        # the closed-form inverse.
        s = 1.0 / np.sqrt(2.0)
        m = np.array([[s, -1.0], [s, 2.0]])
        det = 3.0 * s
        inv = np.array([[2.0, 1.0], [-s, s]]) / det
        rhs = np.array([-2.0 * np.sin(0.3), np.sin(0.3)])
        assert np.allclose(solve_dense(m, rhs), inv @ rhs, atol=1e-14)

    def test_residual_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 5))
            m = rng.uniform(-1.0, 1.0, size=(n, n))
            if abs(np.linalg.det(m)) < 1e-3:
                continue
            rhs = rng.uniform(-1.0, 1.0, size=n)
            x = solve_dense(m, rhs)
            norm = np.abs(m).max()
            assert np.abs(m @ x - rhs).max() <= 1e-12 * (
                norm * np.abs(x).max() + np.abs(rhs).max()
            )

    def test_singular_raises(self):
        with pytest.raises(SingularMatrix):
            solve_dense(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])

    def test_inverse_and_determinant(self):
        m = np.array([[2.0, 1.0], [1.0, 3.0]])
        assert np.allclose(inverse(m) @ m, np.eye(2), atol=1e-13)
        assert determinant(m) == pytest.approx(5.0)
        assert determinant(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(-1.0)


class TestSubspaceGap:
    def test_equal_spans(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert subspace_gap(a, a) == pytest.approx(0.0, abs=1e-8)

    def test_orthogonal_vectors(self):
        e1 = np.array([[1.0], [0.0]])
        e2 = np.array([[0.0], [1.0]])
        assert subspace_gap(e1, e2) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_scaling_invariance(self):
        v = np.array([[1.0], [1.0]])
        assert subspace_gap(v, 2.0 * v) == pytest.approx(0.0, abs=1e-8)

    def test_invariance_under_right_multiplication(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            k = int(rng.integers(1, n + 1))
            a = rng.normal(size=(n, k))
            b = rng.normal(size=(n, k))
            t1 = rng.normal(size=(k, k)) + 3.0 * np.eye(k)
            t2 = rng.normal(size=(k, k)) + 3.0 * np.eye(k)
            base = subspace_gap(a, b)
            assert subspace_gap(a @ t1, b @ t2) == pytest.approx(base, abs=1e-10)

    def test_rank_deficient_raises(self):
        bad = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
        with pytest.raises(SingularMatrix):
            subspace_gap(bad, np.eye(3)[:, :2])
