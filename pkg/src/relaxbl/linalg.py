"""Small dense linear algebra for matrices of size <= 4.

Everything here is sized for the tiny systems this library works with:
eigendecompositions go through the characteristic polynomial and a
simultaneous root iteration, eigenvectors come from shifted null spaces,
and linear solves use LU with partial pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CharacteristicBoundary, ConvergenceFailure, SingularMatrix

_MAX_N = 4
_ROOT_MAX_ITERS = 500
_PIVOT_TOL = 1e-14


@dataclass(frozen=True)
class EigenPair:
    """One eigenvalue with a unit-norm right eigenvector."""

    value: complex
    vector: np.ndarray


@dataclass(frozen=True)
class SpectralSplit:
    """Real bases of the stable/unstable invariant subspaces of a real matrix.

    Columns of ``r_minus`` span the invariant subspace for eigenvalues with
    negative real part, ``r_plus`` the one for positive real part.  The left
    blocks are the corresponding rows of the inverse of ``(r_plus, r_minus)``,
    so stacking ``l_plus`` over ``l_minus`` and multiplying by the
    concatenated right blocks gives the identity.
    """

    r_plus: np.ndarray
    r_minus: np.ndarray
    l_plus: np.ndarray
    l_minus: np.ndarray

    @property
    def n_plus(self):
        return self.r_plus.shape[1]

    @property
    def n_minus(self):
        return self.r_minus.shape[1]


def _as_square(m):
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not 1 <= a.shape[0] <= _MAX_N:
        raise ValueError(f"matrix size {a.shape[0]} outside supported range 1..{_MAX_N}")
    if np.iscomplexobj(a):
        return a.astype(complex)
    return a.astype(float)


def _char_poly(m):
    """Monic coefficients (descending) of det(lambda*I - M), via the
    Faddeev-LeVerrier recurrence."""
    n = m.shape[0]
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    work = np.array(m, dtype=complex)
    for k in range(1, n + 1):
        coeffs[k] = -np.trace(work) / k
        if k < n:
            work = m @ (work + coeffs[k] * np.eye(n))
    return coeffs


def _poly_eval(coeffs, z):
    acc = np.zeros_like(z) + coeffs[0]
    for c in coeffs[1:]:
        acc = acc * z + c
    return acc


def _poly_noise_floor(coeffs, z):
    # Backward-stable evaluation noise: eps * sum |c_i| |z|^(n-i).
    # No additive O(1) term: the floor must scale with the polynomial.
    mag = np.zeros_like(np.abs(z)) + abs(coeffs[0])
    for c in coeffs[1:]:
        mag = mag * np.abs(z) + abs(c)
    return np.finfo(float).eps * (mag + 1e-300) * len(coeffs)


def _durand_kerner(coeffs):
    """All roots of a monic polynomial by simultaneous (Weierstrass) iteration."""
    n = len(coeffs) - 1
    if n == 1:
        return np.array([-coeffs[1]], dtype=complex)
    if all(c == 0 for c in coeffs[1:]):
        return np.zeros(n, dtype=complex)
    radius = 2.0 * max(abs(coeffs[k]) ** (1.0 / k) for k in range(1, n + 1))
    angles = 2.0 * np.pi * np.arange(n) / n + 0.4
    z = radius * np.exp(1j * angles)
    for _ in range(_ROOT_MAX_ITERS):
        p = _poly_eval(coeffs, z)
        denom = np.ones(n, dtype=complex)
        for k in range(n):
            diff = z[k] - np.delete(z, k)
            denom[k] = np.prod(diff)
        # A collided pair would divide by zero; nudge apart deterministically.
        bad = np.abs(denom) == 0.0
        if bad.any():
            z[bad] += 1e-8 * radius
            continue
        step = p / denom
        z = z - step
        settled = (np.abs(step) <= 1e-14 * np.abs(z) + 1e-15 * radius) | (
            np.abs(p) <= _poly_noise_floor(coeffs, z)
        )
        if settled.all():
            return z
    # Multiple roots stall the simple-step criterion; accept if the residuals
    # sit at evaluation-noise level, otherwise report the conditioning issue.
    p = _poly_eval(coeffs, z)
    if (np.abs(p) <= 64.0 * _poly_noise_floor(coeffs, z)).all():
        return z
    raise ConvergenceFailure(
        f"root finder did not converge in {_ROOT_MAX_ITERS} iterations "
        "(ill-conditioned input?)"
    )


def _poly_derivative(coeffs):
    n = len(coeffs) - 1
    return np.array([coeffs[i] * (n - i) for i in range(n)], dtype=complex)


def _newton_polish(coeffs, z, steps=4):
    """A few guarded Newton steps; keeps the old iterate if |p| grows."""
    dcoeffs = _poly_derivative(coeffs)
    for _ in range(steps):
        p = _poly_eval(coeffs, np.array([z]))[0]
        dp = _poly_eval(dcoeffs, np.array([z]))[0]
        if dp == 0:
            break
        z_new = z - p / dp
        p_new = _poly_eval(coeffs, np.array([z_new]))[0]
        if abs(p_new) >= abs(p):
            break
        z = z_new
    return z


def _coalesce_roots(roots, coeffs, scale):
    """Group root estimates that belong to one multiple root and replace each
    group by its centroid (accurate where the individual estimates are not),
    then polish: an m-fold root of p is a simple root of the (m-1)-th
    derivative, where Newton converges cleanly."""

    def group_ok(group):
        center = group.mean()
        return abs(_poly_eval(coeffs, np.array([center]))[0]) <= 64.0 * _poly_noise_floor(
            coeffs, np.array([center])
        )[0]

    def split(group):
        if len(group) == 1 or (np.abs(group - group.mean()).max() <= 1e-3 * scale and group_ok(group)):
            return [group]
        if len(group) == 1:
            return [group]
        # Split at the largest internal gap along a deterministic ordering.
        order = np.lexsort((group.imag, group.real))
        g = group[order]
        gaps = np.abs(np.diff(g))
        cut = int(np.argmax(gaps)) + 1
        if len(g) == 1 or gaps.max() == 0.0:
            return [g]
        return split(g[:cut]) + split(g[cut:])

    out = []
    for group in split(np.asarray(roots, dtype=complex)):
        center = group.mean()
        dcoeffs = coeffs
        for _ in range(len(group) - 1):
            dcoeffs = _poly_derivative(dcoeffs)
            dcoeffs = dcoeffs / dcoeffs[0]
        center = _newton_polish(dcoeffs, center)
        out.extend([center] * len(group))
    return np.array(out, dtype=complex)


def _symmetrize_real_spectrum(roots, scale):
    """For real matrices: snap near-real roots onto the real axis and force
    complex roots into exact conjugate pairs."""
    roots = np.array(roots, dtype=complex)
    real_mask = np.abs(roots.imag) <= 1e-10 * scale
    roots[real_mask] = roots[real_mask].real
    pos = [k for k in range(len(roots)) if roots[k].imag > 0]
    neg = [k for k in range(len(roots)) if roots[k].imag < 0]
    used = set()
    for k in pos:
        if not neg:
            roots[k] = roots[k].real
            continue
        partner = min(
            (j for j in neg if j not in used),
            key=lambda j: abs(roots[j] - np.conj(roots[k])),
            default=None,
        )
        if partner is None:
            roots[k] = roots[k].real
            continue
        used.add(partner)
        avg = 0.5 * (roots[k] + np.conj(roots[partner]))
        roots[k] = avg
        roots[partner] = np.conj(avg)
    for j in neg:
        if j not in used:
            roots[j] = roots[j].real
    return roots


def _row_echelon_null_basis(k_mat, zero_scale, rel_tol=1e-7):
    """Orthonormal basis of the null space of ``k_mat`` by Gaussian
    elimination with partial pivoting.

    Rows are equilibrated first (this leaves the null space unchanged) so a
    single relative pivot tolerance works even when entries span many orders
    of magnitude; rows at roundoff level relative to ``zero_scale`` count as
    zero.
    """
    a = np.array(k_mat, dtype=complex)
    n_rows, n_cols = a.shape
    for i in range(n_rows):
        row_max = np.abs(a[i]).max()
        if row_max <= 1e-12 * zero_scale:
            a[i] = 0.0
        else:
            a[i] = a[i] / row_max
    pivot_cols = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        piv = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[piv, col]) <= rel_tol:
            continue
        a[[row, piv]] = a[[piv, row]]
        a[row] = a[row] / a[row, col]
        for r in range(n_rows):
            if r != row:
                a[r] = a[r] - a[r, col] * a[row]
        pivot_cols.append(col)
        row += 1
    free_cols = [c for c in range(n_cols) if c not in pivot_cols]
    basis = []
    for free in free_cols:
        v = np.zeros(n_cols, dtype=complex)
        v[free] = 1.0
        for r, col in enumerate(pivot_cols):
            v[col] = -a[r, free]
        basis.append(v)
    if not basis:
        return np.zeros((n_cols, 0), dtype=complex)
    return orthonormal_columns(np.column_stack(basis))


def orthonormal_columns(cols, tol=1e-10):
    """Modified Gram-Schmidt with re-orthogonalization; raises on rank
    deficiency."""
    a = np.array(cols, dtype=complex if np.iscomplexobj(cols) else float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array of columns")
    n, k = a.shape
    scale = max(np.abs(a).max() if a.size else 0.0, 1.0)
    q = np.zeros_like(a)
    for j in range(k):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v = v - (np.conj(q[:, i]) @ v) * q[:, i]
        norm = np.sqrt(np.real(np.conj(v) @ v))
        if norm <= tol * scale:
            raise SingularMatrix("rank-deficient column set")
        q[:, j] = v / norm
    return q


def eigen_values(m):
    """Eigenvalues only (multiplicities repeated), no eigenvectors.

    Useful when clustered eigenvalues make eigenvector extraction moot.
    """
    a = _as_square(m)
    is_real = not np.iscomplexobj(a)
    coeffs = _char_poly(a)
    roots = _durand_kerner(coeffs)
    scale = max(1.0, np.abs(roots).max())
    roots = _coalesce_roots(roots, coeffs, scale)
    if is_real:
        roots = _symmetrize_real_spectrum(roots, scale)
    return roots[np.lexsort((roots.imag, roots.real))]


def eigen_small(m):
    """All eigenpairs of a square matrix with n <= 4.

    Eigenvalues are the characteristic-polynomial roots from a simultaneous
    iteration; eigenvectors come from the null space of the shifted matrix.
    Defective matrices (geometric < algebraic multiplicity) raise
    ConvergenceFailure.
    """
    a = _as_square(m)
    n = a.shape[0]
    is_real = not np.iscomplexobj(a)
    m_scale = max(np.abs(a).max(), 1e-300)
    coeffs = _char_poly(a)
    roots = _durand_kerner(coeffs)
    scale = max(1.0, np.abs(roots).max())
    roots = _coalesce_roots(roots, coeffs, scale)
    if is_real:
        roots = _symmetrize_real_spectrum(roots, scale)

    # Count multiplicities of the distinct values in a deterministic order.
    order = np.lexsort((roots.imag, roots.real))
    roots = roots[order]
    pairs = []
    idx = 0
    vec_cache = {}
    while idx < len(roots):
        lam = roots[idx]
        mult = 1
        while idx + mult < len(roots) and roots[idx + mult] == lam:
            mult += 1
        key = np.conj(lam)
        if is_real and key in vec_cache:
            basis = np.conj(vec_cache[key])
        else:
            basis = _row_echelon_null_basis(
                a - lam * np.eye(n), zero_scale=max(m_scale, abs(lam))
            )
            vec_cache[lam] = basis
        if basis.shape[1] < mult:
            raise ConvergenceFailure(
                f"defective or near-defective eigenvalue {lam}: null space has "
                f"dimension {basis.shape[1]} < multiplicity {mult}"
            )
        for j in range(mult):
            v = basis[:, j]
            if is_real and lam.imag == 0.0:
                # Real eigenvalue of a real matrix has a real eigenvector.
                if np.abs(v.imag).max() > 1e-12:
                    raise ConvergenceFailure(f"unexpected complex eigenvector for real {lam}")
                v = v.real.astype(float) / np.sqrt(v.real @ v.real)
            residual = np.abs(a @ v - lam * v).max()
            if residual > 1e-8 * m_scale:
                raise ConvergenceFailure(
                    f"eigenpair residual {residual:.2e} too large (ill-conditioned input?)"
                )
            pairs.append(EigenPair(value=complex(lam), vector=v))
        idx += mult
    return pairs


def spectral_split(m, tol_realpart=1e-10):
    """Split a real matrix into stable/unstable invariant subspaces.

    Complex-conjugate eigenpairs are folded into real two-column blocks, so
    all four returned blocks are real.  An eigenvalue with |Re| within
    ``tol_realpart`` of the imaginary axis raises CharacteristicBoundary.
    """
    a = _as_square(m)
    if np.iscomplexobj(a):
        raise ValueError("spectral_split expects a real matrix")
    n = a.shape[0]
    pairs = eigen_small(a)
    plus_cols, minus_cols = [], []
    for p in pairs:
        lam = p.value
        if abs(lam.real) <= tol_realpart:
            raise CharacteristicBoundary(
                f"eigenvalue {lam} within {tol_realpart} of the imaginary axis"
            )
        if lam.imag < 0:
            continue  # handled together with its conjugate
        if lam.imag > 0:
            cols = [p.vector.real.copy(), p.vector.imag.copy()]
        else:
            cols = [p.vector.real.copy()]
        target = plus_cols if lam.real > 0 else minus_cols
        target.extend(cols)

    def block(cols):
        if not cols:
            return np.zeros((n, 0))
        return orthonormal_columns(np.column_stack(cols)).real

    r_plus = block(plus_cols)
    r_minus = block(minus_cols)
    if r_plus.shape[1] + r_minus.shape[1] != n:
        raise ConvergenceFailure("stable/unstable column counts do not add up")
    concat = np.hstack([r_plus, r_minus])
    left = inverse(concat)
    return SpectralSplit(
        r_plus=r_plus,
        r_minus=r_minus,
        l_plus=left[: r_plus.shape[1]],
        l_minus=left[r_plus.shape[1]:],
    )


def _lu_factor(m):
    a = np.array(m, dtype=complex if np.iscomplexobj(m) else float)
    n = a.shape[0]
    perm = np.arange(n)
    scale = max(np.abs(a).max(), 1.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if np.abs(a[piv, col]) <= _PIVOT_TOL * scale:
            raise SingularMatrix(f"pivot {np.abs(a[piv, col]):.2e} below threshold")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            perm[[col, piv]] = perm[[piv, col]]
        a[col + 1:, col] /= a[col, col]
        a[col + 1:, col + 1:] -= np.outer(a[col + 1:, col], a[col, col + 1:])
    return a, perm


def solve_dense(m, rhs):
    """Solve m @ x = rhs by LU with partial pivoting.

    ``rhs`` may be a vector or a matrix of stacked right-hand sides.
    """
    a = _as_square(m)
    b = np.asarray(rhs, dtype=complex if (np.iscomplexobj(a) or np.iscomplexobj(rhs)) else float)
    vector_input = b.ndim == 1
    if vector_input:
        b = b[:, None]
    if b.shape[0] != a.shape[0]:
        raise ValueError("dimension mismatch between matrix and right-hand side")
    lu, perm = _lu_factor(a)
    x = b[perm].astype(lu.dtype)
    n = a.shape[0]
    for col in range(n):       # forward, unit lower triangle
        x[col + 1:] -= np.outer(lu[col + 1:, col], x[col])
    for col in range(n - 1, -1, -1):  # backward
        x[col] /= lu[col, col]
        x[:col] -= np.outer(lu[:col, col], x[col])
    return x[:, 0] if vector_input else x


def inverse(m):
    """Dense inverse via solve_dense against the identity."""
    a = _as_square(m)
    return solve_dense(a, np.eye(a.shape[0], dtype=a.dtype))


def determinant(m):
    """Determinant via the LU factorization (complex-capable)."""
    a = _as_square(m)
    try:
        lu, perm = _lu_factor(a)
    except SingularMatrix:
        return 0.0 if not np.iscomplexobj(a) else 0.0 + 0.0j
    sign = 1.0
    seen = np.zeros(len(perm), dtype=bool)
    for start in range(len(perm)):   # permutation parity by cycle counting
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign * np.prod(np.diag(lu))


def subspace_gap(a, b):
    """Largest principal angle (radians) between the column spans of a and b.

    Both inputs must have the same shape and full column rank; the result is
    invariant under right-multiplication by invertible matrices.
    """
    qa = np.asarray(a, dtype=complex if np.iscomplexobj(a) else float)
    qb = np.asarray(b, dtype=complex if np.iscomplexobj(b) else float)
    if qa.ndim == 1:
        qa = qa[:, None]
    if qb.ndim == 1:
        qb = qb[:, None]
    if qa.shape != qb.shape:
        raise ValueError(f"shape mismatch: {qa.shape} vs {qb.shape}")
    if qa.shape[1] == 0:
        return 0.0
    qa = orthonormal_columns(qa)
    qb = orthonormal_columns(qb)
    cross = np.conj(qa.T) @ qb
    gram = np.conj(cross.T) @ cross
    eigvals = eigen_values(gram).real
    sigma_min = np.sqrt(min(max(eigvals.min(), 0.0), 1.0))
    if sigma_min**2 <= 0.5:
        return float(np.arccos(min(sigma_min, 1.0)))
    # Small angles: the cosine form loses half the digits, the sine form
    # (residual after projecting onto span a) does not.
    resid = qb - qa @ cross
    sine_gram = np.conj(resid.T) @ resid
    sine_vals = eigen_values(sine_gram).real
    sigma_max = np.sqrt(min(max(sine_vals.max(), 0.0), 1.0))
    return float(np.arcsin(min(sigma_max, 1.0)))
