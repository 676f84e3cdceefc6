"""Problem definitions: the 2x2 nonlinear relaxation model, general linear
relaxation systems in partitioned form, derived equilibrium/layer structure,
and the sampled well-posedness diagnostic for boundary matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import SingularMatrix


@dataclass
class JinXinModel:
    """2x2 semilinear relaxation model

        u_t + v_x = 0
        v_t + u_x = (f(u) - v)/epsilon + forcing(x, t)

    with boundary data  bc_coeffs . (u, v)(0, t) = bc_data(t)  at x = 0.
    The flux derivative must keep one sign on the computational range.
    """

    flux: callable
    flux_derivative: callable
    epsilon: float
    bc_coeffs: tuple = (1.0, 1.0)
    bc_data: callable = None
    init_u: callable = None
    init_v: callable = None
    forcing: callable = None
    edge_data: callable = None  # (x, t) -> (u, v), for Dirichlet far edges

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def flux_sign(self, u_samples):
        """Sign of f' over samples; raises if it vanishes or flips."""
        from .errors import DegenerateSign

        d = np.asarray(self.flux_derivative(np.asarray(u_samples, dtype=float)))
        if np.any(d == 0.0) or (d.max() > 0 > d.min()):
            raise DegenerateSign("flux derivative changes sign or vanishes on the data range")
        return 1.0 if d.flat[0] > 0 else -1.0


@dataclass
class LinearRelaxationSystem:
    """Linear relaxation system U_t + A U_x = Q U / epsilon on x > 0 with
    B U(0,t) = b(t), in the partitioned form where the first n-r unknowns are
    the conserved (equilibrium) variables and Q = blockdiag(0, S)."""

    n: int
    r: int
    a: np.ndarray
    q: np.ndarray
    b: np.ndarray = None          # None for pure initial-value problems
    bc_data: callable = None      # t -> vector of length n_plus
    init: callable = None         # x -> vector of length n
    epsilon: float = 1.0
    edge_data: callable = None    # (x, t) -> vector, Dirichlet far edge

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.b is not None:
            self.b = np.atleast_2d(np.asarray(self.b, dtype=float))

    @property
    def s_block(self):
        return self.q[self.n - self.r:, self.n - self.r:]

    def blocks(self):
        k = self.n - self.r
        return self.a[:k, :k], self.a[:k, k:], self.a[k:, :k], self.a[k:, k:]


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.checks.append(ValidationCheck(name, bool(passed), detail))

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        lines = []
        for c in self.checks:
            lines.append(f"[{'pass' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def validate(sys: LinearRelaxationSystem) -> ValidationReport:
    """Diagnostic checks of the structural assumptions; never raises."""
    rep = ValidationReport()
    n, r = sys.n, sys.r
    a, q = sys.a, sys.q

    shape_ok = a.shape == (n, n) and q.shape == (n, n) and 0 < r < n
    rep.add("shapes", shape_ok, f"a {a.shape}, q {q.shape}, n={n}, r={r}")
    if not shape_ok:
        return rep

    k = n - r
    off = max(
        np.abs(q[:k, :]).max() if k else 0.0,
        np.abs(q[k:, :k]).max() if k else 0.0,
    )
    rep.add("q_block_form", off == 0.0, f"max |entry| outside the S block = {off:.3e}")

    s_sym = 0.5 * (sys.s_block + sys.s_block.T)
    try:
        max_eig = max(p.value.real for p in linalg.eigen_small(s_sym))
        rep.add(
            "s_negative_definite",
            max_eig < 0.0,
            f"max eigenvalue of sym part = {max_eig:.6e}",
        )
    except Exception as exc:  # diagnostic only
        rep.add("s_negative_definite", False, f"eigen solve failed: {exc}")

    det_a = linalg.determinant(a)
    rep.add("a_invertible", abs(det_a) > 1e-12, f"det A = {det_a:.6e}")
    det_a11 = linalg.determinant(a[:k, :k])
    rep.add("a11_invertible", abs(det_a11) > 1e-12, f"det A11 = {det_a11:.6e}")

    try:
        n_plus = sum(1 for p in linalg.eigen_small(a) if p.value.real > 0)
        rep.add("noncharacteristic_a", all(
            abs(p.value.real) > 1e-10 for p in linalg.eigen_small(a)
        ), "no eigenvalue of A near the imaginary axis")
    except Exception as exc:
        rep.add("noncharacteristic_a", False, f"eigen solve failed: {exc}")
        return rep

    if sys.b is None:
        rep.add("boundary_matrix", True, "no boundary matrix (initial-value problem)")
    else:
        rows_ok = sys.b.shape == (n_plus, n)
        rep.add(
            "boundary_rows_match_incoming",
            rows_ok,
            f"B is {sys.b.shape}, A has {n_plus} positive eigenvalues",
        )
        if rows_ok and n_plus > 0:
            try:
                linalg.orthonormal_columns(sys.b.T)
                rep.add("boundary_full_rank", True, "")
            except SingularMatrix:
                rep.add("boundary_full_rank", False, "rows of B are linearly dependent")
    return rep


@dataclass
class DerivedStructure:
    """Equilibrium/layer matrices derived from a validated system.

    ``r_inf_plus``/``r_inf_minus`` span the large-relaxation limits of the
    unstable/stable subspaces of A^{-1}(I - eta Q); the ``l_inf`` blocks are
    their left counterparts built from the same block factorization, so the
    analytic zero pattern is preserved exactly.
    """

    a11_inv_a12: np.ndarray
    h: np.ndarray
    x_mat: np.ndarray
    y_mat: np.ndarray
    split_a: linalg.SpectralSplit
    split_a11: linalg.SpectralSplit
    split_h: linalg.SpectralSplit
    r_inf_plus: np.ndarray
    r_inf_minus: np.ndarray
    l_inf_plus: np.ndarray
    l_inf_minus: np.ndarray
    n: int
    r: int


def derive_structure(sys: LinearRelaxationSystem) -> DerivedStructure:
    """Compute the equilibrium coupling, layer matrix and limit splittings."""
    rep = validate(sys)
    if not rep.ok:
        raise ValueError(
            "system fails validation:\n" + "\n".join(c.name for c in rep.failures())
        )
    n, r = sys.n, sys.r
    k = n - r
    a11, a12, a21, a22 = sys.blocks()
    kmat = linalg.solve_dense(a11, a12)
    x_mat = linalg.inverse(a22 - a21 @ kmat)
    y_mat = -x_mat @ a21 @ linalg.inverse(a11)
    h = x_mat @ sys.s_block

    split_a = linalg.spectral_split(sys.a)
    split_a11 = linalg.spectral_split(a11)
    split_h = linalg.spectral_split(h)

    t_mat = np.block([[np.eye(k), -kmat], [np.zeros((r, k)), np.eye(r)]])
    t_inv = np.block([[np.eye(k), kmat], [np.zeros((r, k)), np.eye(r)]])

    def stack_right(top, bottom):
        cols = top.shape[1] + bottom.shape[1]
        out = np.zeros((n, cols))
        out[:k, : top.shape[1]] = top
        out[k:, top.shape[1]:] = bottom
        return t_mat @ out

    def stack_left(left_top, left_bottom):
        rows = left_top.shape[0] + left_bottom.shape[0]
        out = np.zeros((rows, n))
        out[: left_top.shape[0], :k] = left_top
        out[left_top.shape[0]:, k:] = left_bottom
        return out @ t_inv

    # Unstable limit block pairs with the *stable* part of the layer matrix
    # (a decaying layer is an unstable spatial mode), and vice versa.
    r_inf_plus = stack_right(split_a11.r_plus, split_h.r_minus)
    r_inf_minus = stack_right(split_a11.r_minus, split_h.r_plus)
    l_inf_plus = stack_left(split_a11.l_plus, split_h.l_minus)
    l_inf_minus = stack_left(split_a11.l_minus, split_h.l_plus)

    if r_inf_plus.shape[1] != split_a.n_plus:
        raise ValueError(
            "limit unstable dimension does not match the unstable count of A"
        )
    assert np.abs(h - x_mat @ sys.s_block).max() <= 1e-12

    return DerivedStructure(
        a11_inv_a12=kmat,
        h=h,
        x_mat=x_mat,
        y_mat=y_mat,
        split_a=split_a,
        split_a11=split_a11,
        split_h=split_h,
        r_inf_plus=r_inf_plus,
        r_inf_minus=r_inf_minus,
        l_inf_plus=l_inf_plus,
        l_inf_minus=l_inf_minus,
        n=n,
        r=r,
    )


@dataclass
class GkcReport:
    """Result of the sampled determinant-ratio diagnostic."""

    min_ratio: float
    argmin: tuple            # (xi, eta) where the minimum occurred
    ratios: list
    skipped: list            # samples where the splitting degenerated

    def __repr__(self):
        return (
            f"GkcReport(min_ratio={self.min_ratio:.6e}, argmin={self.argmin}, "
            f"samples={len(self.ratios)}, skipped={len(self.skipped)})"
        )


def default_gkc_samples(n_mod=20, n_arg=20, n_eta=8, mod_range=(1e-2, 1e2), eta_max=1e4):
    """Log-spaced grid over |xi|, arg xi in (-pi/2, pi/2) and eta >= 0."""
    mods = np.logspace(np.log10(mod_range[0]), np.log10(mod_range[1]), n_mod)
    args = np.linspace(-np.pi / 2, np.pi / 2, n_arg + 2)[1:-1]
    etas = np.concatenate([[0.0], np.logspace(-2, np.log10(eta_max), n_eta - 1)])
    return [
        (m * np.exp(1j * ar), e)
        for m in mods
        for ar in args
        for e in etas
    ]


def gkc_sample_ratio(sys: LinearRelaxationSystem, samples=None) -> GkcReport:
    """Minimum of |det(B R+)| / sqrt(det(R+^* R+)) over samples of
    M(xi, eta) = A^{-1}(xi I - eta Q), Re xi > 0, eta >= 0.

    The ratio is invariant under column recombination of the unstable basis
    R+, so the basis is orthonormalized first.  Samples whose splitting
    degenerates (eigenvalue on the imaginary axis, or a wrong unstable count)
    are skipped and reported.
    """
    if sys.b is None:
        raise ValueError("gkc_sample_ratio needs a boundary matrix")
    if samples is None:
        samples = default_gkc_samples()
    a_inv = linalg.inverse(sys.a)
    n = sys.n
    n_plus = sys.b.shape[0]
    ratios = []
    skipped = []
    best = (np.inf, None)
    for xi, eta in samples:
        if np.real(xi) <= 0 or eta < 0:
            raise ValueError(f"sample (xi={xi}, eta={eta}) outside Re xi > 0, eta >= 0")
        m = a_inv @ (xi * np.eye(n) - eta * sys.q)
        try:
            pairs = linalg.eigen_small(m)
        except Exception as exc:
            skipped.append((xi, eta, f"eigen failure: {exc}"))
            continue
        scale = max(abs(p.value) for p in pairs)
        if any(abs(p.value.real) <= 1e-12 * scale for p in pairs):
            skipped.append((xi, eta, "eigenvalue on the imaginary axis"))
            continue
        cols = [p.vector for p in pairs if p.value.real > 0]
        if len(cols) != n_plus:
            skipped.append((xi, eta, f"unstable count {len(cols)} != {n_plus}"))
            continue
        r_plus = linalg.orthonormal_columns(np.column_stack(cols))
        num = abs(linalg.determinant(sys.b.astype(complex) @ r_plus))
        gram = np.conj(r_plus.T) @ r_plus
        den = np.sqrt(abs(linalg.determinant(gram)))
        ratio = num / den
        ratios.append(ratio)
        if ratio < best[0]:
            best = (ratio, (xi, eta))
    if not ratios:
        raise ValueError("all samples were skipped; no ratio computed")
    return GkcReport(min_ratio=best[0], argmin=best[1], ratios=ratios, skipped=skipped)


def jinxin_as_linear(
    a_const: float,
    epsilon: float,
    bc_coeffs=(1.0, 1.0),
    bc_data=None,
    init_u=None,
    init_v=None,
) -> LinearRelaxationSystem:
    """Wrap the linear 2x2 model (f(u) = a*u) in partitioned form.

    The change of variables w = v - a u turns the source into blockdiag(0, -1)
    while keeping the wave speeds +-1; the equilibrium block becomes the
    scalar advection speed a.
    """
    if a_const == 0.0:
        raise ValueError("a_const = 0 is characteristic for the equilibrium equation")
    a = float(a_const)
    a_tilde = np.array([[a, 1.0], [1.0 - a * a, -a]])
    q_tilde = np.array([[0.0, 0.0], [0.0, -1.0]])
    b_u, b_v = bc_coeffs
    b_tilde = np.array([[b_u + a * b_v, b_v]])
    init = None
    if init_u is not None and init_v is not None:
        def init(x):
            u0 = init_u(x)
            return np.stack([u0, init_v(x) - a * u0], axis=-1)
    wrapped_bc = None
    if bc_data is not None:
        def wrapped_bc(t):
            return np.atleast_1d(bc_data(t))
    return LinearRelaxationSystem(
        n=2,
        r=1,
        a=a_tilde,
        q=q_tilde,
        b=b_tilde,
        bc_data=wrapped_bc,
        init=init,
        epsilon=epsilon,
    )
