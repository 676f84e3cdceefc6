"""First-order time-stepping engines.

Two spatial discretizations are provided for initial-boundary value problems
on x >= x0:

* the classical upwind IMEX scheme, which splits the flux along the
  characteristic fields of A and treats the relaxation source implicitly;
* the boundary-aware scheme ("bap"), which splits the flux along the
  eigenvectors of A^{-1}(I - eta Q).  For eta -> 0 this is the upwind
  splitting; for eta -> infinity it projects onto the equilibrium dynamics,
  which is what keeps coarse meshes honest next to relaxation layers.

The 2x2 semilinear model uses the closed-form eigenstructure of

    M(eta) = [[-eta a, 1 + eta], [1, 0]],      a = f'(u),

with eta = (tau/epsilon)^p varying smoothly; general linear systems switch
between the two limit splittings at tau = epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateSign, NewtonFailure, NumericalBlowup
from .models import JinXinModel, LinearRelaxationSystem, derive_structure

# The 2x2 coefficient matrix [[0,1],[1,0]] split along its +-1 speeds.
_A_PLUS = np.array([[0.5, 0.5], [0.5, 0.5]])
_A_MINUS = np.array([[-0.5, 0.5], [0.5, -0.5]])
_L_MINUS_A = np.array([-1.0, 1.0]) / np.sqrt(2.0)

# Beyond this ratio the smooth eigenvectors are evaluated at their
# analytic large-eta limit: (tau/eps)^p would lose all digits anyway.
_STIFF_LIMIT_RATIO = 1e8


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid x_j = x0 + j*h, j = 0 .. num_points-1."""

    x0: float
    h: float
    num_points: int

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("mesh width must be positive")
        if self.num_points < 3:
            raise ValueError("need at least 3 grid points")

    def points(self):
        return self.x0 + self.h * np.arange(self.num_points)

    @classmethod
    def from_domain(cls, x_left, x_right, n_cells):
        return cls(x0=x_left, h=(x_right - x_left) / n_cells, num_points=n_cells + 1)


@dataclass
class SchemeConfig:
    """Knobs shared by all step functions.

    ``a_mode`` picks the slope fed into the smooth splitting: the pointwise
    flux derivative, or just its sign.  ``switch_rule`` selects smooth-eta
    blending or the hard tau/epsilon switch; ``None`` resolves to smooth for
    the 2x2 model and hard for general linear systems.
    """

    cfl: float = 0.8
    p_exponent: int = 2
    a_mode: str = "derivative"          # or "sign"
    right_boundary: str = "extrapolate"  # or "reference_dirichlet"
    newton_tol: float = 1e-12
    newton_max_iters: int = 50
    switch_rule: str = None             # "smooth_eta" | "hard_tau_eps" | None

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.p_exponent < 2:
            raise ValueError("p_exponent must be >= 2")
        if self.a_mode not in ("derivative", "sign"):
            raise ValueError(f"unknown a_mode {self.a_mode!r}")
        if self.right_boundary not in ("extrapolate", "reference_dirichlet"):
            raise ValueError(f"unknown right boundary treatment {self.right_boundary!r}")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")


@dataclass
class SolutionState:
    """Grid function at one time level; values has shape (num_points, n)."""

    time: float
    values: np.ndarray

    def component(self, k):
        return self.values[:, k]


@dataclass(frozen=True)
class EtaDecomposition:
    """Closed-form eigenstructure of M(eta) for one slope value."""

    a: float
    eta: float
    lambda_plus: float
    lambda_minus: float
    l_plus: np.ndarray
    l_minus: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray


def _eta_lambdas(a, eta):
    """Eigenvalues of M(eta), computed from the non-cancelling root.

    lambda+- solve  l^2 + a*eta*l - (1+eta) = 0.  For a < 0 the '+' root is
    a sum of positive terms; the other follows from the product of roots
    -(1+eta), avoiding the subtractive cancellation at large eta.
    """
    a = np.asarray(a, dtype=float)
    eta = float(eta)
    if eta <= 1.0:
        disc = np.sqrt(a * a * eta * eta + 4.0 * (eta + 1.0))
    else:
        s = 1.0 / eta
        disc = eta * np.sqrt(a * a + 4.0 * s * (1.0 + s))
    lam_stable_branch = -0.5 * (a * eta + np.sign(a) * disc)
    other = -(1.0 + eta) / lam_stable_branch
    lam_plus = np.where(a < 0, lam_stable_branch, other)
    lam_minus = np.where(a < 0, other, lam_stable_branch)
    return lam_plus, lam_minus


def _eta_left_rows(a, eta):
    """Unit left eigenvector rows (l_plus, l_minus) of M(eta), vectorized
    over the slope.  ``eta=None`` selects the analytic eta -> infinity limit."""
    a = np.asarray(a, dtype=float)
    if eta is None:
        norm = np.hypot(a, 1.0)
        row_slow = np.stack([-a / norm, 1.0 / norm], axis=-1)
        row_eq = np.broadcast_to(
            np.array([0.0, 1.0]), row_slow.shape
        ).copy()
        lp = np.where((a < 0)[..., None], row_slow, row_eq)
        lm = np.where((a < 0)[..., None], row_eq, row_slow)
        return lp, lm
    lam_plus, lam_minus = _eta_lambdas(a, eta)
    np_norm = np.hypot(lam_plus, 1.0 + eta)
    nm_norm = np.hypot(lam_minus, 1.0 + eta)
    lp = np.stack([lam_plus / np_norm, (1.0 + eta) / np_norm], axis=-1)
    lm = np.stack([lam_minus / nm_norm, (1.0 + eta) / nm_norm], axis=-1)
    return lp, lm


def _rows_to_right_columns(lp, lm):
    """Invert the stacked 2x2 left rows pointwise: returns r_plus, r_minus."""
    det = lp[..., 0] * lm[..., 1] - lp[..., 1] * lm[..., 0]
    r_plus = np.stack([lm[..., 1] / det, -lm[..., 0] / det], axis=-1)
    r_minus = np.stack([-lp[..., 1] / det, lp[..., 0] / det], axis=-1)
    return r_plus, r_minus


def m_eta_decompose(a, eta):
    """Eigenstructure of M(eta) = [[-eta a, 1+eta], [1, 0]] for scalar a.

    Large eta evaluates the rescaled (1/eta) closed forms; beyond the range
    of double precision the analytic limit vectors are returned.
    """
    if a == 0.0:
        raise DegenerateSign("slope a = 0 has no upwind direction")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    use_limit = not np.isfinite(eta) or eta > 1e300 / max(abs(a), 1.0)
    if use_limit:
        lp, lm = _eta_left_rows(np.array(a), None)
        lam_plus = np.inf if a < 0 else 1.0 / a
        lam_minus = 1.0 / a if a < 0 else -np.inf
    else:
        lp, lm = _eta_left_rows(np.array(a), eta)
        lam_plus, lam_minus = _eta_lambdas(np.array(a), eta)
        lam_plus, lam_minus = float(lam_plus), float(lam_minus)
    r_plus, r_minus = _rows_to_right_columns(lp, lm)
    return EtaDecomposition(
        a=float(a),
        eta=float(eta),
        lambda_plus=lam_plus,
        lambda_minus=lam_minus,
        l_plus=np.asarray(lp, dtype=float),
        l_minus=np.asarray(lm, dtype=float),
        r_plus=np.asarray(r_plus, dtype=float),
        r_minus=np.asarray(r_minus, dtype=float),
    )


def initial_state(problem, grid) -> SolutionState:
    x = grid.points()
    if isinstance(problem, JinXinModel):
        values = np.stack([problem.init_u(x), problem.init_v(x)], axis=-1)
    else:
        values = np.asarray(problem.init(x), dtype=float)
        if values.shape != (grid.num_points, problem.n):
            raise ValueError("init callable returned the wrong shape")
    return SolutionState(time=0.0, values=values.astype(float))


def _check_cfl(tau, h, max_speed, cfl):
    if tau * max_speed > cfl * h * (1.0 + 1e-10):
        raise ValueError(
            f"CFL violation: tau*speed = {tau * max_speed:.3e} exceeds "
            f"cfl*h = {cfl * h:.3e}"
        )


def _resolve_slopes(model, u, a_mode):
    d = np.asarray(model.flux_derivative(u), dtype=float)
    if np.any(d == 0.0) or (d.max() > 0.0 > d.min()):
        raise DegenerateSign("flux derivative changes sign or vanishes across the stencil")
    return np.sign(d) if a_mode == "sign" else d


def _forcing_at(model, x, t):
    if model.forcing is None:
        return 0.0
    return np.asarray(model.forcing(x, t), dtype=float)


def _solve_left_boundary(
    row_l, flux_l, src_coef, u0, v0, du1, dv1, lam, c, tau, g0,
    bu, bv, b_next, model, tol, max_iters,
):
    """Solve the 2x2 boundary pair

        row_l . (U' - U0) + lam * flux_l . (U1 - U0)
            = c * src_coef * (f(u') - v') + tau * src_coef * g0
        bu u' + bv v' = b_next

    by Newton with the analytic Jacobian, falling back to bisection on the
    scalar equation obtained by eliminating v'.
    """
    f, fp = model.flux, model.flux_derivative
    drift = lam * (flux_l[0] * du1 + flux_l[1] * dv1)

    def residual(u, v):
        r1 = (
            row_l[0] * (u - u0)
            + row_l[1] * (v - v0)
            + drift
            - c * src_coef * (f(u) - v)
            - tau * src_coef * g0
        )
        r2 = bu * u + bv * v - b_next
        return r1, r2

    scale = max(abs(u0), abs(v0), abs(b_next), 1.0)
    u, v = u0, v0
    for iteration in range(max_iters):
        r1, r2 = residual(u, v)
        if max(abs(r1), abs(r2)) <= tol * scale:
            return u, v
        j11 = row_l[0] - c * src_coef * fp(u)
        j12 = row_l[1] + c * src_coef
        det = j11 * bv - j12 * bu
        if det == 0.0:
            break
        du = (-r1 * bv + r2 * j12) / det
        dv = (-j11 * r2 + bu * r1) / det
        u, v = u + du, v + dv
        if not (np.isfinite(u) and np.isfinite(v)):
            break

    # Bisection fallback on the scalar reduced equation.
    if bv != 0.0:
        def scalar_res(uu):
            vv = (b_next - bu * uu) / bv
            return residual(uu, vv)[0]

        width = max(1.0, abs(u0))
        lo = hi = u0
        flo = scalar_res(lo)
        if abs(flo) <= tol * scale:
            return lo, (b_next - bu * lo) / bv
        for _ in range(60):
            lo, hi = u0 - width, u0 + width
            flo, fhi = scalar_res(lo), scalar_res(hi)
            if flo == 0.0:
                return lo, (b_next - bu * lo) / bv
            if fhi == 0.0:
                return hi, (b_next - bu * hi) / bv
            if flo * fhi < 0.0:
                break
            width *= 2.0
        else:
            raise NewtonFailure(
                "boundary solve: no bracket for bisection",
                iterations=max_iters,
                residual=abs(scalar_res(u0)),
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = scalar_res(mid)
            if abs(fm) <= tol * scale or hi - lo <= 1e-16 * max(1.0, abs(mid)):
                return mid, (b_next - bu * mid) / bv
            if flo * fm <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        return mid, (b_next - bu * mid) / bv
    # bv == 0: u' is pinned by the boundary condition, r1 is affine in v'.
    if bu == 0.0:
        raise NewtonFailure("boundary condition is vacuous (bu = bv = 0)")
    u = b_next / bu
    coef = row_l[1] + c * src_coef
    if coef == 0.0:
        raise NewtonFailure("boundary solve: singular scalar reduction")
    rhs = (
        row_l[0] * (u - u0)
        - row_l[1] * v0
        + drift
        - c * src_coef * f(u)
        - tau * src_coef * g0
    )
    return u, -rhs / coef


def _jinxin_interior(values, lam, g_plus, g_minus, r_c, tau, model, g_next):
    """Shared interior update: returns (u_new, v_new) on points 1..N-2."""
    d_minus = values[1:-1] - values[:-2]
    d_plus = values[2:] - values[1:-1]
    flux = np.einsum("...ij,...j->...i", g_plus, d_minus) + np.einsum(
        "...ij,...j->...i", g_minus, d_plus
    )
    u_mid, v_mid = values[1:-1, 0], values[1:-1, 1]
    u_new = u_mid - lam * flux[:, 0]
    dv = (-lam * flux[:, 1] + r_c * (model.flux(u_new) - v_mid) + tau * g_next) / (
        1.0 + r_c
    )
    return u_new, v_mid + dv


def _jinxin_right_edge(model, config, values, new_values, lam, r_c, tau, x_last, t_next,
                       g_plus_last, g_minus_last, g_last):
    """Close the artificial right edge: Dirichlet from reference data, or a
    zero-order extrapolation ghost (so the outgoing difference vanishes)."""
    if config.right_boundary == "reference_dirichlet":
        if model.edge_data is None:
            raise ValueError("reference_dirichlet needs model.edge_data")
        new_values[-1] = np.asarray(model.edge_data(x_last, t_next), dtype=float)
        return
    d_minus = values[-1] - values[-2]
    flux = g_plus_last @ d_minus  # ghost = last point: the + difference is 0
    u_new = values[-1, 0] - lam * flux[0]
    dv = (-lam * flux[1] + r_c * (model.flux(u_new) - values[-1, 1]) + tau * g_last) / (
        1.0 + r_c
    )
    new_values[-1] = (u_new, values[-1, 1] + dv)


def jinxin_upwind_step(model: JinXinModel, grid: Grid1D, state: SolutionState,
                       tau: float, config: SchemeConfig = None) -> SolutionState:
    """One step of the classical upwind IMEX scheme for the 2x2 model.

    Interior flux splits along the +-1 characteristics of the coefficient
    matrix; the source is implicit (explicit u row, closed-form v row).  The
    boundary point couples the outgoing characteristic equation with the
    discrete boundary condition.
    """
    config = config or SchemeConfig()
    _check_cfl(tau, grid.h, 1.0, config.cfl)
    values = state.values
    lam = tau / grid.h
    r_c = tau / model.epsilon
    t_next = state.time + tau
    x = grid.points()
    g_next = _forcing_at(model, x, t_next)
    g_mid = g_next[1:-1] if np.ndim(g_next) else g_next

    new_values = np.empty_like(values)
    u_new, v_new = _jinxin_interior(
        values, lam, _A_PLUS, _A_MINUS, r_c, tau, model, g_mid
    )
    new_values[1:-1, 0] = u_new
    new_values[1:-1, 1] = v_new

    bu, bv = model.bc_coeffs
    g0 = g_next[0] if np.ndim(g_next) else g_next
    # Outgoing row: L- (U' - U0) + lam L- A (U1 - U0) = (tau/eps) L- (0, f-v).
    u0, v0 = values[0]
    du1, dv1 = values[1] - values[0]
    new_values[0] = _solve_left_boundary(
        row_l=_L_MINUS_A,
        flux_l=_L_MINUS_A @ np.array([[0.0, 1.0], [1.0, 0.0]]),
        src_coef=_L_MINUS_A[1],
        u0=u0, v0=v0, du1=du1, dv1=dv1,
        lam=lam, c=r_c, tau=tau, g0=g0,
        bu=bu, bv=bv, b_next=model.bc_data(t_next),
        model=model, tol=config.newton_tol, max_iters=config.newton_max_iters,
    )
    g_last = g_next[-1] if np.ndim(g_next) else g_next
    _jinxin_right_edge(
        model, config, values, new_values, lam, r_c, tau, x[-1], t_next,
        _A_PLUS, _A_MINUS, g_last,
    )
    return SolutionState(time=t_next, values=new_values)


def _jinxin_eta_products(a_arr, tau, epsilon, config):
    """Left rows and split flux matrices for the smooth/hard switch."""
    rule = config.switch_rule or "smooth_eta"
    ratio = tau / epsilon
    if rule == "hard_tau_eps":
        eta = None if ratio >= 1.0 else 0.0
    else:
        eta = None if ratio > _STIFF_LIMIT_RATIO else ratio**config.p_exponent
    lp, lm = _eta_left_rows(a_arr, eta)
    rp, rm = _rows_to_right_columns(lp, lm)
    # G+- = A R+- L+- with A = [[0,1],[1,0]]: A R swaps the two components.
    arp = rp[..., ::-1]
    arm = rm[..., ::-1]
    g_plus = arp[..., :, None] * lp[..., None, :]
    g_minus = arm[..., :, None] * lm[..., None, :]
    return lp, lm, g_plus, g_minus


def jinxin_bap_step(model: JinXinModel, grid: Grid1D, state: SolutionState,
                    tau: float, config: SchemeConfig = None) -> SolutionState:
    """One step of the boundary-aware scheme for the 2x2 model.

    The flux splits along the eigenvectors of M(eta) evaluated pointwise at
    the local slope (or its sign); the boundary pair uses the stable row of
    M(eta) against A^{-1} so the equilibrium projection survives eta -> inf.
    """
    config = config or SchemeConfig()
    _check_cfl(tau, grid.h, 1.0, config.cfl)
    values = state.values
    lam = tau / grid.h
    r_c = tau / model.epsilon
    t_next = state.time + tau
    x = grid.points()
    g_next = _forcing_at(model, x, t_next)
    g_mid = g_next[1:-1] if np.ndim(g_next) else g_next

    a_arr = _resolve_slopes(model, values[:, 0], config.a_mode)
    lp, lm, g_plus, g_minus = _jinxin_eta_products(a_arr, tau, model.epsilon, config)

    new_values = np.empty_like(values)
    u_new, v_new = _jinxin_interior(
        values, lam, g_plus[1:-1], g_minus[1:-1], r_c, tau, model, g_mid
    )
    new_values[1:-1, 0] = u_new
    new_values[1:-1, 1] = v_new

    bu, bv = model.bc_coeffs
    g0 = g_next[0] if np.ndim(g_next) else g_next
    u0, v0 = values[0]
    du1, dv1 = values[1] - values[0]
    lm0 = lm[0]
    # Stable row against A^{-1} (= A here): components swap.
    row_l = lm0[::-1]
    new_values[0] = _solve_left_boundary(
        row_l=row_l,
        flux_l=lm0,
        src_coef=row_l[1],
        u0=u0, v0=v0, du1=du1, dv1=dv1,
        lam=lam, c=r_c, tau=tau, g0=g0,
        bu=bu, bv=bv, b_next=model.bc_data(t_next),
        model=model, tol=config.newton_tol, max_iters=config.newton_max_iters,
    )
    g_last = g_next[-1] if np.ndim(g_next) else g_next
    _jinxin_right_edge(
        model, config, values, new_values, lam, r_c, tau, x[-1], t_next,
        g_plus[-1], g_minus[-1], g_last,
    )
    return SolutionState(time=t_next, values=new_values)


def _linear_source_increment(sys, flux, values, r_c):
    """(I - r_c Q)^{-1} applied blockwise: the conserved rows stay exact and
    only the relaxing block needs a solve."""
    n, r = sys.n, sys.r
    k = n - r
    s_block = sys.s_block
    incr = np.empty_like(values)
    incr[:, :k] = -flux[:, :k]
    rhs = -flux[:, k:] + (values[:, k:] @ (r_c * s_block).T)
    mat = np.eye(r) - r_c * s_block
    incr[:, k:] = linalg.solve_dense(mat, rhs.T).T
    return incr


def _linear_right_edge(sys, config, values, new_values, lam, r_c, t_next, x_last, ap):
    if config.right_boundary == "reference_dirichlet":
        if sys.edge_data is None:
            raise ValueError("reference_dirichlet needs sys.edge_data")
        new_values[-1] = np.asarray(sys.edge_data(x_last, t_next), dtype=float)
        return
    flux = (values[-1] - values[-2]) @ ap.T   # ghost = last: + difference is 0
    incr = _linear_source_increment(sys, lam * flux[None, :], values[-1:], r_c)
    new_values[-1] = values[-1] + incr[0]


def linear_upwind_step(sys: LinearRelaxationSystem, split_a: linalg.SpectralSplit,
                       grid: Grid1D, state: SolutionState, tau: float,
                       config: SchemeConfig = None) -> SolutionState:
    """Classical upwind IMEX step for a linear relaxation system."""
    config = config or SchemeConfig()
    speeds = [abs(p.value.real) for p in linalg.eigen_small(sys.a)]
    _check_cfl(tau, grid.h, max(speeds), config.cfl)
    values = state.values
    lam = tau / grid.h
    r_c = tau / sys.epsilon
    t_next = state.time + tau

    ap = sys.a @ split_a.r_plus @ split_a.l_plus
    am = sys.a @ split_a.r_minus @ split_a.l_minus

    new_values = np.empty_like(values)
    flux = (values[1:-1] - values[:-2]) @ ap.T + (values[2:] - values[1:-1]) @ am.T
    incr = _linear_source_increment(sys, lam * flux, values[1:-1], r_c)
    new_values[1:-1] = values[1:-1] + incr

    if sys.b is None:
        raise ValueError("linear_upwind_step needs a boundary matrix; got an IVP system")
    # Rows: L-^A (I - r_c Q) U' = L-^A U0 - lam L-^A A (U1 - U0), then B U' = b.
    l_minus = split_a.l_minus
    top = l_minus @ (np.eye(sys.n) - r_c * sys.q)
    mat = np.vstack([top, sys.b])
    rhs_top = l_minus @ values[0] - lam * (l_minus @ sys.a) @ (values[1] - values[0])
    rhs = np.concatenate([rhs_top, np.atleast_1d(sys.bc_data(t_next))])
    delta = linalg.solve_dense(mat, rhs - mat @ values[0])
    new_values[0] = values[0] + delta

    _linear_right_edge(sys, config, values, new_values, lam, r_c, t_next,
                       grid.points()[-1], ap)
    return SolutionState(time=t_next, values=new_values)


def _stiff_boundary_blocks(sys, derived):
    """Rows L- A^{-1} and L- A^{-1} Q assembled from the block factorization.

    The conserved-row coupling to the relaxing block is exactly zero here;
    a numerical triple product would blur that zero by eps, and the source
    scaling tau/epsilon would then amplify the blur into the solve.
    """
    n, r = derived.n, derived.r
    k = n - r
    a11 = sys.a[:k, :k]
    s11 = derived.split_a11
    sh = derived.split_h
    n_rows = s11.n_minus + sh.n_plus
    rows_ainv = np.zeros((n_rows, n))
    rows_ainv_q = np.zeros((n_rows, n))
    if s11.n_minus:
        rows_ainv[: s11.n_minus, :k] = s11.l_minus @ linalg.inverse(a11)
    if sh.n_plus:
        lh = sh.l_plus
        rows_ainv[s11.n_minus:, :k] = lh @ derived.y_mat
        rows_ainv[s11.n_minus:, k:] = lh @ derived.x_mat
        rows_ainv_q[s11.n_minus:, k:] = lh @ derived.h
    return rows_ainv, rows_ainv_q


def linear_bap_step(sys: LinearRelaxationSystem, derived, grid: Grid1D,
                    state: SolutionState, tau: float,
                    config: SchemeConfig = None) -> SolutionState:
    """Boundary-aware step for a linear system with the hard switch.

    For tau < epsilon the splitting equals the characteristic one and the
    step *is* the classical upwind step.  For tau >= epsilon the limit bases
    replace it and the boundary block is assembled from the equilibrium/layer
    factorization so its analytic zero pattern survives in floating point.
    """
    config = config or SchemeConfig()
    if tau < sys.epsilon:
        return linear_upwind_step(sys, derived.split_a, grid, state, tau, config)
    speeds = [abs(p.value.real) for p in linalg.eigen_small(sys.a)]
    _check_cfl(tau, grid.h, max(speeds), config.cfl)
    values = state.values
    lam = tau / grid.h
    r_c = tau / sys.epsilon
    t_next = state.time + tau

    r_plus, r_minus = derived.r_inf_plus, derived.r_inf_minus
    l_plus, l_minus = derived.l_inf_plus, derived.l_inf_minus
    gp = sys.a @ r_plus @ l_plus
    gm = sys.a @ r_minus @ l_minus

    new_values = np.empty_like(values)
    flux = (values[1:-1] - values[:-2]) @ gp.T + (values[2:] - values[1:-1]) @ gm.T
    incr = _linear_source_increment(sys, lam * flux, values[1:-1], r_c)
    new_values[1:-1] = values[1:-1] + incr

    if sys.b is None:
        raise ValueError("linear_bap_step needs a boundary matrix; got an IVP system")
    rows_ainv, rows_ainv_q = _stiff_boundary_blocks(sys, derived)
    top = rows_ainv - r_c * rows_ainv_q
    mat = np.vstack([top, sys.b])
    rhs_top = rows_ainv @ values[0] - lam * l_minus @ (values[1] - values[0])
    rhs = np.concatenate([rhs_top, np.atleast_1d(sys.bc_data(t_next))])
    delta = linalg.solve_dense(mat, rhs - mat @ values[0])
    new_values[0] = values[0] + delta

    _linear_right_edge(sys, config, values, new_values, lam, r_c, t_next,
                       grid.points()[-1], gp)
    return SolutionState(time=t_next, values=new_values)


def max_wave_speed(problem):
    if isinstance(problem, JinXinModel):
        return 1.0
    return max(abs(p.value.real) for p in linalg.eigen_small(problem.a))


def run_ibvp(problem, scheme: str, grid: Grid1D, t_final: float,
             config: SchemeConfig = None, tau: float = None,
             output_times=None):
    """March the IBVP to ``t_final`` and return states at the output times.

    The step is fixed at cfl*h/max_speed (or the explicit ``tau``); steps are
    shortened to land exactly on each requested output time and on t_final.
    """
    config = config or SchemeConfig()
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    state = initial_state(problem, grid)
    outputs = sorted(set((output_times or [])) | {t_final})
    trajectory = []

    speed = max_wave_speed(problem)
    base_tau = tau if tau is not None else config.cfl * grid.h / speed
    _check_cfl(base_tau, grid.h, speed, config.cfl)

    if isinstance(problem, JinXinModel):
        problem.flux_sign(state.values[:, 0])
        if scheme == "upwind":
            step = lambda st, dt: jinxin_upwind_step(problem, grid, st, dt, config)
        elif scheme == "bap":
            step = lambda st, dt: jinxin_bap_step(problem, grid, st, dt, config)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    else:
        if scheme == "upwind":
            split_a = linalg.spectral_split(problem.a)
            step = lambda st, dt: linear_upwind_step(problem, split_a, grid, st, dt, config)
        elif scheme == "bap":
            derived = derive_structure(problem)
            step = lambda st, dt: linear_bap_step(problem, derived, grid, st, dt, config)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")

    if t_final == 0.0:
        return [state]

    next_out = 0
    step_index = 0
    while next_out < len(outputs):
        target = outputs[next_out]
        while state.time < target - 1e-13 * max(target, 1.0):
            dt = min(base_tau, target - state.time)
            if dt <= 1e-14 * base_tau:
                break
            state = step(state, dt)
            step_index += 1
            if not np.isfinite(state.values).all():
                raise NumericalBlowup(
                    f"non-finite values after step {step_index} (t = {state.time:.6g})",
                    step_index=step_index,
                    time=state.time,
                )
        trajectory.append(SolutionState(time=target, values=state.values.copy()))
        next_out += 1
    return trajectory
