"""Interface problems: relaxation time epsilon(x) jumping across grid-aligned
breakpoints, solved on one grid with per-point one-sided operator selection.

Every point j carries the one-sided limits eps(x_j-) and eps(x_j+).  The
incoming-from-the-right rows use the right-side regime, the
incoming-from-the-left rows the left-side regime:

    L-(right) A^{-1} (I - tau/eps_r Q) U'_j = L- A^{-1} U_j - lam L- (U_{j+1} - U_j)
    L+(left)  A^{-1} (I - tau/eps_l Q) U'_j = L+ A^{-1} U_j - lam L+ (U_j - U_{j-1})

with L chosen per side: the characteristic rows of A while eps > tau, the
equilibrium-limit rows once eps <= tau (hard rule), or the smooth blend
through M(eta) for the 2x2 model.
"""

from __future__ import annotations

import warnings
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NewtonFailure, NumericalBlowup, SingularMatrix
from .models import JinXinModel, LinearRelaxationSystem, derive_structure
from .schemes import (
    Grid1D,
    SchemeConfig,
    SolutionState,
    _eta_left_rows,
    _forcing_at,
    _jinxin_eta_products,
    _jinxin_interior,
    _linear_source_increment,
    _resolve_slopes,
    initial_state,
    max_wave_speed,
)

_STIFF_LIMIT_RATIO = 1e8


@dataclass(frozen=True)
class PiecewiseEpsilon:
    """Piecewise-constant relaxation time; a breakpoint belongs to the piece
    on its right."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(bp) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(v <= 0 for v in vals):
            raise ValueError("relaxation times must be positive")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, x):
        return self.values[bisect_right(self.breakpoints, x)]

    def left_limit(self, x):
        return self.values[bisect_left(self.breakpoints, x)]

    def right_limit(self, x):
        return self.values[bisect_right(self.breakpoints, x)]


def epsilon_limits(eps: PiecewiseEpsilon, x: float):
    """One-sided limits (eps(x-), eps(x+))."""
    return eps.left_limit(x), eps.right_limit(x)


@dataclass
class InterfaceGrid:
    """Grid plus per-point one-sided relaxation times."""

    grid: Grid1D
    eps_left: np.ndarray
    eps_right: np.ndarray

    @classmethod
    def build(cls, grid: Grid1D, eps: PiecewiseEpsilon):
        """Evaluate the one-sided limits on the grid; breakpoints that miss
        every grid point are snapped to the nearest one (with a warning)."""
        x = grid.points()
        snapped = []
        for b in eps.breakpoints:
            j = int(round((b - grid.x0) / grid.h))
            j = min(max(j, 0), grid.num_points - 1)
            if abs(x[j] - b) > 1e-9 * max(grid.h, 1.0):
                warnings.warn(
                    f"breakpoint {b} is not grid-aligned; snapped to x={x[j]}",
                    stacklevel=2,
                )
            snapped.append(x[j])
        eps_s = PiecewiseEpsilon(tuple(snapped), eps.values)
        eps_l = np.array([eps_s.left_limit(xx) for xx in x])
        eps_r = np.array([eps_s.right_limit(xx) for xx in x])
        return cls(grid=grid, eps_left=eps_l, eps_right=eps_r)


@dataclass
class InterfaceProblem:
    """A relaxation model on the whole line with variable epsilon(x)."""

    model: object                  # JinXinModel or LinearRelaxationSystem
    eps: PiecewiseEpsilon
    edge_data: callable = None     # (x, t) -> state vector, for Dirichlet edges

    @property
    def is_jinxin(self):
        return isinstance(self.model, JinXinModel)

    def n_components(self):
        return 2 if self.is_jinxin else self.model.n


def _left_rows_linear(sys, derived, split_a, stiff, sign):
    """Row blocks (L A^{-1}, L A^{-1} Q) for one side and one direction.

    Stiff rows come from the block factorization so the analytic zeros in
    the source coupling are exact; non-stiff rows are plain products.
    """
    n, r = sys.n, sys.r
    k = n - r
    if not stiff:
        l_block = split_a.l_minus if sign == "minus" else split_a.l_plus
        rows_ainv = l_block @ linalg.inverse(sys.a)
        return rows_ainv, rows_ainv @ sys.q
    s11, sh = derived.split_a11, derived.split_h
    if sign == "minus":
        l_top, l_bot = s11.l_minus, sh.l_plus
    else:
        l_top, l_bot = s11.l_plus, sh.l_minus
    n_rows = l_top.shape[0] + l_bot.shape[0]
    rows_ainv = np.zeros((n_rows, n))
    rows_q = np.zeros((n_rows, n))
    if l_top.shape[0]:
        rows_ainv[: l_top.shape[0], :k] = l_top @ linalg.inverse(sys.a[:k, :k])
    if l_bot.shape[0]:
        rows_ainv[l_top.shape[0]:, :k] = l_bot @ derived.y_mat
        rows_ainv[l_top.shape[0]:, k:] = l_bot @ derived.x_mat
        rows_q[l_top.shape[0]:, k:] = l_bot @ derived.h
    return rows_ainv, rows_q


def _plain_left_blocks(sys, derived, split_a, stiff, sign):
    if not stiff:
        return split_a.l_minus if sign == "minus" else split_a.l_plus
    return derived.l_inf_minus if sign == "minus" else derived.l_inf_plus


def select_operators(problem, eps_left, eps_right, tau, config=None,
                     derived=None, split_a=None, a=None):
    """Row blocks (L_minus for the right side, L_plus for the left side)
    selected by the per-side regime.

    For the 2x2 model ``a`` is the local slope and the smooth blend through
    M(eta) is the default; general linear systems use the hard tau/eps rule.
    """
    config = config or SchemeConfig()
    if isinstance(problem, JinXinModel):
        if a is None:
            raise ValueError("the 2x2 model needs the local slope a")
        rule = config.switch_rule or "smooth_eta"
        etas = []
        for side_eps in (eps_right, eps_left):
            ratio = tau / side_eps
            if rule == "hard_tau_eps":
                etas.append(None if ratio >= 1.0 else 0.0)
            else:
                etas.append(None if ratio > _STIFF_LIMIT_RATIO else ratio**config.p_exponent)
        _, lm = _eta_left_rows(np.array(a), etas[0])
        lp, _ = _eta_left_rows(np.array(a), etas[1])
        return lm[None, :], lp[None, :]
    if derived is None:
        derived = derive_structure(problem)
    if split_a is None:
        split_a = derived.split_a
    l_minus = _plain_left_blocks(problem, derived, split_a, eps_right <= tau, "minus")
    l_plus = _plain_left_blocks(problem, derived, split_a, eps_left <= tau, "plus")
    return l_minus, l_plus


class _LinearInterfaceOps:
    """Per-regime-class matrices for the linear interface step, grouped by
    the pair (eps_left, eps_right) so each class solves with one inverse."""

    def __init__(self, sys, igrid, tau, config):
        self.sys = sys
        self.igrid = igrid
        self.tau = tau
        derived = derive_structure(sys)
        split_a = derived.split_a
        self.derived = derived
        self.split_a = split_a
        lam_pairs = {}
        self.class_index = np.zeros(igrid.grid.num_points, dtype=int)
        self.classes = []
        for j in range(igrid.grid.num_points):
            pair = (igrid.eps_left[j], igrid.eps_right[j])
            if pair not in lam_pairs:
                lam_pairs[pair] = len(self.classes)
                self.classes.append(self._build_class(pair))
            self.class_index[j] = lam_pairs[pair]

    def _build_class(self, pair):
        sys, tau = self.sys, self.tau
        eps_l, eps_r = pair
        lm_ainv, lm_q = _left_rows_linear(
            sys, self.derived, self.split_a, eps_r <= tau, "minus"
        )
        lp_ainv, lp_q = _left_rows_linear(
            sys, self.derived, self.split_a, eps_l <= tau, "plus"
        )
        lm = _plain_left_blocks(sys, self.derived, self.split_a, eps_r <= tau, "minus")
        lp = _plain_left_blocks(sys, self.derived, self.split_a, eps_l <= tau, "plus")
        mat = np.vstack([
            lm_ainv - (tau / eps_r) * lm_q,
            lp_ainv - (tau / eps_l) * lp_q,
        ])
        det = linalg.determinant(mat)
        if abs(det) < 1e-12:
            raise SingularMatrix(
                f"stacked interface rows are singular for eps pair {pair}"
            )
        return {
            "mat": mat,
            "mat_inv": linalg.inverse(mat),
            "rows_ainv": np.vstack([lm_ainv, lp_ainv]),
            "lm": lm,
            "lp": lp,
            "n_minus": lm.shape[0],
        }

    def uniform(self):
        return len(self.classes) == 1 and np.all(
            self.igrid.eps_left[0] == self.igrid.eps_right[0]
        )


def _interface_step_linear(problem, igrid, state, tau, config, ops):
    sys = problem.model
    grid = igrid.grid
    lam = tau / grid.h
    values = state.values
    t_next = state.time + tau
    n = sys.n
    new_values = np.empty_like(values)

    if ops.uniform():
        # No interface anywhere: the stacked rows are row-equivalent to the
        # single-domain interior update, so use that kernel directly.
        eps0 = igrid.eps_left[0]
        r_c = tau / eps0
        derived, split_a = ops.derived, ops.split_a
        if eps0 > tau:
            gp = sys.a @ split_a.r_plus @ split_a.l_plus
            gm = sys.a @ split_a.r_minus @ split_a.l_minus
        else:
            gp = sys.a @ derived.r_inf_plus @ derived.l_inf_plus
            gm = sys.a @ derived.r_inf_minus @ derived.l_inf_minus
        flux = (values[1:-1] - values[:-2]) @ gp.T + (values[2:] - values[1:-1]) @ gm.T
        incr = _linear_source_increment(sys, lam * flux, values[1:-1], r_c)
        new_values[1:-1] = values[1:-1] + incr
    else:
        d_plus = np.zeros_like(values)
        d_minus = np.zeros_like(values)
        d_plus[:-1] = values[1:] - values[:-1]
        d_minus[1:] = values[1:] - values[:-1]
        for ci, cls in enumerate(ops.classes):
            sel = np.flatnonzero(ops.class_index == ci)
            sel = sel[(sel > 0) & (sel < grid.num_points - 1)]
            if sel.size == 0:
                continue
            u = values[sel]
            rhs = u @ cls["rows_ainv"].T
            rhs[:, : cls["n_minus"]] -= lam * (d_plus[sel] @ cls["lm"].T)
            rhs[:, cls["n_minus"]:] -= lam * (d_minus[sel] @ cls["lp"].T)
            delta = (rhs - u @ cls["mat"].T) @ cls["mat_inv"].T
            new_values[sel] = u + delta

    _interface_edges_linear(problem, igrid, state, tau, new_values, ops, lam)
    return SolutionState(time=t_next, values=new_values)


def _interface_edges_linear(problem, igrid, state, tau, new_values, ops, lam):
    """Domain edges: Dirichlet from edge data, or one-sided stencils with
    the outgoing difference zeroed (zero-order extrapolation ghost)."""
    values = state.values
    grid = igrid.grid
    t_next = state.time + tau
    x = grid.points()
    for j, d_out in ((0, "left"), (grid.num_points - 1, "right")):
        if problem.edge_data is not None:
            new_values[j] = np.asarray(problem.edge_data(x[j], t_next), dtype=float)
            continue
        cls = ops.classes[ops.class_index[j]]
        u = values[j]
        dp = values[j + 1] - values[j] if d_out == "left" else np.zeros_like(u)
        dm = values[j] - values[j - 1] if d_out == "right" else np.zeros_like(u)
        rhs = cls["rows_ainv"] @ u
        rhs[: cls["n_minus"]] -= lam * (cls["lm"] @ dp)
        rhs[cls["n_minus"]:] -= lam * (cls["lp"] @ dm)
        delta = cls["mat_inv"] @ (rhs - cls["mat"] @ u)
        new_values[j] = u + delta


def _interface_step_jinxin(problem, igrid, state, tau, config):
    model = problem.model
    grid = igrid.grid
    lam = tau / grid.h
    values = state.values
    t_next = state.time + tau
    x = grid.points()
    g_next = _forcing_at(model, x, t_next)
    g_arr = g_next if np.ndim(g_next) else np.full(grid.num_points, float(g_next))

    a_arr = _resolve_slopes(model, values[:, 0], config.a_mode)
    uniform = np.all(igrid.eps_left == igrid.eps_left[0]) and np.all(
        igrid.eps_right == igrid.eps_left[0]
    )
    new_values = np.empty_like(values)
    if uniform:
        eps0 = igrid.eps_left[0]
        _, _, g_plus, g_minus = _jinxin_eta_products(a_arr, tau, eps0, config)
        u_new, v_new = _jinxin_interior(
            values, lam, g_plus[1:-1], g_minus[1:-1], tau / eps0, tau, model,
            g_arr[1:-1],
        )
        new_values[1:-1, 0] = u_new
        new_values[1:-1, 1] = v_new
        _interface_edges_jinxin(
            problem, igrid, state, tau, new_values, config, a_arr, g_arr, lam
        )
        return SolutionState(time=t_next, values=new_values)

    rule = config.switch_rule or "smooth_eta"

    def side_rows(eps_side):
        out_lp = np.empty((grid.num_points, 2))
        out_lm = np.empty((grid.num_points, 2))
        for eps_val in np.unique(eps_side):
            mask = eps_side == eps_val
            ratio = tau / eps_val
            if rule == "hard_tau_eps":
                eta = None if ratio >= 1.0 else 0.0
            else:
                eta = None if ratio > _STIFF_LIMIT_RATIO else ratio**config.p_exponent
            lp, lm = _eta_left_rows(a_arr[mask], eta)
            out_lp[mask] = lp
            out_lm[mask] = lm
        return out_lp, out_lm

    _, lm_r = side_rows(igrid.eps_right)
    lp_l, _ = side_rows(igrid.eps_left)

    cr = tau / igrid.eps_right
    cl = tau / igrid.eps_left
    c_minus = lm_r[:, ::-1]        # L- A^{-1}: components swap under A
    c_plus = lp_l[:, ::-1]

    d_plus = np.zeros_like(values)
    d_minus = np.zeros_like(values)
    d_plus[:-1] = values[1:] - values[:-1]
    d_minus[1:] = values[1:] - values[:-1]
    if problem.edge_data is None:
        pass  # zeroed outgoing differences already encode extrapolation
    drift1 = lam * np.einsum("ij,ij->i", lm_r, d_plus)
    drift2 = lam * np.einsum("ij,ij->i", lp_l, d_minus)

    u0 = values[:, 0].copy()
    v0 = values[:, 1].copy()
    u, v = u0.copy(), v0.copy()
    f, fp = model.flux, model.flux_derivative
    scale = np.maximum.reduce([np.abs(u0), np.abs(v0), np.ones_like(u0)])
    tol = config.newton_tol
    src1 = cr * c_minus[:, 1]
    src2 = cl * c_plus[:, 1]
    converged = np.zeros(u.shape, dtype=bool)
    for _ in range(config.newton_max_iters):
        fu = f(u)
        r1 = (
            c_minus[:, 0] * (u - u0) + c_minus[:, 1] * (v - v0) + drift1
            - src1 * (fu - v) - tau * c_minus[:, 1] * g_arr
        )
        r2 = (
            c_plus[:, 0] * (u - u0) + c_plus[:, 1] * (v - v0) + drift2
            - src2 * (fu - v) - tau * c_plus[:, 1] * g_arr
        )
        converged = (np.abs(r1) <= tol * scale) & (np.abs(r2) <= tol * scale)
        if converged.all():
            break
        fpu = fp(u)
        j11 = c_minus[:, 0] - src1 * fpu
        j12 = c_minus[:, 1] + src1
        j21 = c_plus[:, 0] - src2 * fpu
        j22 = c_plus[:, 1] + src2
        det = j11 * j22 - j12 * j21
        if np.any(np.abs(det) < 1e-300):
            raise SingularMatrix("singular per-point interface system")
        du = (-r1 * j22 + r2 * j12) / det
        dv = (-j11 * r2 + j21 * r1) / det
        active = ~converged
        u = np.where(active, u + du, u)
        v = np.where(active, v + dv, v)
    else:
        bad = int(np.flatnonzero(~converged)[0])
        raise NewtonFailure(
            f"interface Newton did not converge at point {bad}",
            iterations=config.newton_max_iters,
            residual=float(max(np.abs(r1[bad]), np.abs(r2[bad]))),
        )
    new_values[:, 0] = u
    new_values[:, 1] = v
    if problem.edge_data is not None:
        new_values[0] = np.asarray(problem.edge_data(x[0], t_next), dtype=float)
        new_values[-1] = np.asarray(problem.edge_data(x[-1], t_next), dtype=float)
    return SolutionState(time=t_next, values=new_values)


def _interface_edges_jinxin(problem, igrid, state, tau, new_values, config,
                            a_arr, g_arr, lam):
    model = problem.model
    grid = igrid.grid
    values = state.values
    x = grid.points()
    t_next = state.time + tau
    if problem.edge_data is not None:
        new_values[0] = np.asarray(problem.edge_data(x[0], t_next), dtype=float)
        new_values[-1] = np.asarray(problem.edge_data(x[-1], t_next), dtype=float)
        return
    for j, direction in ((0, "left"), (grid.num_points - 1, "right")):
        eps_j = igrid.eps_right[j] if direction == "left" else igrid.eps_left[j]
        r_c = tau / eps_j
        _, _, g_plus, g_minus = _jinxin_eta_products(
            np.array([a_arr[j]]), tau, eps_j, config
        )
        dm = values[j] - values[j - 1] if direction == "right" else np.zeros(2)
        dp = values[j + 1] - values[j] if direction == "left" else np.zeros(2)
        flux = g_plus[0] @ dm + g_minus[0] @ dp
        u_new = values[j, 0] - lam * flux[0]
        dv = (-lam * flux[1] + r_c * (model.flux(u_new) - values[j, 1]) + tau * g_arr[j]) / (
            1.0 + r_c
        )
        new_values[j] = (u_new, values[j, 1] + dv)


def interface_step(problem: InterfaceProblem, igrid: InterfaceGrid,
                   state: SolutionState, tau: float,
                   config: SchemeConfig = None, _ops_cache=None) -> SolutionState:
    """One step of the one-domain interface scheme."""
    config = config or SchemeConfig()
    if problem.is_jinxin:
        return _interface_step_jinxin(problem, igrid, state, tau, config)
    ops = _ops_cache or _LinearInterfaceOps(problem.model, igrid, tau, config)
    return _interface_step_linear(problem, igrid, state, tau, config, ops)


def interface_upwind_step(problem: InterfaceProblem, igrid: InterfaceGrid,
                          state: SolutionState, tau: float,
                          config: SchemeConfig = None) -> SolutionState:
    """Classical upwind IMEX step on the interface grid: characteristic flux
    split everywhere, pointwise epsilon(x_j) in the implicit source."""
    config = config or SchemeConfig()
    grid = igrid.grid
    lam = tau / grid.h
    values = state.values
    t_next = state.time + tau
    eps_j = igrid.eps_right        # value convention: breakpoint -> right piece
    new_values = np.empty_like(values)

    if problem.is_jinxin:
        model = problem.model
        x = grid.points()
        g_next = _forcing_at(model, x, t_next)
        g_arr = g_next if np.ndim(g_next) else np.full(grid.num_points, float(g_next))
        from .schemes import _A_MINUS, _A_PLUS

        d_minus = values[1:-1] - values[:-2]
        d_plus = values[2:] - values[1:-1]
        flux = d_minus @ _A_PLUS.T + d_plus @ _A_MINUS.T
        r_c = tau / eps_j[1:-1]
        u_new = values[1:-1, 0] - lam * flux[:, 0]
        dv = (-lam * flux[:, 1] + r_c * (model.flux(u_new) - values[1:-1, 1])
              + tau * g_arr[1:-1]) / (1.0 + r_c)
        new_values[1:-1, 0] = u_new
        new_values[1:-1, 1] = values[1:-1, 1] + dv
        for j, dm, dp in ((0, np.zeros(2), values[1] - values[0]),
                          (grid.num_points - 1, values[-1] - values[-2], np.zeros(2))):
            if problem.edge_data is not None:
                new_values[j] = np.asarray(problem.edge_data(x[j], t_next), dtype=float)
                continue
            fl = _A_PLUS @ dm + _A_MINUS @ dp
            rc = tau / eps_j[j]
            un = values[j, 0] - lam * fl[0]
            dv = (-lam * fl[1] + rc * (model.flux(un) - values[j, 1]) + tau * g_arr[j]) / (
                1.0 + rc
            )
            new_values[j] = (un, values[j, 1] + dv)
        return SolutionState(time=t_next, values=new_values)

    sys = problem.model
    split_a = linalg.spectral_split(sys.a)
    ap = sys.a @ split_a.r_plus @ split_a.l_plus
    am = sys.a @ split_a.r_minus @ split_a.l_minus
    d_minus = values[1:-1] - values[:-2]
    d_plus = values[2:] - values[1:-1]
    flux = d_minus @ ap.T + d_plus @ am.T
    for eps_val in np.unique(eps_j[1:-1]):
        mask = np.flatnonzero(eps_j[1:-1] == eps_val)
        incr = _linear_source_increment(
            sys, lam * flux[mask], values[1:-1][mask], tau / eps_val
        )
        new_values[1:-1][mask] = values[1:-1][mask] + incr
    x = grid.points()
    for j, dm, dp in ((0, np.zeros(sys.n), values[1] - values[0]),
                      (grid.num_points - 1, values[-1] - values[-2], np.zeros(sys.n))):
        if problem.edge_data is not None:
            new_values[j] = np.asarray(problem.edge_data(x[j], t_next), dtype=float)
            continue
        fl = ap @ dm + am @ dp
        incr = _linear_source_increment(
            sys, (lam * fl)[None, :], values[j][None, :], tau / eps_j[j]
        )
        new_values[j] = values[j] + incr[0]
    return SolutionState(time=t_next, values=new_values)


def run_interface(problem: InterfaceProblem, igrid: InterfaceGrid, t_final: float,
                  config: SchemeConfig = None, scheme: str = "bap",
                  tau: float = None, output_times=None):
    """March the interface problem to t_final; mirrors run_ibvp."""
    config = config or SchemeConfig()
    grid = igrid.grid
    state = initial_state(problem.model, grid)
    speed = max_wave_speed(problem.model)
    base_tau = tau if tau is not None else config.cfl * grid.h / speed
    if base_tau * speed > config.cfl * grid.h * (1.0 + 1e-10):
        raise ValueError("CFL violation in run_interface")

    ops = None
    if scheme == "bap":
        if problem.is_jinxin:
            step = lambda st, dt: _interface_step_jinxin(problem, igrid, st, dt, config)
        else:
            ops = _LinearInterfaceOps(problem.model, igrid, base_tau, config)
            step = lambda st, dt: _interface_step_linear(
                problem, igrid, st, dt, config,
                ops if dt == base_tau else _LinearInterfaceOps(problem.model, igrid, dt, config),
            )
    elif scheme == "upwind":
        step = lambda st, dt: interface_upwind_step(problem, igrid, st, dt, config)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    outputs = sorted(set((output_times or [])) | {t_final})
    trajectory = []
    step_index = 0
    if t_final == 0.0:
        return [state]
    for target in outputs:
        while state.time < target - 1e-13 * max(target, 1.0):
            dt = min(base_tau, target - state.time)
            if dt <= 1e-14 * base_tau:
                break
            state = step(state, dt)
            step_index += 1
            if not np.isfinite(state.values).all():
                raise NumericalBlowup(
                    f"non-finite values after step {step_index}",
                    step_index=step_index, time=state.time,
                )
        trajectory.append(SolutionState(time=target, values=state.values.copy()))
    return trajectory
