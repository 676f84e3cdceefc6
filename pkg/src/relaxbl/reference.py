"""Reference and verification solutions.

Closed-form solutions for the built-in test problems, an upwind solver for
the scalar equilibrium conservation law, the layer-amplitude/-profile
machinery at the left boundary, the reduced boundary-condition solve for
linear systems, relaxation limits evaluated on grids, and resolved fine-mesh
references for interface runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import SingularMatrix
from .models import JinXinModel, LinearRelaxationSystem
from .schemes import Grid1D, SchemeConfig, SolutionState, run_ibvp


@dataclass
class AsymptoticSolution:
    """Outer solution plus an exponential boundary/interface layer.

    ``evaluate(x, t)`` returns outer(x, t) + layer_amplitude(t) *
    exp(layer_decay * x / epsilon); the layer term vanishes away from x = 0.
    """

    outer: callable               # (x, t) -> (..., n) array
    layer_amplitude: callable     # t -> (n,) array
    layer_decay: float            # decay exponent per unit of x/epsilon (< 0)
    epsilon: float
    n_components: int = 2

    def evaluate(self, x, t):
        x = np.asarray(x, dtype=float)
        base = np.asarray(self.outer(x, t), dtype=float)
        amp = np.asarray(self.layer_amplitude(t), dtype=float)
        with np.errstate(under="ignore"):
            decay = np.exp(self.layer_decay * x / self.epsilon)
        return base + amp * decay[..., None]

    def edge_data(self):
        """(x, t) -> vector callable, e.g. for Dirichlet far boundaries."""
        return lambda x, t: self.evaluate(np.asarray([x]), t)[0]


_EXAMPLE_EPSILONS = {"1a": 1e-9, "1b": 1e-9, "1c": 1.0, "3": 1e-6}


def example_closed_form(example_id: str, epsilon: float = None) -> AsymptoticSolution:
    """Closed-form (asymptotic or exact) solutions of the built-in examples.

    * ``1a``: stiff linear 2x2 model with slope -1/2 and a boundary layer
      of amplitude sin(t);
    * ``1b``: stiff linear model with slope +1/2, no layer;
    * ``1c``: forced non-stiff model with exact solution (sin(x+t), -sin(x+t));
    * ``3``:  3x3 linear system whose layer sits in the (u, p) components.
    """
    if example_id not in _EXAMPLE_EPSILONS:
        raise KeyError(f"unknown example id {example_id!r}")
    eps = epsilon if epsilon is not None else _EXAMPLE_EPSILONS[example_id]
    if example_id == "1a":
        return AsymptoticSolution(
            outer=lambda x, t: np.stack(
                [2.0 * np.sin(x + t / 2), -np.sin(x + t / 2)], axis=-1
            ),
            layer_amplitude=lambda t: np.array([np.sin(t), 0.0]),
            layer_decay=-2.0,
            epsilon=eps,
            n_components=2,
        )
    if example_id == "1b":
        return AsymptoticSolution(
            outer=lambda x, t: np.stack(
                [2.0 * np.sin(x - t / 2), np.sin(x - t / 2)], axis=-1
            ),
            layer_amplitude=lambda t: np.zeros(2),
            layer_decay=-1.0,
            epsilon=eps,
            n_components=2,
        )
    if example_id == "1c":
        return AsymptoticSolution(
            outer=lambda x, t: np.stack(
                [np.sin(x + t), -np.sin(x + t)], axis=-1
            ),
            layer_amplitude=lambda t: np.zeros(2),
            layer_decay=-1.0,
            epsilon=eps,
            n_components=2,
        )
    return AsymptoticSolution(
        outer=lambda x, t: np.stack(
            [
                np.sin(x - t) + np.sin(x + t),
                np.sin(x - t) - np.sin(x + t),
                np.zeros_like(np.asarray(x, dtype=float)),
            ],
            axis=-1,
        ),
        layer_amplitude=lambda t: np.array([-np.sin(t), 0.0, np.sin(t)]),
        layer_decay=-1.0,
        epsilon=eps,
        n_components=3,
    )


@dataclass
class EquilibriumTrajectory:
    """Scalar conservation-law solve: full history plus the x=0 trace."""

    grid: Grid1D
    times: np.ndarray
    states: list                  # list of arrays over grid points
    boundary_values: np.ndarray   # value at x = x0 for each time

    def final(self):
        return self.states[-1]

    def boundary_at(self, t):
        return float(np.interp(t, self.times, self.boundary_values))


def equilibrium_scalar_solve(flux, flux_derivative, init, grid: Grid1D,
                             t_final: float, inflow, cfl: float = 0.8):
    """First-order upwind solve of  u_t + f(u)_x = 0  on the grid.

    For f' < 0 the scheme differences to the right and ``inflow(t)`` feeds
    the right edge; for f' > 0 it differences to the left with inflow at the
    left edge.  The slope must keep one sign along the way.
    """
    x = grid.points()
    u = np.asarray(init(x), dtype=float).copy()
    inflow_f = inflow if callable(inflow) else (lambda t, c=float(inflow): c)

    def slope_sign(vals):
        d = np.asarray(flux_derivative(vals), dtype=float)
        if np.any(d == 0.0) or (d.max() > 0.0 > d.min()):
            from .errors import DegenerateSign

            raise DegenerateSign("equilibrium slope changes sign during the run")
        return 1.0 if d.flat[0] > 0 else -1.0, np.abs(d).max()

    sign, speed0 = slope_sign(np.append(u, inflow_f(0.0)))
    times = [0.0]
    states = [u.copy()]
    boundary = [u[0]]
    t = 0.0
    while t < t_final - 1e-14 * max(t_final, 1.0):
        _, speed = slope_sign(np.append(u, inflow_f(t)))
        tau = cfl * grid.h / max(speed, 1e-14)
        tau = min(tau, t_final - t)
        lam = tau / grid.h
        new = u.copy()
        if sign < 0:
            new[:-1] = u[:-1] - lam * (flux(u[1:]) - flux(u[:-1]))
            new[-1] = inflow_f(t + tau)
        else:
            new[1:] = u[1:] - lam * (flux(u[1:]) - flux(u[:-1]))
            new[0] = inflow_f(t + tau)
        u = new
        t += tau
        times.append(t)
        states.append(u.copy())
        boundary.append(u[0])
    return EquilibriumTrajectory(
        grid=grid,
        times=np.asarray(times),
        states=states,
        boundary_values=np.asarray(boundary),
    )


def jinxin_layer_amplitude(model: JinXinModel, ubar0: float, t: float) -> float:
    """Layer amplitude at the boundary from the unused boundary data:
    mu(0,t) = (b(t) - Bu*ubar - Bv*f(ubar)) / Bu, valid when f'(ubar) < 0."""
    bu, bv = model.bc_coeffs
    if bu == 0.0:
        raise ValueError("Bu = 0: the boundary condition cannot set the layer amplitude")
    if model.flux_derivative(ubar0) >= 0:
        raise ValueError("no boundary layer for f'(ubar) >= 0")
    return (model.bc_data(t) - bu * ubar0 - bv * model.flux(ubar0)) / bu


def jinxin_layer_profile(model: JinXinModel, ubar0: float, mu0: float,
                         y_max: float = None, steps: int = None):
    """Integrate the layer equation  mu_y = f(ubar + mu) - f(ubar)  by the
    classic 4-stage Runge-Kutta method; returns (y, mu) samples.

    The profile must decay monotonically toward zero; growth means the
    boundary datum is not admissible for a layer.
    """
    if y_max is None:
        rate = abs(model.flux_derivative(ubar0))
        y_max = 50.0 / max(rate, 1e-10)
    if steps is None:
        steps = max(int(y_max * 100), 100)
    h = y_max / steps

    def rhs(mu):
        return model.flux(ubar0 + mu) - model.flux(ubar0)

    y = np.linspace(0.0, y_max, steps + 1)
    mu = np.empty(steps + 1)
    mu[0] = mu0
    for k in range(steps):
        m = mu[k]
        k1 = rhs(m)
        k2 = rhs(m + 0.5 * h * k1)
        k3 = rhs(m + 0.5 * h * k2)
        k4 = rhs(m + h * k3)
        mu[k + 1] = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if abs(mu[k + 1]) > abs(mu0) * (1.0 + 1e-9) + 1e-300:
            raise ValueError(
                f"layer profile grows at y = {y[k + 1]:.3g}: "
                "datum is not an admissible layer amplitude"
            )
    return y, mu


@dataclass
class ReducedBCSystem:
    """Boundary closure of the equilibrium limit.

    Unknowns are (alpha_plus, nu0): the incoming equilibrium modes and the
    layer amplitude of the relaxing block at x = 0.  The rows are the
    boundary condition expressed through the limit state, padded with the
    no-growth condition on the layer.
    """

    matrix: np.ndarray
    r1_plus: np.ndarray
    r1_minus: np.ndarray
    b_u: np.ndarray
    n_alpha: int
    r: int

    def rhs(self, t, alpha_minus, bc_data):
        top = np.atleast_1d(bc_data(t)) - self.b_u @ (self.r1_minus @ np.atleast_1d(alpha_minus))
        return np.concatenate([top, np.zeros(self.matrix.shape[0] - top.shape[0])])

    def solve(self, t, alpha_minus, bc_data):
        sol = linalg.solve_dense(self.matrix, self.rhs(t, alpha_minus, bc_data))
        alpha_plus = sol[: self.n_alpha]
        nu0 = sol[self.n_alpha:]
        ubar0 = self.r1_plus @ alpha_plus + self.r1_minus @ np.atleast_1d(alpha_minus)
        return alpha_plus, nu0, ubar0


def reduced_bc_build(sys: LinearRelaxationSystem, derived) -> ReducedBCSystem:
    """Assemble the reduced boundary solve

        [ Bu R+^1   Bv - Bu A11^{-1} A12 ] [alpha+]   [ b - Bu R-^1 alpha- ]
        [   0            L+^H            ] [ nu0  ] = [        0           ]

    A singular matrix here is the well-posedness diagnostic failing."""
    if sys.b is None:
        raise ValueError("reduced_bc_build needs a boundary matrix")
    k = sys.n - sys.r
    b_u = sys.b[:, :k]
    b_v = sys.b[:, k:]
    s11 = derived.split_a11
    r1_plus, r1_minus = s11.r_plus, s11.r_minus
    lh_plus = derived.split_h.l_plus
    n_alpha = r1_plus.shape[1]
    top = np.hstack([b_u @ r1_plus, b_v - b_u @ derived.a11_inv_a12])
    bottom = np.hstack([np.zeros((lh_plus.shape[0], n_alpha)), lh_plus])
    matrix = np.vstack([top, bottom])
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(
            f"reduced boundary system is {matrix.shape}, not square: "
            "incoming counts are inconsistent"
        )
    det = linalg.determinant(matrix)
    if abs(det) < 1e-12:
        raise SingularMatrix(
            "reduced boundary system is singular: the boundary matrix likely "
            "fails the well-posedness (determinant-ratio) condition"
        )
    return ReducedBCSystem(
        matrix=matrix,
        r1_plus=r1_plus,
        r1_minus=r1_minus,
        b_u=b_u,
        n_alpha=n_alpha,
        r=sys.r,
    )


def asymptotic_limit_on_grid(outer_values, layer_value, grid: Grid1D,
                             model=None, a11_inv_a12=None):
    """Relaxation-limit grid function: the boundary point carries the layer
    correction, every other point the pure outer state.

    For the 2x2 model ``outer_values`` holds ubar over the grid and
    ``layer_value`` is mu(0, t): the limit is (ubar + mu, f(ubar)) at j = 0
    and (ubar, f(ubar)) elsewhere.  For linear systems ``outer_values`` holds
    the conserved block and ``layer_value`` is nu(0, t): the limit is
    (ubar - A11^{-1} A12 nu, nu) at j = 0 and (ubar, 0) elsewhere.
    """
    if model is not None:
        ubar = np.asarray(outer_values, dtype=float)
        out = np.stack([ubar, model.flux(ubar)], axis=-1)
        out[0, 0] += layer_value
        # v keeps the equilibrium value f(ubar) at the boundary point too.
        return out
    if a11_inv_a12 is None:
        raise ValueError("need either a 2x2 model or the coupling block")
    ubar = np.atleast_2d(np.asarray(outer_values, dtype=float))
    nu = np.atleast_1d(np.asarray(layer_value, dtype=float))
    k = ubar.shape[1]
    r = nu.shape[0]
    out = np.zeros((grid.num_points, k + r))
    out[:, :k] = ubar
    out[0, :k] -= a11_inv_a12 @ nu
    out[0, k:] = nu
    return out


def fine_mesh_reference(problem, coarse_grid: Grid1D, h_fine: float,
                        t_final: float, config: SchemeConfig = None,
                        tau: float = None):
    """Resolved classical-upwind reference restricted to the coarse grid.

    The fine mesh must nest exactly: the coarse width is an integer multiple
    of ``h_fine`` and both grids share the origin.
    """
    from .interface import InterfaceGrid, InterfaceProblem, run_interface

    ratio = coarse_grid.h / h_fine
    stride = int(round(ratio))
    if abs(ratio - stride) > 1e-8 or stride < 1:
        raise ValueError(
            f"grids do not nest: coarse h = {coarse_grid.h}, fine h = {h_fine}"
        )
    n_fine = (coarse_grid.num_points - 1) * stride
    fine_grid = Grid1D(x0=coarse_grid.x0, h=h_fine, num_points=n_fine + 1)
    config = config or SchemeConfig()

    if isinstance(problem, InterfaceProblem):
        eps_min = min(problem.eps.values)
        if h_fine >= eps_min:
            raise ValueError(
                f"fine mesh h = {h_fine} does not resolve the layer width "
                f"(min epsilon = {eps_min})"
            )
        igrid = InterfaceGrid.build(fine_grid, problem.eps)
        state = run_interface(problem, igrid, t_final, config,
                              scheme="upwind", tau=tau)[-1]
    else:
        state = run_ibvp(problem, "upwind", fine_grid, t_final, config, tau=tau)[-1]

    fine_x = fine_grid.points()[::stride]
    coarse_x = coarse_grid.points()
    if np.abs(fine_x - coarse_x).max() > 1e-9 * max(1.0, np.abs(coarse_x).max()):
        raise ValueError("restricted fine grid does not coincide with the coarse grid")
    return SolutionState(time=state.time, values=state.values[::stride].copy())
