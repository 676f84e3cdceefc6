"""Built-in experiment registry.

Each entry bundles a problem definition with the grid, time horizon and
reference-solution recipe used in the accompanying studies.  Functions are
plain named callables — nothing here parses expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .interface import InterfaceProblem, PiecewiseEpsilon
from .models import JinXinModel, LinearRelaxationSystem, jinxin_as_linear
from .reference import example_closed_form
from .schemes import SchemeConfig


# ---------------------------------------------------------------------------
# Named model ingredients (referenced from JSON configs by these names).

def linear_flux_neg(u):
    return -0.5 * u


def linear_flux_neg_deriv(u):
    return -0.5 * np.ones_like(np.asarray(u, dtype=float))


def linear_flux_pos(u):
    return 0.5 * u


def linear_flux_pos_deriv(u):
    return 0.5 * np.ones_like(np.asarray(u, dtype=float))


def exp_flux(u):
    return 0.25 * (np.exp(-np.asarray(u, dtype=float)) - 1.0)


def exp_flux_deriv(u):
    return -0.25 * np.exp(-np.asarray(u, dtype=float))


FUNCTIONS = {
    "linear_flux_neg": linear_flux_neg,
    "linear_flux_neg_deriv": linear_flux_neg_deriv,
    "linear_flux_pos": linear_flux_pos,
    "linear_flux_pos_deriv": linear_flux_pos_deriv,
    "exp_flux": exp_flux,
    "exp_flux_deriv": exp_flux_deriv,
}


@dataclass
class ExperimentSpec:
    """One registered experiment: problem + numerical parameters + reference."""

    example_id: str
    description: str
    kind: str                       # "ibvp" or "interface"
    make_problem: callable          # (epsilon) -> model/system or InterfaceProblem
    domain: tuple
    nx_default: tuple
    t_final: float
    epsilon: float
    cfl: float = 0.8
    tau: float = None               # explicit step; None -> cfl * h / speed
    p_exponent: int = 2
    reference: str = "closed_form"  # closed_form | asymptotic_limit | fine_mesh
    closed_form_id: str = None
    fine_h: float = None
    right_boundary: str = "reference_dirichlet"
    components: tuple = ("u", "v")

    def config(self, **overrides):
        cfg = dict(
            cfl=self.cfl,
            p_exponent=self.p_exponent,
            right_boundary=self.right_boundary,
        )
        cfg.update(overrides)
        return SchemeConfig(**cfg)

    def problem(self, epsilon=None):
        return self.make_problem(self.epsilon if epsilon is None else epsilon)


def _example_1a(epsilon):
    sol = example_closed_form("1a", epsilon)
    return JinXinModel(
        flux=linear_flux_neg,
        flux_derivative=linear_flux_neg_deriv,
        epsilon=epsilon,
        bc_coeffs=(1.0, 1.0),
        bc_data=lambda t: np.sin(t / 2) + np.sin(t),
        init_u=lambda x: 2.0 * np.sin(x),
        init_v=lambda x: -np.sin(x),
        edge_data=sol.edge_data(),
    )


def _example_1b(epsilon):
    sol = example_closed_form("1b", epsilon)
    return JinXinModel(
        flux=linear_flux_pos,
        flux_derivative=linear_flux_pos_deriv,
        epsilon=epsilon,
        bc_coeffs=(1.0, 1.0),
        bc_data=lambda t: -3.0 * np.sin(t / 2),
        init_u=lambda x: 2.0 * np.sin(x),
        init_v=lambda x: np.sin(x),
        edge_data=sol.edge_data(),
    )


def _example_1c(epsilon):
    sol = example_closed_form("1c", epsilon)
    return JinXinModel(
        flux=linear_flux_pos,
        flux_derivative=linear_flux_pos_deriv,
        epsilon=epsilon,
        bc_coeffs=(1.0, 1.0),
        bc_data=lambda t: 0.0,
        init_u=lambda x: np.sin(x),
        init_v=lambda x: -np.sin(x),
        forcing=lambda x, t: -1.5 * np.sin(x + t),
        edge_data=sol.edge_data(),
    )


def _example_2(epsilon):
    return JinXinModel(
        flux=exp_flux,
        flux_derivative=exp_flux_deriv,
        epsilon=epsilon,
        bc_coeffs=(1.0, 1.0),
        bc_data=lambda t: np.sin(2.0 * t),
        init_u=lambda x: np.sin(np.pi * x) ** 3,
        init_v=lambda x: exp_flux(np.sin(np.pi * x) ** 3),
        edge_data=lambda x, t: (0.0, 0.0),   # equilibrium inflow at the far edge
    )


def _example_3(epsilon):
    sol = example_closed_form("3", epsilon)
    return LinearRelaxationSystem(
        n=3,
        r=1,
        a=np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),
        q=np.diag([0.0, 0.0, -1.0]),
        b=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 2.0]]),
        bc_data=lambda t: np.array([-np.sin(t), 0.0]),
        init=lambda x: np.stack([2.0 * np.sin(x), 0.0 * x, 0.0 * x], axis=-1),
        epsilon=epsilon,
        edge_data=sol.edge_data(),
    )


def _example_4(epsilon):
    model = JinXinModel(
        flux=exp_flux,
        flux_derivative=exp_flux_deriv,
        epsilon=1.0,                 # overridden pointwise by epsilon(x)
        init_u=lambda x: np.sin(np.pi * x),
        init_v=lambda x: exp_flux(np.sin(np.pi * x)),
        bc_data=lambda t: 0.0,
    )
    return InterfaceProblem(
        model=model,
        eps=PiecewiseEpsilon((0.0,), (1.0, epsilon)),
    )


def _example_5(epsilon):
    sys = LinearRelaxationSystem(
        n=3,
        r=2,
        a=np.array([[-1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]),
        q=np.diag([0.0, -1.0, -1.0]),
        init=lambda x: np.stack([np.sin(np.pi * x), 0.0 * x, 0.0 * x], axis=-1),
        epsilon=1.0,
    )
    return InterfaceProblem(
        model=sys,
        eps=PiecewiseEpsilon((0.0,), (1.0, epsilon)),
    )


EXAMPLES = {
    "1a": ExperimentSpec(
        example_id="1a",
        description="linear 2x2 model, slope -1/2, stiff, boundary layer",
        kind="ibvp",
        make_problem=_example_1a,
        domain=(0.0, 2.0),
        nx_default=(50, 100, 200, 400, 800),
        t_final=0.5,
        epsilon=1e-9,
        cfl=0.8,
        p_exponent=2,
        reference="closed_form",
        closed_form_id="1a",
    ),
    "1b": ExperimentSpec(
        example_id="1b",
        description="linear 2x2 model, slope +1/2, stiff, no layer",
        kind="ibvp",
        make_problem=_example_1b,
        domain=(0.0, 2.0),
        nx_default=(50, 100, 200, 400, 800),
        t_final=0.5,
        epsilon=1e-9,
        reference="closed_form",
        closed_form_id="1b",
    ),
    "1c": ExperimentSpec(
        example_id="1c",
        description="forced linear 2x2 model, non-stiff, exact solution",
        kind="ibvp",
        make_problem=_example_1c,
        domain=(0.0, 2.0),
        nx_default=(50, 100, 200, 400, 800),
        t_final=0.5,
        epsilon=1.0,
        reference="closed_form",
        closed_form_id="1c",
    ),
    "2": ExperimentSpec(
        example_id="2",
        description="nonlinear 2x2 model with exponential flux, coarse stiff run",
        kind="ibvp",
        make_problem=_example_2,
        domain=(0.0, 1.0),
        nx_default=(800,),
        t_final=0.2,
        epsilon=1e-6,
        tau=5e-4,
        reference="asymptotic_limit",
    ),
    "3": ExperimentSpec(
        example_id="3",
        description="3x3 linear relaxation system with a boundary layer in (u, p)",
        kind="ibvp",
        make_problem=_example_3,
        domain=(0.0, 0.5),
        nx_default=(100,),
        t_final=0.3,
        epsilon=1e-6,
        tau=1e-3,
        reference="closed_form",
        closed_form_id="3",
        components=("u", "v", "p"),
    ),
    "4": ExperimentSpec(
        example_id="4",
        description="interface problem for the nonlinear 2x2 model",
        kind="interface",
        make_problem=_example_4,
        domain=(-1.0, 1.0),
        nx_default=(100,),
        t_final=0.4,
        epsilon=1e-3,          # desk-scaled; the original study used 1e-4
        p_exponent=4,
        reference="fine_mesh",
        fine_h=1e-4,
        right_boundary="extrapolate",
    ),
    "5": ExperimentSpec(
        example_id="5",
        description="interface problem for a 3x3 linear relaxation system",
        kind="interface",
        make_problem=_example_5,
        domain=(-1.0, 1.0),
        nx_default=(500,),
        t_final=0.6,
        epsilon=1e-3,          # desk-scaled; the original study used 1e-6
        reference="fine_mesh",
        fine_h=1e-4,
        right_boundary="extrapolate",
        components=("u", "v", "p"),
    ),
}


def get_example(example_id: str) -> ExperimentSpec:
    if example_id not in EXAMPLES:
        raise KeyError(
            f"unknown example {example_id!r}; known: {', '.join(sorted(EXAMPLES))}"
        )
    return EXAMPLES[example_id]
