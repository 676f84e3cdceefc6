"""Experiment drivers: error norms, convergence studies, scheme comparisons
and flat-file (CSV + gnuplot script) output."""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .interface import InterfaceGrid, InterfaceProblem, run_interface
from .models import JinXinModel
from .reference import (
    asymptotic_limit_on_grid,
    equilibrium_scalar_solve,
    example_closed_form,
    fine_mesh_reference,
    jinxin_layer_amplitude,
)
from .registry import EXAMPLES, ExperimentSpec, get_example
from .schemes import Grid1D, run_ibvp


@dataclass
class ExperimentConfig:
    """Harness-level run description (what the CLI reads from JSON)."""

    example_id: str
    scheme: str = "bap"
    nx_list: tuple = None
    epsilon: float = None
    p_exponent: int = None
    t_final: float = None
    cfl: float = None
    tau: float = None
    out_dir: str = None
    reference: str = None

    def resolve(self) -> ExperimentSpec:
        spec = get_example(self.example_id)
        if self.nx_list:
            if any(nx < 8 for nx in self.nx_list):
                raise ValueError("resolutions must be at least 8 cells")
        if self.t_final is not None and self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.cfl is not None and not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        return spec


@dataclass
class ErrorReport:
    """Per-resolution error norms plus least-squares slopes in log h."""

    nx_values: list
    h_values: list
    l1: list
    l2: list
    linf: list
    slopes: dict = field(default_factory=dict)
    runtimes: list = field(default_factory=list)
    exact: bool = False
    failures: list = field(default_factory=list)

    def fit_slopes(self):
        if any(e == 0.0 for e in self.l1 + self.l2 + self.linf):
            self.exact = True
            self.slopes = {}
            return
        logs_h = np.log(np.asarray(self.h_values))
        for name, errs in (("L1", self.l1), ("L2", self.l2), ("Linf", self.linf)):
            self.slopes[name] = float(np.polyfit(logs_h, np.log(np.asarray(errs)), 1)[0])


def error_norms(numeric, reference, h):
    """Discrete L1/L2/Linf norms of the difference, summed over components,
    over all grid points including the boundary point."""
    a = np.asarray(numeric, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    e = np.abs(a - b)
    l1 = h * e.sum()
    l2 = float(np.sqrt(h * (e**2).sum()))
    linf = float(e.max())
    return float(l1), l2, linf


def _grid_for(spec: ExperimentSpec, nx: int) -> Grid1D:
    return Grid1D.from_domain(spec.domain[0], spec.domain[1], nx)


def reference_solution(spec: ExperimentSpec, grid: Grid1D, t_final: float,
                       epsilon: float = None, config=None):
    """Reference grid function for one experiment at one resolution."""
    eps = spec.epsilon if epsilon is None else epsilon
    config = config or spec.config()
    if spec.reference == "closed_form":
        sol = example_closed_form(spec.closed_form_id, eps)
        return sol.evaluate(grid.points(), t_final)
    if spec.reference == "asymptotic_limit":
        model = spec.problem(eps)
        eq = equilibrium_scalar_solve(
            model.flux, model.flux_derivative, model.init_u, grid, t_final,
            inflow=0.0, cfl=spec.cfl,
        )
        mu0 = jinxin_layer_amplitude(model, eq.boundary_values[-1], t_final)
        return asymptotic_limit_on_grid(eq.final(), mu0, grid, model=model)
    if spec.reference == "fine_mesh":
        problem = spec.problem(eps)
        return fine_mesh_reference(problem, grid, spec.fine_h, t_final, config).values
    raise ValueError(f"unknown reference kind {spec.reference!r}")


def run_example(spec: ExperimentSpec, scheme: str, nx: int, epsilon=None,
                t_final=None, config=None, tau=None):
    """Run one registered experiment at one resolution; returns the final
    state and the wall-clock time."""
    eps = spec.epsilon if epsilon is None else epsilon
    t_end = spec.t_final if t_final is None else t_final
    config = config or spec.config()
    grid = _grid_for(spec, nx)
    start = time.perf_counter()
    problem = spec.problem(eps)
    if spec.kind == "interface":
        igrid = InterfaceGrid.build(grid, problem.eps)
        state = run_interface(problem, igrid, t_end, config, scheme=scheme,
                              tau=tau if tau is not None else spec.tau)[-1]
    else:
        state = run_ibvp(problem, scheme, grid, t_end, config,
                         tau=tau if tau is not None else spec.tau)[-1]
    return state, grid, time.perf_counter() - start


def _max_workers():
    raw = os.environ.get("RELAXBL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def convergence_study(spec_or_id, scheme="bap", nx_list=None, epsilon=None,
                      t_final=None, config=None) -> ErrorReport:
    """Errors against the configured reference across resolutions, with
    least-squares slopes of log error versus log h."""
    spec = get_example(spec_or_id) if isinstance(spec_or_id, str) else spec_or_id
    nx_values = list(nx_list or spec.nx_default)
    if len(nx_values) < 1:
        raise ValueError("need at least one resolution")
    eps = spec.epsilon if epsilon is None else epsilon
    t_end = spec.t_final if t_final is None else t_final

    def one(nx):
        state, grid, elapsed = run_example(
            spec, scheme, nx, epsilon=eps, t_final=t_end, config=config
        )
        ref = reference_solution(spec, grid, t_end, epsilon=eps, config=config)
        return error_norms(state.values, ref, grid.h), elapsed

    report = ErrorReport(nx_values=nx_values, h_values=[], l1=[], l2=[], linf=[])
    workers = _max_workers()
    results = [None] * len(nx_values)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(one, nx) for i, nx in enumerate(nx_values)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    report.failures.append((nx_values[i], str(exc)))
    else:
        for i, nx in enumerate(nx_values):
            try:
                results[i] = one(nx)
            except Exception as exc:
                report.failures.append((nx, str(exc)))
    kept_nx = []
    for nx, res in zip(nx_values, results):
        if res is None:
            continue
        (l1, l2, linf), elapsed = res
        span = spec.domain[1] - spec.domain[0]
        kept_nx.append(nx)
        report.h_values.append(span / nx)
        report.l1.append(l1)
        report.l2.append(l2)
        report.linf.append(linf)
        report.runtimes.append(elapsed)
    report.nx_values = kept_nx
    if len(kept_nx) >= 2:
        report.fit_slopes()
    elif kept_nx and report.l1[0] == report.l2[0] == report.linf[0] == 0.0:
        report.exact = True
    return report


@dataclass
class ComparisonReport:
    """Side-by-side run of both schemes against one reference."""

    grid: Grid1D
    reference: np.ndarray
    results: dict                   # scheme -> final values
    boundary_errors: dict           # scheme -> per-component |error| at x0
    interior_sup: dict              # scheme -> sup error away from special points
    neighborhood_sup: dict = None   # scheme -> sup error near the interface
    interface_index: int = None


def compare_schemes(spec_or_id, nx=None, epsilon=None, t_final=None,
                    config=None, neighborhood=5) -> ComparisonReport:
    """Run the classical and boundary-aware schemes on an identical grid."""
    spec = get_example(spec_or_id) if isinstance(spec_or_id, str) else spec_or_id
    nx = nx or spec.nx_default[-1]
    t_end = spec.t_final if t_final is None else t_final
    config = config or spec.config()
    results = {}
    grid = None
    for scheme in ("upwind", "bap"):
        state, grid, _ = run_example(
            spec, scheme, nx, epsilon=epsilon, t_final=t_end, config=config
        )
        results[scheme] = state.values
    ref = reference_solution(spec, grid, t_end, epsilon=epsilon, config=config)

    boundary_errors = {s: np.abs(v[0] - ref[0]) for s, v in results.items()}
    report = ComparisonReport(
        grid=grid,
        reference=ref,
        results=results,
        boundary_errors=boundary_errors,
        interior_sup={
            s: float(np.abs(v[1:] - ref[1:]).max()) for s, v in results.items()
        },
    )
    if spec.kind == "interface":
        x = grid.points()
        j0 = int(np.argmin(np.abs(x)))
        nb = np.arange(max(j0 - neighborhood, 0), min(j0 + neighborhood + 1, grid.num_points))
        mask = np.ones(grid.num_points, dtype=bool)
        mask[nb] = False
        report.interface_index = j0
        report.neighborhood_sup = {
            s: float(np.abs(v[nb] - ref[nb]).max()) for s, v in results.items()
        }
        report.interior_sup = {
            s: float(np.abs(v[mask] - ref[mask]).max()) for s, v in results.items()
        }
        report.boundary_errors = {
            s: np.abs(v[j0] - ref[j0]) for s, v in results.items()
        }
    return report


# ---------------------------------------------------------------------------
# Flat-file output.

def format_float(x):
    return f"{x:.17e}"


def write_solution_csv(path, grid, values, components):
    values = np.atleast_2d(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + list(components))
        for xj, row in zip(grid.points(), values):
            writer.writerow([format_float(xj)] + [format_float(v) for v in row])


def write_errors_csv(path, report: ErrorReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N_x", "h", "L1", "L2", "Linf"])
        for nx, h, l1, l2, linf in zip(
            report.nx_values, report.h_values, report.l1, report.l2, report.linf
        ):
            writer.writerow(
                [nx, format_float(h), format_float(l1), format_float(l2), format_float(linf)]
            )


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    return header, [[float(v) for v in row] for row in data]


def write_convergence_plot_script(path, csv_name, title):
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set key left top",
        "set xlabel 'h'",
        "set ylabel 'error'",
        f"set title '{title}'",
        f"plot '{csv_name}' every ::1 using 2:3 with linespoints title 'L1', \\",
        f"     '{csv_name}' every ::1 using 2:4 with linespoints title 'L2', \\",
        f"     '{csv_name}' every ::1 using 2:5 with linespoints title 'Linf'",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def write_solution_plot_script(path, csv_names, title, stride=1):
    lines = [
        "set datafile separator ','",
        "set key left bottom",
        "set xlabel 'x'",
        f"set title '{title}'",
    ]
    plots = []
    for name in csv_names:
        # the stride only thins the plotted markers; files keep every point
        plots.append(
            f"'{name}' every {stride}::1 using 1:2 with points title '{Path(name).stem}'"
        )
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")


def summarize_report(report: ErrorReport) -> str:
    buf = io.StringIO()
    buf.write("N_x        h            L1           L2           Linf\n")
    for nx, h, l1, l2, linf in zip(
        report.nx_values, report.h_values, report.l1, report.l2, report.linf
    ):
        buf.write(f"{nx:<10d} {h:<12.6e} {l1:<12.6e} {l2:<12.6e} {linf:<12.6e}\n")
    if report.exact:
        buf.write("errors vanish identically: reported as exact\n")
    elif report.slopes:
        buf.write(
            "slopes: "
            + "  ".join(f"{k}={v:.3f}" for k, v in report.slopes.items())
            + "\n"
        )
    for nx, msg in report.failures:
        buf.write(f"FAILED at N_x={nx}: {msg}\n")
    return buf.getvalue()
