"""Fixed-point solution of the coupled system, continuation, time stepping.

The stationary system couples the density and height equations

    -lap rho + tau ln rho = f - a u
    -div(F(|grad u|^2) grad u) - delta lap u + tau u = ln rho

with homogeneous Neumann conditions. ``picard_map`` evaluates the
composition map B: given a height iterate v, solve the density equation
with source f - a v, then the height equation with source ln rho.

``solve_coupled`` runs a damped iteration on B with one structural
addition: integrating both equations shows that the discrete solution
satisfies (a + tau^2) int u = int f exactly (the mimetic operators
integrate to zero), so each iterate has its mean projected onto that
known value. The projection leaves the fixed point unchanged and removes
the mean mode of B, whose amplification factor a / tau^2 makes the raw
iteration diverge for small tau. The fluctuating modes contract at an
O(a) rate independent of tau, and the mean identity then holds to
rounding on every converged solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import mesh
from .energy import ModelParams, subgradient_select
from .mesh import EdgeField, Grid, NodeField
from .solvers import (
    NewtonConfig,
    SolveReport,
    SolverError,
    apply_height_operator,
    solve_rho,
    solve_u,
    surface_energy,
)

__all__ = [
    "ProblemData",
    "PicardConfig",
    "WeakSolutionTriple",
    "TauStage",
    "ContinuationResult",
    "EvolveStep",
    "Trajectory",
    "picard_map",
    "solve_coupled",
    "coupled_residuals",
    "continuation_tau",
    "evolve",
    "subgradient_field",
    "limit_flux",
    "mean_height_target",
]


@dataclass
class ProblemData:
    """Source field and model constants of one stationary problem."""

    f: NodeField
    params: ModelParams


@dataclass
class PicardConfig:
    """Outer fixed-point iteration controls.

    The relaxation weight is adapted: halved when the combined equation
    residual grows, grown by 1.2 (clamped to 1) when it shrinks. After
    convergence the height equation is re-solved with the viscosity
    lowered to ``delta_polish`` (skipped when None or when the viscosity
    is already at or below it).
    """

    relaxation: float = 0.5
    tol_fixed_point: float = 1e-9
    max_outer: int = 200
    tol_residual: float = 1e-8
    delta_polish: float | None = 1e-10

    def __post_init__(self) -> None:
        if not (0.0 < self.relaxation <= 1.0):
            raise ValueError("relaxation must lie in (0,1]")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class WeakSolutionTriple:
    """Converged height, density, and total-variation subgradient selection."""

    u: NodeField
    rho: NodeField
    phi: EdgeField


def mean_height_target(data: ProblemData) -> float:
    """Mean of u forced by the discrete integral of the coupled system."""
    p = data.params
    return mesh.integrate(data.f) / ((p.a + p.tau**2) * data.f.grid.volume)


def subgradient_field(u: NodeField) -> EdgeField:
    """Edgewise selection grad u / |grad u| (longitudinal components)."""
    grid = u.grid
    comps = []
    for d_long, d_trans in mesh.edge_gradients(u):
        if d_trans is None:
            z = d_long[..., None]
        else:
            z = np.stack([d_long, d_trans], axis=-1)
        comps.append(subgradient_select(z)[..., 0])
    return EdgeField(grid, tuple(comps))


def limit_flux(u: NodeField, params: ModelParams) -> EdgeField:
    """Sharp-limit flux |grad u|^(p-2) grad u + beta0 grad u/|grad u| at edges.

    Evaluated with tau = 0 and the zero selection where the gradient
    vanishes; longitudinal components per edge family.
    """
    grid = u.grid
    comps = []
    for d_long, d_trans in mesh.edge_gradients(u):
        s = d_long * d_long
        if d_trans is not None:
            s = s + d_trans * d_trans
        pos = s > 0.0
        coef = np.where(pos, np.where(pos, s, 1.0) ** (0.5 * (params.p - 2.0)), 0.0)
        unit = np.where(pos, d_long / np.sqrt(np.where(pos, s, 1.0)), 0.0)
        comps.append(coef * d_long + params.beta0 * unit)
    return EdgeField(grid, tuple(comps))


def _picard_step(
    v: NodeField, data: ProblemData, newton_cfg: NewtonConfig | None
) -> tuple[NodeField, NodeField, int]:
    p = data.params
    if p.tau <= 0.0:
        raise ValueError("the coupled map requires tau > 0")
    g = NodeField(data.f.grid, data.f.values - p.a * v.values)
    try:
        rho, rep_rho = solve_rho(g, p.tau, newton_cfg)
    except SolverError as err:
        raise SolverError(str(err), err.report, stage="rho-stage") from err
    rhs = NodeField(data.f.grid, np.log(rho.values))
    try:
        u, rep_u = solve_u(rhs, p, newton_cfg)
    except SolverError as err:
        raise SolverError(str(err), err.report, stage="u-stage") from err
    return u, rho, rep_rho.iterations + rep_u.iterations


def picard_map(
    v: NodeField,
    data: ProblemData,
    newton_cfg: NewtonConfig | None = None,
) -> tuple[NodeField, NodeField]:
    """One composition step: density solve with source f - a v, then height solve.

    Solver failures are re-raised tagged with the stage that failed.
    """
    u, rho, _ = _picard_step(v, data, newton_cfg)
    return u, rho


def coupled_residuals(u: NodeField, rho: NodeField, data: ProblemData) -> tuple[float, float]:
    """Relative residuals of the density and height equations for a pair."""
    p = data.params
    grid = u.grid
    log_rho = np.log(rho.values)
    r1 = NodeField(
        grid,
        -mesh.laplacian(rho).values + p.tau * log_rho - (data.f.values - p.a * u.values),
    )
    r2 = NodeField(grid, apply_height_operator(u, p).values - log_rho)
    s1 = mesh.norm_l2(r1) / (1.0 + mesh.norm_l2(data.f))
    s2 = mesh.norm_l2(r2) / (1.0 + mesh.norm_l2(NodeField(grid, log_rho)))
    return s1, s2


def _pin_mean(u: NodeField, target: float) -> NodeField:
    grid = u.grid
    return NodeField(grid, u.values + (target - mesh.integrate(u) / grid.volume))


def _damped_iteration(
    data: ProblemData,
    u: NodeField,
    cfg: PicardConfig,
    newton_cfg: NewtonConfig | None,
    report: SolveReport,
) -> tuple[NodeField, NodeField]:
    ubar = mean_height_target(data)
    u = _pin_mean(u, ubar)
    omega = cfg.relaxation
    prev_res = np.inf
    rho = None
    for _ in range(cfg.max_outer):
        u_map, rho, inner = _picard_step(u, data, newton_cfg)
        u_new = _pin_mean(
            NodeField(u.grid, (1.0 - omega) * u.values + omega * u_map.values), ubar
        )
        change = mesh.norm_l2(NodeField(u.grid, u_new.values - u.values))
        r1, r2 = coupled_residuals(u_new, rho, data)
        res = max(r1, r2)
        report.iterations += 1
        report.residual_history.append(res)
        report.linear_solver_stats.append(inner)
        u = u_new
        if change <= cfg.tol_fixed_point and res <= cfg.tol_residual:
            return u, rho
        omega = min(1.0, omega * 1.2) if res < prev_res else max(1e-3, 0.5 * omega)
        prev_res = res
    raise SolverError(
        f"coupled iteration did not converge in {cfg.max_outer} outer steps", report
    )


def solve_coupled(
    data: ProblemData,
    picard_cfg: PicardConfig | None = None,
    newton_cfg: NewtonConfig | None = None,
    u0: NodeField | None = None,
) -> tuple[WeakSolutionTriple, SolveReport]:
    """Solve the coupled stationary system by mean-projected damped iteration."""
    cfg = picard_cfg or PicardConfig()
    p = data.params
    if p.tau <= 0.0:
        raise ValueError("the coupled solve requires tau > 0")
    report = SolveReport()
    u = u0 if u0 is not None else NodeField.constant(data.f.grid, mean_height_target(data))
    u, rho = _damped_iteration(data, u, cfg, newton_cfg, report)
    if cfg.delta_polish is not None and p.delta > cfg.delta_polish:
        polished = ProblemData(data.f, replace(p, delta=cfg.delta_polish))
        u, rho = _damped_iteration(polished, u, cfg, newton_cfg, report)
    report.converged = True
    return WeakSolutionTriple(u, rho, subgradient_field(u)), report


@dataclass
class TauStage:
    tau: float
    triple: WeakSolutionTriple
    estimates: "EstimateReport"  # noqa: F821  (analysis imports lazily, see below)
    report: SolveReport


@dataclass
class ContinuationResult:
    stages: list[TauStage]
    completed: bool
    failure: str | None = None

    @property
    def final(self) -> WeakSolutionTriple | None:
        return self.stages[-1].triple if self.stages else None


def continuation_tau(
    data: ProblemData,
    tau_schedule,
    picard_cfg: PicardConfig | None = None,
    newton_cfg: NewtonConfig | None = None,
) -> ContinuationResult:
    """Warm-started sweep of the coupled solve over a decreasing tau schedule.

    Each stage is audited (estimate report attached); a stage failure
    halts the sweep and the completed prefix is returned.
    """
    from .analysis import apriori_audit  # local import to avoid a cycle

    schedule = [float(t) for t in tau_schedule]
    if not schedule or any(t <= 0.0 for t in schedule) or any(
        b >= a for a, b in zip(schedule, schedule[1:])
    ):
        raise ValueError("tau schedule must be strictly decreasing and positive")
    stages: list[TauStage] = []
    u_start: NodeField | None = None
    for tau in schedule:
        stage_data = ProblemData(data.f, replace(data.params, tau=tau))
        try:
            triple, rep = solve_coupled(stage_data, picard_cfg, newton_cfg, u0=u_start)
        except SolverError as err:
            return ContinuationResult(stages, False, failure=f"tau={tau:g}: {err}")
        stages.append(
            TauStage(tau, triple, apriori_audit(triple.u, triple.rho, stage_data), rep)
        )
        u_start = triple.u
    return ContinuationResult(stages, True)


@dataclass
class EvolveStep:
    index: int
    time: float
    u: NodeField
    rho: NodeField | None
    surface_energy: float
    l2_height: float
    mean_height: float
    converged: bool
    residuals: tuple[float, float] | None = None
    estimates: "EstimateReport | None" = None  # noqa: F821


@dataclass
class Trajectory:
    steps: list[EvolveStep]
    completed: bool
    failure: str | None = None

    @property
    def energy_nonincreasing(self) -> bool:
        e = [s.surface_energy for s in self.steps]
        return all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(e, e[1:]))


def evolve(
    u0: NodeField,
    dt: float,
    nsteps: int,
    params: ModelParams,
    picard_cfg: PicardConfig | None = None,
    newton_cfg: NewtonConfig | None = None,
) -> Trajectory:
    """Implicit (backward Euler) evolution of the relaxation law.

    Each step solves the stationary system with rate coefficient 1/dt
    and source u^n/dt; per the mean identity the discrete mass satisfies
    int u^{n+1} = int u^n / (1 + tau^2 dt) exactly. The surface energy is
    recorded per step as a diagnostic; a step failure terminates the
    trajectory and returns the prefix.
    """
    from .analysis import apriori_audit  # local import to avoid a cycle

    if dt <= 0.0 or nsteps < 1:
        raise ValueError("need dt > 0 and nsteps >= 1")
    if params.tau <= 0.0:
        raise ValueError("evolution requires tau > 0")
    grid = u0.grid
    step_params = replace(params, a=1.0 / dt)
    u = u0
    steps = [
        EvolveStep(
            0,
            0.0,
            u0,
            None,
            surface_energy(u0, params),
            mesh.norm_l2(u0),
            mesh.integrate(u0) / grid.volume,
            True,
        )
    ]
    for n in range(1, nsteps + 1):
        data = ProblemData(NodeField(grid, u.values / dt), step_params)
        try:
            triple, rep = solve_coupled(data, picard_cfg, newton_cfg, u0=u)
        except SolverError as err:
            return Trajectory(steps, False, failure=f"step {n}: {err}")
        u = triple.u
        steps.append(
            EvolveStep(
                n,
                n * dt,
                u,
                triple.rho,
                surface_energy(u, params),
                mesh.norm_l2(u),
                mesh.integrate(u) / grid.volume,
                rep.converged,
                residuals=coupled_residuals(u, triple.rho, data),
                estimates=apriori_audit(u, triple.rho, data),
            )
        )
    return Trajectory(steps, True)
