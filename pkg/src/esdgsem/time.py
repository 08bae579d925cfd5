"""SSP Runge-Kutta integration and the simulation loop."""

from dataclasses import dataclass, field

import numpy as np

from . import dgsem, thermo
from .errors import MeshMismatch, StepLimitExceeded
from .fluxes import FluxConfig

# Shu-Osher form: u_k = sum_j alpha[k][j] u_j + dt * sum_j beta[k][j] L(u_j), u_0 = u^n.
SSP_TABLES = {
    "euler": (
        [[1.0]],
        [[1.0]],
    ),
    # four-stage third-order, CFL coefficient 2
    "ssprk34": (
        [[1.0],
         [0.0, 1.0],
         [2.0 / 3.0, 0.0, 1.0 / 3.0],
         [0.0, 0.0, 0.0, 1.0]],
        [[0.5],
         [0.0, 0.5],
         [0.0, 0.0, 1.0 / 6.0],
         [0.0, 0.0, 0.0, 0.5]],
    ),
    # five-stage fourth-order (Spiteri and Ruuth 2002, Table 3 coefficients)
    "ssprk45": (
        [[1.0],
         [0.444370493651235, 0.555629506348765],
         [0.620101851488403, 0.0, 0.379898148511597],
         [0.178079954393132, 0.0, 0.0, 0.821920045606868],
         [0.0, 0.0, 0.517231671970585, 0.096059710526147, 0.386708617503269]],
        [[0.391752226571890],
         [0.0, 0.368410593050371],
         [0.0, 0.0, 0.251891774271694],
         [0.0, 0.0, 0.0, 0.544974750228521],
         [0.0, 0.0, 0.0, 0.063692468666290, 0.226007483236906]],
    ),
}


@dataclass(frozen=True)
class TimeConfig:
    integrator: str = "ssprk34"
    t_end: float = 1.0
    cfl_practical: float = None
    dt: float = None            # fixed step; overrides the CFL rule
    dt_mode: str = "practical"
    max_steps: int = 10_000_000
    limiter_per_stage: bool = True
    limiter_eps: float = dgsem.LIMITER_EPS

    def __post_init__(self):
        if self.integrator not in SSP_TABLES:
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.cfl_practical is not None and not 0.0 < self.cfl_practical <= 0.5:
            raise ValueError("cfl_practical must lie in (0, 0.5]")
        if self.dt is not None and not self.dt > 0.0:
            raise ValueError("fixed dt must be positive")


@dataclass
class RunStats:
    steps: int = 0
    limiter_activations: int = 0
    dt_min: float = np.inf
    dt_max: float = 0.0


@dataclass
class RunResult:
    field: dgsem.SolutionField
    stats: RunStats = field(default_factory=RunStats)


def _stage_plan(name):
    alpha, beta = SSP_TABLES[name]
    plan = []
    for a_row, b_row in zip(alpha, beta):
        ref = int(np.argmax(a_row))
        incs = [(a, j) for j, a in enumerate(a_row) if j != ref and a != 0.0]
        rates = [(b, j) for j, b in enumerate(b_row) if b != 0.0]
        plan.append((ref, incs, rates))
    return plan


def ssp_step(U, rhs, dt, integrator="ssprk34", after_stage=None):
    """One SSP step for ``dU/dt = rhs(U)``.

    Stages are combined as ``u_ref + sum a (u_j - u_ref) + dt sum b L(u_j)``,
    which equals the convex Shu-Osher form and leaves steady data bit-exact.
    """
    stages = [U]
    rates = {}
    for ref, incs, coefs in _stage_plan(integrator):
        base = stages[ref]
        new = base.copy()
        for a, j in incs:
            new += a * (stages[j] - base)
        for b, j in coefs:
            if j not in rates:
                rates[j] = rhs(stages[j])
            new += (dt * b) * rates[j]
        if after_stage is not None:
            after_stage(new)
        stages.append(new)
    return stages[-1]


def _configs(configs):
    flux_cfg, time_cfg = FluxConfig(), TimeConfig()
    if configs is None:
        return flux_cfg, time_cfg
    if isinstance(configs, TimeConfig):
        return flux_cfg, configs
    if isinstance(configs, FluxConfig):
        return configs, time_cfg
    for c in configs:
        if isinstance(c, FluxConfig):
            flux_cfg = c
        elif isinstance(c, TimeConfig):
            time_cfg = c
        else:
            raise TypeError(f"unexpected config object {c!r}")
    return flux_cfg, time_cfg


def integrate(field, mesh, params, configs=None, callback=None):
    flux_cfg, tc = _configs(configs)
    disc = field.disc
    if disc is None or disc.mesh is not mesh or disc.config != flux_cfg:
        disc = dgsem.discretization(mesh, params, flux_cfg, field.disc.sbp if field.disc else None,
                                    getattr(field.disc, "inflow_states", None))
    U = field.U.copy()
    t = float(field.t)
    stats = RunStats()
    weights = disc.avg_weights
    limit = tc.limiter_per_stage and disc.sbp.degree > 0

    def after_stage(V):
        if limit:
            stats.limiter_activations += dgsem.limit_nodes(V, weights, params, tc.limiter_eps)

    cfl = tc.cfl_practical
    if cfl is None:
        cfl = dgsem.PRACTICAL_CFL_ROE if flux_cfg.interface == "es-roe" else dgsem.PRACTICAL_CFL
    t_end = float(tc.t_end)
    while t < t_end * (1.0 - 1e-14) - 1e-300:
        if stats.steps >= tc.max_steps:
            raise StepLimitExceeded(f"reached {tc.max_steps} steps at t={t}")
        if tc.dt is not None:
            dt = tc.dt
        elif tc.dt_mode == "practical":
            dt = float(disc.practical_dt(U, cfl))
        else:
            dt = float(disc.theoretical_dt(U, dgsem.THEORETICAL_FRACTION))
        if t_end - t <= 1e-10 * dt:
            # rounding left of a fixed-step sum; not worth a step
            t = t_end
            break
        dt = min(dt, t_end - t)
        U = ssp_step(U, disc.rhs, dt, tc.integrator, after_stage)
        t += dt
        stats.steps += 1
        stats.dt_min = min(stats.dt_min, dt)
        stats.dt_max = max(stats.dt_max, dt)
        if callback is not None:
            callback(stats.steps, dgsem.SolutionField(U, disc, t), stats)
    return RunResult(dgsem.SolutionField(U, disc, t_end if t >= t_end * (1 - 1e-14) else t), stats)


def advance(field, mesh, params, configs=None, callback=None):
    """Integrate ``field`` to ``t_end``; see :func:`integrate` for statistics."""
    return integrate(field, mesh, params, configs, callback).field


def totals(field):
    """Domain integral of every conserved variable."""
    disc = field.disc
    U = field.U
    m = disc.mass
    return np.sum((U * m[None]).reshape(U.shape[0], -1), axis=1)


def total_entropy(field, params):
    eta, _ = thermo.entropy_pair(params, field.U, check=False)
    return float(np.sum(eta * field.disc.mass))


def entropy_budget(field, mesh, params, initial_field):
    """Sum over elements of |k| <eta(u_h) - eta(u_0)>_k."""
    if field.U.shape != initial_field.U.shape or field.disc.mesh is not initial_field.disc.mesh \
            or (mesh is not None and field.disc.mesh is not mesh):
        raise MeshMismatch("fields live on different meshes")
    eta, _ = thermo.entropy_pair(params, field.U, check=False)
    eta0, _ = thermo.entropy_pair(params, initial_field.U, check=False)
    return float(np.sum((eta - eta0) * field.disc.mass))
