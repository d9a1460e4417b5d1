"""One solve-trace-estimate step and the refinement loop built from it."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import darcy_fem, dwr, mesh as meshmod
from .adjoint_traj import solve_adjoint
from .errors import TravelTimeError
from .tracer import trace, transport_field

ADJOINT_QUAD_ORDER = 5


class StageError(Exception):
    """A module error annotated with the iteration and stage it came from."""

    def __init__(self, iteration, stage, cause):
        super().__init__(f"iteration {iteration}, stage {stage}: "
                         f"{type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)


@dataclass(eq=False)
class Step:
    """Everything computed on one mesh."""

    mesh: object
    primal: object
    trajectory: object
    adjoint: object
    adjoint_solution: object
    interpolant: object
    indicators: object
    seconds: float = 0.0

    @property
    def ndofs(self):
        return self.primal.space.ndofs

    @property
    def travel_time(self):
        return self.trajectory.travel_time

    @property
    def estimate(self):
        return self.indicators.estimate


def solve_step(mesh, problem, k=0, iteration=0, t_max=np.inf):
    """Primal solve, trace, adjoint path, discrete adjoint and indicators."""
    t0 = time.perf_counter()
    stage = "primal"
    try:
        space = darcy_fem.build_space(mesh, k, problem)
        system = darcy_fem.assemble(space, problem)
        primal = darcy_fem.solve(system)
        stage = "trace"
        field_ = transport_field(primal, problem)
        traj = trace(field_, mesh, problem.release_point, t_max)
        stage = "adjoint"
        adj = solve_adjoint(traj)
        stage = "discrete adjoint"
        space_W = darcy_fem.build_space(mesh, k + 1, problem)
        system_W = darcy_fem.assemble(space_W, problem)
        _, phi = problem.material_arrays(mesh)
        rhs = dwr.assemble_adjoint_rhs(space_W, adj, phi, ADJOINT_QUAD_ORDER)
        adj_sol = dwr.solve_discrete_adjoint(system_W, rhs)
        stage = "indicators"
        interp = dwr.interpolate_adjoint(adj_sol, space)
        ind = dwr.compute_indicators(primal, adj_sol, interp, problem)
    except (TravelTimeError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(iteration, stage, exc) from exc
    return Step(mesh, primal, traj, adj, adj_sol, interp, ind, time.perf_counter() - t0)


@dataclass
class RunResult:
    steps: list = field(default_factory=list)
    marked: list = field(default_factory=list)
    error: object = None

    @property
    def rows(self):
        return [(i, s.ndofs, s.travel_time, s.estimate, s.seconds)
                for i, s in enumerate(self.steps)]


def run_loop(mesh, problem, mode="uniform", fraction=0.10, max_iters=6, max_dofs=None,
             k=0, t_max=np.inf, callback=None, keep=True):
    """Refinement loop; stops at ``max_iters`` steps or when ``max_dofs`` is exceeded.

    A :class:`StageError` ends the loop; the steps finished so far are kept in
    the result and the error is stored on it. ``callback(i, step)`` runs after
    each step. With ``keep=False`` only the last two steps keep their fields.
    """
    if mode not in ("uniform", "adaptive"):
        raise ValueError(f"unknown refinement mode {mode!r}")
    result = RunResult()
    for it in range(max_iters):
        try:
            step = solve_step(mesh, problem, k, it, t_max)
        except StageError as exc:
            result.error = exc
            return result
        result.steps.append(step)
        if callback is not None:
            callback(it, step)
        if not keep and len(result.steps) > 2:
            result.steps[-3] = _Row(result.steps[-3])
        if it == max_iters - 1:
            break
        if mode == "uniform":
            marked = set(range(mesh.n_elements))
        else:
            marked = meshmod.mark_fixed_fraction(step.indicators.eta, fraction)
        result.marked.append(marked)
        try:
            new = meshmod.refine(mesh, marked)
        except TravelTimeError as exc:
            result.error = StageError(it, "refine", exc)
            return result
        if max_dofs is not None and darcy_fem.MixedSpace(new, k).ndofs > max_dofs:
            break
        mesh = new
    return result


@dataclass(eq=False)
class _Row:
    """Scalar summary of a dropped step."""

    ndofs: int
    travel_time: float
    estimate: float
    seconds: float
    mesh: object

    def __init__(self, step):
        self.ndofs, self.travel_time = step.ndofs, step.travel_time
        self.estimate, self.seconds, self.mesh = step.estimate, step.seconds, step.mesh


def path_adjacent(mesh, trajectory):
    """Elements sharing a vertex with an element crossed by the trajectory."""
    crossed = np.unique(trajectory.elements)
    return set(int(e) for e in mesh.vertex_neighbors(crossed)) | set(int(e) for e in crossed)
