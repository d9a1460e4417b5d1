"""Command line driver.

Loads a problem configuration, runs a uniform or adaptive refinement loop and
writes the convergence table, per-iteration VTK files and trajectories::

    traveltime --config example.toml --mode adaptive --out run/

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 violated trajectory assumption (tangential or vertex exit).
"""

import argparse
import json
import math
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import darcy_fem, dwr, tracer
from .errors import ConfigError
from .pipeline import run_loop
from .problems import load_config, shipped
from .vtk import write_mesh

TABLE_COLUMNS = ("iter", "ndofs", "T", "err", "est", "effectivity", "seconds")
EMIT_CHOICES = {"vtk", "csv"}


def _num(v):
    return "nan" if v is None or not math.isfinite(v) else format(float(v), ".17g")


def table_rows(steps, exact_T=None):
    """Rows of the convergence table.

    The error is taken against the exact travel time when known, otherwise
    against the finest travel time plus its estimate.
    """
    if not steps:
        return []
    ref = exact_T if exact_T is not None else steps[-1].travel_time + steps[-1].estimate
    rows = []
    for i, s in enumerate(steps):
        err = ref - s.travel_time
        eff = dwr.effectivity(err, s.estimate) if s.estimate != 0.0 else float("nan")
        rows.append((i, s.ndofs, s.travel_time, err, s.estimate, eff, s.seconds))
    return rows


def write_table(path, rows):
    lines = [",".join(TABLE_COLUMNS)]
    for r in rows:
        lines.append(",".join([str(r[0]), str(r[1])] + [_num(v) for v in r[2:]]))
    tmp = Path(str(path) + ".part")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_table(path):
    """Parse a table written by :func:`write_table` into a list of dicts."""
    text = Path(path).read_text().splitlines()
    head = text[0].split(",")
    out = []
    for line in text[1:]:
        vals = line.split(",")
        row = {k: float(v) for k, v in zip(head, vals)}
        row["iter"], row["ndofs"] = int(vals[0]), int(vals[1])
        out.append(row)
    return out


def write_step_fields(out, i, step, problem, emit):
    mesh = step.mesh
    ne = mesh.n_elements
    el = np.arange(ne)
    c = mesh.centroid
    if "vtk" in emit:
        comps = step.indicators.components
        data = {name: comps[:, j] for j, name in enumerate(dwr.COMPONENTS)}
        data["eta"] = step.indicators.eta
        data["pressure"] = step.primal.pressure(el, c)
        data["velocity"] = step.primal.velocity(el, c, check=False)
        data["adjoint_pressure"] = step.adjoint_solution.pressure(el, c)
        data["adjoint_velocity"] = step.adjoint_solution.velocity(el, c, check=False)
        _, phi = problem.material_arrays(mesh)
        data["porosity"] = phi
        write_mesh(out / f"mesh_{i:03d}.vtk", mesh, data)
        step.trajectory.to_vtk(out / f"trajectory_{i:03d}.vtk")
    if "csv" in emit:
        step.trajectory.to_csv(out / f"trajectory_{i:03d}.csv")
        step.adjoint.to_csv(out / f"adjoint_{i:03d}.csv")


def build_parser():
    p = argparse.ArgumentParser(prog="traveltime", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", required=True,
                   help="problem file (TOML) or the name of a shipped example")
    p.add_argument("--mode", choices=("uniform", "adaptive"))
    p.add_argument("--fraction", type=float, default=None,
                   help="fixed marking fraction (default: config value or 0.10)")
    p.add_argument("--max-dofs", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", default="traveltime_out")
    p.add_argument("--primal-order", type=int, choices=(0, 1), default=0)
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the randomized configuration self-check")
    p.add_argument("--emit", default="vtk,csv", help="comma list from {vtk,csv}")
    return p


def _load(source, seed):
    path = Path(source)
    if path.suffix == ".toml" or path.exists():
        cfg = load_config(path)
    else:
        try:
            cfg = shipped(source)
        except FileNotFoundError:
            raise ConfigError(f"configuration {source!r} not found") from None
    cfg.self_check(seed)
    return cfg


def _diagnostic(kind, message, exit_code, **extra):
    rec = {"status": "error", "error": kind, "message": str(message), "exit_code": exit_code}
    rec.update(extra)
    print(json.dumps(rec), file=sys.stderr)
    return rec


def run(args):
    """Run the driver on parsed arguments; returns the exit status."""
    out = Path(args.out)
    try:
        emit = {s.strip() for s in args.emit.split(",") if s.strip()}
        if not emit <= EMIT_CHOICES:
            raise ConfigError(f"--emit accepts {sorted(EMIT_CHOICES)}, got {sorted(emit)}")
        cfg = _load(args.config, args.seed)
        ref = cfg.refinement
        mode = args.mode or ref.get("mode", "uniform")
        fraction = args.fraction if args.fraction is not None else float(ref.get("fraction", 0.10))
        max_iters = args.max_iters if args.max_iters is not None else int(ref.get("max_iters", 6))
        max_dofs = args.max_dofs if args.max_dofs is not None else ref.get("max_dofs")
        if not 0.0 < fraction <= 1.0:
            raise ConfigError("--fraction must lie in (0, 1]")
        if max_iters < 1:
            raise ConfigError("--max-iters must be at least 1")
        mesh = cfg.build_mesh()
        problem = cfg.problem_spec()
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        _diagnostic("ConfigError", exc, 2, stage="startup")
        return 2
    except OSError as exc:
        _diagnostic("ConfigError", f"cannot use output directory: {exc}", 2, stage="startup")
        return 2

    exact_T = cfg.exact_travel_time
    t_max = float(cfg.tracer.get("t_max", np.inf))
    record = {
        "config": cfg.name, "config_digest": cfg.digest(), "mode": mode, "fraction": fraction,
        "max_iters": max_iters, "max_dofs": max_dofs, "primal_order": args.primal_order,
        "seed": args.seed, "reference": "exact" if exact_T is not None else "finest+estimate",
        "tolerances": {"solver_residual": darcy_fem.RESIDUAL_TOL,
                       "tracer_vertex": tracer.VERTEX_TOL,
                       "tracer_tangential": tracer.TANGENTIAL_TOL,
                       "tracer_rk_rtol": tracer.RK_RTOL},
    }
    steps = []

    def on_step(i, step):
        # scalars only, so the loop can drop the fields of older steps
        steps.append(SimpleNamespace(ndofs=step.ndofs, travel_time=step.travel_time,
                                     estimate=step.estimate, seconds=step.seconds))
        write_table(out / "table.csv", table_rows(steps, exact_T))
        write_step_fields(out, i, step, problem, emit)
        r = table_rows(steps, exact_T)[-1]
        print(f"iter {i:3d}  ndofs {r[1]:8d}  T {r[2]:.12g}  est {r[4]:.6e}", flush=True)

    result = run_loop(mesh, problem, mode, fraction, max_iters, max_dofs,
                      k=args.primal_order, t_max=t_max, callback=on_step, keep=False)
    status = 0
    if result.error is not None:
        err = result.error
        status = err.exit_code
        record["error"] = _diagnostic(type(err.cause).__name__, err, status,
                                      iteration=err.iteration, stage=err.stage)
    record["status"] = "ok" if status == 0 else "error"
    record["iterations"] = len(steps)
    (out / "run.json").write_text(json.dumps(record, indent=2) + "\n")
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
