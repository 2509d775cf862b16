"""Calibration and validation runs: assembly, optimization, scoring, outputs.

A run maps a configuration onto a Problem (mesh, gauges, forcings,
observations, descriptors, bounds, windows), optimizes the selected mapping
on the calibration gauges over the calibration window, then scores the
result over the four evaluation windows: Cal (calibration gauges, first
period), S_Val (validation gauges, first period), T_Val (calibration
gauges, second period), S-T_Val (validation gauges, second period).
"""

import os
from dataclasses import dataclass

import numpy as np

from . import adjoint, optimize, regio
from .cost import (
    flood_signatures,
    improvement_rate,
    kge,
    nse,
    segment_events,
)
from .dataio import (
    MISSING_SENTINEL,
    RunConfig,
    load_descriptors,
    load_forcings,
    load_gauges,
    load_observations,
)
from .errors import (
    ConfigError,
    DegenerateObservationsError,
    EmptyEventError,
    ZeroBaselineError,
)
from .hydro import simulate
from .mesh import build_mesh
from .params import PARAM_NAMES, BoundsSpec, ParameterFields
from .rasters import RasterGrid, read_raster, write_raster

WINDOW_LABELS = (
    ("Cal", "cal", "cal"),
    ("S_Val", "val", "cal"),
    ("T_Val", "cal", "val"),
    ("S-T_Val", "val", "val"),
)

_DEFAULT_OPTIMIZER = {
    "uniform": "sbs",
    "multilinear": "lbfgsb",
    "multipolynomial": "lbfgsb",
    "mlp": "adam",
}


@dataclass
class Problem:
    """Everything one calibration or validation run reads."""

    mesh: object
    gauges: object
    forcings: object
    observations: np.ndarray
    descriptors: object
    bounds: BoundsSpec
    warmup: int
    cal_window: tuple
    val_window: tuple


@dataclass
class CalibrationResult:
    mapping: str
    control: object
    params: ParameterFields
    trace: object
    discharge: np.ndarray
    metrics: dict
    initial_metrics: dict
    improvement: list
    signatures: dict
    grad_fields: np.ndarray
    final_cost: float
    background: object = None


def problem_from_config(cfg: RunConfig) -> Problem:
    flow = read_raster(cfg.path("flowdir"))
    active = flow.mask()
    flowdir = np.where(active, flow.data, 0).astype(np.int64)
    mesh = build_mesh(flowdir, dx=flow.cellsize, active=active)
    gauges = load_gauges(cfg.path("gauges"), mesh)
    forcings = load_forcings(
        cfg.path("rain"), cfg.path("pet"), mesh, cfg.nt, cfg.dt
    )
    observations = load_observations(
        cfg.path("observations"), gauges.names, cfg.nt
    )
    descriptors = (
        load_descriptors(cfg.path("descriptors"), mesh)
        if cfg.has_path("descriptors") else None
    )
    return Problem(
        mesh=mesh,
        gauges=gauges,
        forcings=forcings,
        observations=observations,
        descriptors=descriptors,
        bounds=BoundsSpec.from_dict(cfg.bounds),
        warmup=cfg.warmup,
        cal_window=cfg.cal_window,
        val_window=cfg.val_window,
    )


def problem_from_twin(twin) -> Problem:
    return Problem(
        mesh=twin.mesh,
        gauges=twin.gauges,
        forcings=twin.forcings,
        observations=twin.observations,
        descriptors=twin.descriptors,
        bounds=twin.bounds,
        warmup=twin.warmup,
        cal_window=twin.cal_window,
        val_window=twin.val_window,
    )


def _window(problem: Problem, which: str) -> tuple:
    return problem.cal_window if which == "cal" else problem.val_window


def evaluate_windows(problem: Problem, discharge) -> dict:
    """Per-gauge NSE and KGE over the four role/period windows."""
    out = {}
    for label, role, which in WINDOW_LABELS:
        lo, hi = _window(problem, which)
        rows = []
        for g in problem.gauges.subset(role):
            sim = discharge[lo:hi, g]
            obs = problem.observations[lo:hi, g]
            try:
                score_n = nse(sim, obs)
                score_k = kge(sim, obs)
            except DegenerateObservationsError:
                score_n = float("nan")
                score_k = float("nan")
            rows.append(dict(
                name=problem.gauges.names[g], nse=score_n, kge=score_k,
            ))
        out[label] = rows
    return out


def _resolve_background(background, bounds: BoundsSpec):
    if background is None:
        return None
    if isinstance(background, dict):
        if not background:
            return None
        theta = bounds.midpoint()
        for name, value in background.items():
            if name not in PARAM_NAMES:
                raise ConfigError(f"unknown background parameter {name!r}")
            theta[PARAM_NAMES.index(name)] = float(value)
        return theta
    return np.asarray(background, dtype=np.float64)


def _interleave(weights, biases) -> list:
    out = []
    for w, b in zip(weights, biases):
        out.append(w)
        out.append(b)
    return out


def calibrate_problem(problem: Problem, mapping: str, seed: int = 1234,
                      hidden=(96, 48, 16), allow_wide_hidden: bool = False,
                      optimizer=None, maxiter: int = 250,
                      learning_rate: float = 0.003, epochs: int = 350,
                      background=None, background_search: bool = False,
                      ckpt_every=None, backend=None) -> CalibrationResult:
    """Optimize the mapping on the calibration gauges, then score it."""
    mesh = problem.mesh
    bounds = problem.bounds
    cal_idx = problem.gauges.subset("cal")
    if not cal_idx:
        raise ConfigError("run has no calibration gauges")
    cal_cells = problem.gauges.cells[cal_idx]
    cal_w = problem.gauges.weights[cal_idx]
    obs_cal = problem.observations[:, cal_idx]
    window = problem.cal_window
    dmat = (problem.descriptors.matrix
            if problem.descriptors is not None else None)
    n_desc = dmat.shape[1] if dmat is not None else 0
    if mapping != "uniform" and dmat is None:
        raise ConfigError(f"mapping {mapping!r} needs descriptor fields")
    if optimizer is None:
        optimizer = _DEFAULT_OPTIMIZER[mapping]

    def fields_cost(fields: ParameterFields) -> float:
        return adjoint.cost_at(
            mesh, fields, problem.forcings, cal_cells, obs_cal, cal_w,
            window, backend=backend,
        )

    def control_fields(control) -> ParameterFields:
        return regio.map_params(control, dmat, bounds, n_cells=mesh.n)

    background_theta = _resolve_background(background, bounds)
    if background_search and mapping != "uniform":
        background_theta, _ = optimize.global_uniform_search(
            lambda th: fields_cost(ParameterFields.uniform(mesh.n, th)),
            bounds, maxiter=max(40, maxiter // 4),
        )

    control0 = regio.init_control(
        mapping, n_desc, bounds, background=background_theta, seed=seed,
        hidden=hidden, n_cells=mesh.n, allow_wide_hidden=allow_wide_hidden,
    )

    if optimizer == "sbs":
        if mapping != "uniform":
            raise ConfigError("the uniform search optimizes spatially "
                              "uniform parameters only")
        theta_star, trace = optimize.global_uniform_search(
            lambda th: fields_cost(ParameterFields.uniform(mesh.n, th)),
            bounds, maxiter=maxiter,
        )
        control = regio.UniformControl(theta=theta_star)
    elif optimizer == "lbfgsb":
        if mapping == "uniform":
            raise ConfigError("uniform mapping calibrates with the global "
                              "search, not the quasi-Newton branch")
        template = control0

        def fun_grad(x):
            c = template.from_vector(x)
            fields = control_fields(c)
            cost, gfields, _ = adjoint.grad_theta(
                mesh, fields, problem.forcings, cal_cells, obs_cal, cal_w,
                window, ckpt_every=ckpt_every, backend=backend,
            )
            return cost, regio.vjp(c, dmat, bounds, gfields)

        var_bounds = None
        if hasattr(template, "vector_bounds"):
            var_bounds = template.vector_bounds()
        x_star, trace = optimize.quasi_newton_bounded(
            fun_grad, template.to_vector(), var_bounds, maxiter=maxiter,
        )
        control = template.from_vector(x_star)
    elif optimizer == "adam":
        if mapping != "mlp":
            raise ConfigError("adam is wired to the neural mapping")
        template = control0

        def rebuild(plist):
            return regio.MlpControl(
                weights=[np.asarray(p) for p in plist[0::2]],
                biases=[np.asarray(p) for p in plist[1::2]],
            )

        def fun_grad(plist):
            c = rebuild(plist)
            fields = control_fields(c)
            cost, gfields, _ = adjoint.grad_theta(
                mesh, fields, problem.forcings, cal_cells, obs_cal, cal_w,
                window, ckpt_every=ckpt_every, backend=backend,
            )
            flat = regio.vjp(c, dmat, bounds, gfields)
            gw, gb = c.unflatten(flat)
            return cost, _interleave(gw, gb)

        plist, trace = optimize.adam_train(
            _interleave(template.weights, template.biases), fun_grad,
            epochs=epochs, learning_rate=learning_rate,
        )
        control = rebuild(plist)
    else:
        raise ConfigError(f"unknown optimizer {optimizer!r}")

    params_star = control_fields(control)
    sim = simulate(mesh, params_star, problem.forcings,
                   record_cells=problem.gauges.cells, backend=backend)
    metrics = evaluate_windows(problem, sim.discharge)

    params0 = control_fields(control0)
    sim0 = simulate(mesh, params0, problem.forcings,
                    record_cells=problem.gauges.cells, backend=backend)
    initial_metrics = evaluate_windows(problem, sim0.discharge)

    improvement = []
    for row, row0 in zip(metrics["Cal"], initial_metrics["Cal"]):
        try:
            rate = improvement_rate(row["nse"], row0["nse"])
        except ZeroBaselineError:
            rate = float("nan")
        improvement.append(dict(
            name=row["name"], initial_nse=row0["nse"],
            final_nse=row["nse"], rate=rate,
        ))

    final_cost, grad_fields, _ = adjoint.grad_theta(
        mesh, params_star, problem.forcings, cal_cells, obs_cal, cal_w,
        window, ckpt_every=ckpt_every, backend=backend,
    )

    signatures = _event_signatures(problem, sim.discharge)

    return CalibrationResult(
        mapping=mapping,
        control=control,
        params=params_star,
        trace=trace,
        discharge=sim.discharge,
        metrics=metrics,
        initial_metrics=initial_metrics,
        improvement=improvement,
        signatures=signatures,
        grad_fields=grad_fields,
        final_cost=final_cost,
        background=background_theta,
    )


def _event_signatures(problem: Problem, discharge) -> dict:
    """Flood-event scores per calibration gauge (simplified segmentation)."""
    mesh = problem.mesh
    rain_dense = problem.forcings.rain.dense()
    area_factor = mesh.cell_area * 1e-3  # mm over a cell -> m3
    out = {}
    for g in problem.gauges.subset("cal"):
        name = problem.gauges.names[g]
        mask = mesh.upstream_mask(int(problem.gauges.cells[g]))
        rain_volume = rain_dense[:, mask].sum(axis=1) * area_factor
        obs = problem.observations[:, g]
        events = segment_events(obs, window=problem.cal_window)
        try:
            out[name] = flood_signatures(
                discharge[:, g], obs, rain_volume, events,
                problem.forcings.dt,
            )
        except EmptyEventError:
            out[name] = []
    return out


def evaluate_control(problem: Problem, control, backend=None) -> CalibrationResult:
    """Score an existing control over the four windows (no optimization)."""
    dmat = (problem.descriptors.matrix
            if problem.descriptors is not None else None)
    if getattr(control, "kind", None) != "uniform" and dmat is None:
        raise ConfigError("control needs descriptor fields to map")
    params = regio.map_params(control, dmat, problem.bounds,
                              n_cells=problem.mesh.n)
    sim = simulate(problem.mesh, params, problem.forcings,
                   record_cells=problem.gauges.cells, backend=backend)
    metrics = evaluate_windows(problem, sim.discharge)
    return CalibrationResult(
        mapping=getattr(control, "kind", "uniform"),
        control=control,
        params=params,
        trace=None,
        discharge=sim.discharge,
        metrics=metrics,
        initial_metrics=None,
        improvement=[],
        signatures=_event_signatures(problem, sim.discharge),
        grad_fields=None,
        final_cost=float("nan"),
    )


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def _field_raster(mesh, values) -> RasterGrid:
    grid = np.where(mesh.active, mesh.to_grid(values, fill=0.0), np.nan)
    return RasterGrid(data=grid, cellsize=mesh.dx)


def write_outputs(out_dir, prefix: str, problem: Problem,
                  result: CalibrationResult) -> None:
    """Write rasters, hydrographs, the descent trace, and a metrics report."""
    os.makedirs(out_dir, exist_ok=True)
    mesh = problem.mesh

    for k, name in enumerate(PARAM_NAMES):
        write_raster(
            os.path.join(out_dir, f"{prefix}_param_{name}.asc"),
            _field_raster(mesh, result.params.values[:, k]),
        )
    if result.grad_fields is not None:
        for k, name in enumerate(PARAM_NAMES):
            write_raster(
                os.path.join(out_dir, f"{prefix}_grad_{name}.asc"),
                _field_raster(mesh, result.grad_fields[:, k]),
            )

    nt = problem.forcings.nt
    for g, name in enumerate(problem.gauges.names):
        path = os.path.join(out_dir, f"{prefix}_hydrograph_{name}.csv")
        with open(path, "w") as fh:
            fh.write("time,observed,simulated\n")
            for t in range(problem.warmup, nt):
                o = problem.observations[t, g]
                o_txt = f"{MISSING_SENTINEL:.17g}" if np.isnan(o) else f"{o:.17g}"
                fh.write(f"{t},{o_txt},{result.discharge[t, g]:.17g}\n")

    if result.trace is not None:
        path = os.path.join(out_dir, f"{prefix}_descent.csv")
        best = result.trace.best_so_far()
        with open(path, "w") as fh:
            fh.write("iteration,cost,best_cost\n")
            for rec, b in zip(result.trace.records, best):
                fh.write(f"{rec.iteration},{rec.cost:.17g},{b:.17g}\n")

    regio.save_control(
        os.path.join(out_dir, f"{prefix}_control.txt"), result.control
    )

    with open(os.path.join(out_dir, f"{prefix}_metrics.txt"), "w") as fh:
        fh.write(_metrics_report(prefix, problem, result))


def _metrics_report(prefix: str, problem: Problem,
                    result: CalibrationResult) -> str:
    lines = [
        f"run {prefix}",
        f"mapping {result.mapping}",
        f"cells {problem.mesh.n}",
        f"gauges {problem.gauges.n_gauges}",
        f"calibration window [{problem.cal_window[0]}, {problem.cal_window[1]})",
        f"validation window [{problem.val_window[0]}, {problem.val_window[1]})",
    ]
    if result.trace is not None:
        lines.append(f"termination {result.trace.termination}")
        lines.append(f"iterations {len(result.trace)}")
    if np.isfinite(result.final_cost):
        lines.append(f"final cost {result.final_cost:.9g}")
    for label, _, _ in WINDOW_LABELS:
        rows = result.metrics.get(label, [])
        lines.append("")
        lines.append(f"[scores {label}]")
        if not rows:
            lines.append("(no gauges)")
        for row in rows:
            lines.append(
                f"gauge {row['name']} nse {row['nse']:.9g} kge {row['kge']:.9g}"
            )
    if result.improvement:
        lines.append("")
        lines.append("[improvement over initial control, Cal window]")
        for row in result.improvement:
            lines.append(
                f"gauge {row['name']} initial {row['initial_nse']:.9g} "
                f"final {row['final_nse']:.9g} rate {row['rate']:.9g}"
            )
    lines.append("")
    lines.append("[flood events, simplified segmentation, Cal window]")
    any_event = False
    for name, sigs in result.signatures.items():
        for s in sigs:
            any_event = True
            if s.skipped:
                lines.append(
                    f"gauge {name} event [{s.start}, {s.end}) epf {s.epf:.9g} "
                    f"eff {s.eff:.9g} erc skipped ({s.reason})"
                )
            else:
                lines.append(
                    f"gauge {name} event [{s.start}, {s.end}) epf {s.epf:.9g} "
                    f"eff {s.eff:.9g} erc {s.erc:.9g}"
                )
    if not any_event:
        lines.append("(no events)")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# config-level entry points
# --------------------------------------------------------------------------

def run_calibration(cfg: RunConfig) -> CalibrationResult:
    problem = problem_from_config(cfg)
    search = False
    if cfg.raw is not None and cfg.raw.has_option("background", "search"):
        search = cfg.raw.get("background", "search").lower() in (
            "1", "true", "yes",
        )
    result = calibrate_problem(
        problem, cfg.mapping, seed=cfg.seed, hidden=cfg.hidden,
        allow_wide_hidden=cfg.allow_wide_hidden, optimizer=cfg.optimizer,
        maxiter=cfg.maxiter, learning_rate=cfg.learning_rate,
        epochs=cfg.epochs, background=cfg.background,
        background_search=search,
    )
    write_outputs(cfg.output_dir, cfg.prefix, problem, result)
    return result


def run_validation(cfg: RunConfig, control_path) -> CalibrationResult:
    problem = problem_from_config(cfg)
    control = regio.load_control(control_path)
    result = evaluate_control(problem, control)
    write_outputs(cfg.output_dir, f"{cfg.prefix}_validate", problem, result)
    return result


def run_gradcheck(cfg: RunConfig) -> dict:
    """Adjoint-versus-finite-difference check on a seeded parameter field.

    Samples (cell, parameter) components, compares the adjoint gradient to
    central differences with h = 1e-4 (u - l), and reports the worst
    relative error over components whose difference quotient is resolvable.
    """
    problem = problem_from_config(cfg)
    mesh = problem.mesh
    bounds = problem.bounds
    rng = np.random.default_rng(cfg.seed)
    span = bounds.upper - bounds.lower
    values = bounds.lower + rng.uniform(0.15, 0.85, size=(mesh.n, 4)) * span
    params = ParameterFields(values=values)
    cal_idx = problem.gauges.subset("cal")
    if not cal_idx:
        raise ConfigError("gradient check needs calibration gauges")
    cal_cells = problem.gauges.cells[cal_idx]
    cal_w = problem.gauges.weights[cal_idx]
    obs = problem.observations[:, cal_idx]

    _, grad, _ = adjoint.grad_theta(
        mesh, params, problem.forcings, cal_cells, obs, cal_w,
        problem.cal_window,
    )
    n_comp = min(cfg.gradcheck_components, mesh.n * 4)
    flat = rng.choice(mesh.n * 4, size=n_comp, replace=False)
    components = [(int(i) // 4, int(i) % 4) for i in flat]
    h = 1e-4 * span
    fd = adjoint.fd_gradient(
        mesh, params, problem.forcings, cal_cells, obs, cal_w, h,
        window=problem.cal_window, components=components, bounds=bounds,
    )
    rows = []
    worst = 0.0
    for (cell, k), fd_val in zip(components, fd):
        ad_val = grad[cell, k]
        if abs(fd_val) > 1e-12:
            rel = abs(ad_val - fd_val) / abs(fd_val)
            worst = max(worst, rel)
        else:
            rel = float("nan")
        rows.append(dict(cell=cell, param=PARAM_NAMES[k],
                         adjoint=ad_val, fd=fd_val, rel=rel))
    return dict(
        ok=bool(worst < cfg.gradcheck_tol),
        worst=worst,
        tol=cfg.gradcheck_tol,
        components=rows,
    )
