"""Synthetic twin experiments: a known truth, generated data, exact scoring.

A twin problem is a small catchment built from a seeded random potential
(provably acyclic, single outlet), smooth descriptor fields, a truth
parameter field produced by a chosen mapping family, storm-pulse rainfall,
and "observations" simulated from the truth (optionally with multiplicative
noise).  The truth is carried on the problem object for scoring only; the
calibration path never reads it.
"""

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from . import regio
from .dataio import (
    DescriptorStack,
    ForcingSet,
    save_descriptors,
    save_forcing_record,
    save_gauges,
    save_observations,
)
from .errors import ConfigError
from .hydro import simulate
from .mesh import D8_OFFSETS, GaugeSet, Mesh, build_mesh
from .params import PARAM_NAMES, BoundsSpec, ParameterFields
from .rasters import RasterGrid, write_raster

TRUTH_KINDS = ("uniform", "linear", "nonlinear")


def _smooth_field(rng, shape, n_bumps: int = 5, sig_range=(0.15, 0.4)):
    """Sum of random Gaussian bumps, scaled to [-1, 1]."""
    nr, nc = shape
    rr, cc = np.meshgrid(
        np.arange(nr, dtype=np.float64),
        np.arange(nc, dtype=np.float64),
        indexing="ij",
    )
    out = np.zeros(shape)
    scale = float(max(nr, nc))
    for _ in range(n_bumps):
        r0 = rng.uniform(0.0, nr - 1.0)
        c0 = rng.uniform(0.0, nc - 1.0)
        sig = rng.uniform(*sig_range) * scale
        amp = rng.uniform(-1.0, 1.0)
        out += amp * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2.0 * sig * sig))
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def synthetic_flowdir(shape, rng) -> np.ndarray:
    """Seeded drainage network via steepest descent on a pitless potential.

    The potential is Chebyshev distance to a corner outlet plus smooth
    noise of amplitude < 0.5, so every non-outlet cell keeps a strictly
    lower neighbor and all paths end at the outlet.
    """
    nr, nc = shape
    corners = [(0, 0), (0, nc - 1), (nr - 1, 0), (nr - 1, nc - 1)]
    outlet = corners[int(rng.integers(0, 4))]
    rr, cc = np.meshgrid(np.arange(nr), np.arange(nc), indexing="ij")
    cheb = np.maximum(np.abs(rr - outlet[0]), np.abs(cc - outlet[1]))
    phi = cheb.astype(np.float64) + 0.49 * _smooth_field(rng, shape)
    flowdir = np.zeros(shape, dtype=np.int64)
    for r in range(nr):
        for c in range(nc):
            if (r, c) == outlet:
                continue
            best_code, best_phi = 0, phi[r, c]
            for code, (dr, dc) in D8_OFFSETS.items():
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < nr and 0 <= c2 < nc and phi[r2, c2] < best_phi:
                    best_code, best_phi = code, phi[r2, c2]
            flowdir[r, c] = best_code
    return flowdir


def synthetic_descriptors(rng, shape, n_desc: int) -> DescriptorStack:
    """Smooth pseudo-physiographic fields in arbitrary raw units."""
    nr, nc = shape
    n = nr * nc
    names = [f"d{k + 1}" for k in range(n_desc)]
    raw = np.empty((n_desc, n))
    for k in range(n_desc):
        base = rng.uniform(10.0, 200.0)
        span = rng.uniform(20.0, 120.0)
        raw[k] = (base + span * _smooth_field(rng, shape)).ravel()
    return DescriptorStack(names=names, raw=raw)


def _truth_fields(kind: str, dstack: DescriptorStack, bounds: BoundsSpec, rng):
    """Truth parameter fields plus the generating control when in-class."""
    dmat = dstack.matrix
    n = dmat.shape[0]
    if kind == "uniform":
        zeta = rng.uniform(0.3, 0.7, size=4)
        theta = bounds.lower + zeta * (bounds.upper - bounds.lower)
        control = regio.UniformControl(theta=theta)
        return regio.map_params(control, None, bounds, n_cells=n), control
    if kind == "linear":
        n_desc = dstack.n_desc
        alpha0 = rng.uniform(-0.5, 0.5, size=4)
        alpha = rng.uniform(-1.5, 1.5, size=(4, n_desc))
        z = alpha0[None, :] + dmat @ alpha.T
        for k in range(4):
            peak = np.max(np.abs(z[:, k]))
            fac = 1.8 / peak if peak > 0 else 1.0
            alpha0[k] *= fac
            alpha[k] *= fac
        control = regio.PolynomialControl(
            alpha0=alpha0, alpha=alpha,
            beta=np.ones((4, n_desc)), linear_mode=True,
        )
        return regio.map_params(control, dmat, bounds), control
    if kind == "nonlinear":
        if dstack.n_desc < 2:
            raise ConfigError("nonlinear truth needs at least 2 descriptors")
        x = 2.0 * dmat[:, 0] - 1.0
        y = 2.0 * dmat[:, 1] - 1.0
        # Non-monotone in d1, interacting with d2: no affine map in the
        # descriptors reproduces this pattern over the full domain.
        base = np.sin(1.5 * np.pi * x) * y
        values = np.empty((n, 4))
        for k in range(4):
            amp = rng.uniform(2.2, 2.8) * (1.0 if k % 2 == 0 else -1.0)
            tilt = rng.uniform(-0.15, 0.15)
            z = amp * base + tilt
            values[:, k] = regio.sigmoid_scale(
                z, bounds.lower[k], bounds.upper[k]
            )
        return ParameterFields(values=values), None
    raise ConfigError(f"unknown truth kind {kind!r}; expected {TRUTH_KINDS}")


def storm_forcings(rng, mesh: Mesh, nt: int, dt: float,
                   n_storms=None, pet_rate: float = 0.08) -> ForcingSet:
    """Sparse storm-pulse rainfall plus constant evapotranspiration demand.

    One storm is planted in each quarter of the run so every scoring window
    sees flow variability; extra storms land anywhere.
    """
    if n_storms is None:
        n_storms = max(5, nt // 70)
    quarter = nt // 4
    starts = [
        int(rng.integers(q * quarter + 2, (q + 1) * quarter - 16))
        for q in range(4)
    ]
    for _ in range(n_storms - 4):
        starts.append(int(rng.integers(2, nt - 16)))
    rain = np.zeros((nt, mesh.n))
    for start in starts:
        dur = int(rng.integers(6, 15))
        peak = rng.uniform(6.0, 14.0)
        pattern = 0.4 + 0.3 * (1.0 + _smooth_field(rng, mesh.shape))
        pat = mesh.from_grid(pattern)
        half = (dur - 1) / 2.0
        for j in range(dur):
            t = start + j
            if t >= nt:
                break
            w = 1.0 - abs(j - half) / (half + 1.0)
            rain[t] += peak * w * pat
    pet = np.full((nt, mesh.n), pet_rate)
    return ForcingSet.from_dense(rain, pet, dt=dt)


def choose_gauges(mesh: Mesh, n_cal: int, n_val: int) -> GaugeSet:
    """Pick gauge cells by drainage area, spaced apart, outlet held for val.

    The n_val largest-drainage cells (the outlet first) take the validation
    role; calibration gauges are the largest remaining cells subject to a
    spacing floor, relaxed if the mesh is too small to honor it.
    """
    drain = mesh.drainage
    by_drain = np.argsort(-drain, kind="stable")
    chosen = [int(by_drain[k]) for k in range(n_val)]
    spacing = max(2, min(mesh.shape) // 4)
    floor = max(4, mesh.n // 24)
    while len(chosen) < n_val + n_cal and spacing >= 0:
        for cell in by_drain:
            cell = int(cell)
            if cell in chosen or drain[cell] < floor:
                continue
            r, c = mesh.rows[cell], mesh.cols[cell]
            dist = min(
                max(abs(r - mesh.rows[o]), abs(c - mesh.cols[o]))
                for o in chosen
            )
            if dist < spacing:
                continue
            chosen.append(cell)
            if len(chosen) == n_val + n_cal:
                break
        spacing -= 1
    if len(chosen) < n_val + n_cal:
        raise ConfigError(
            f"mesh of {mesh.n} cells cannot host {n_cal + n_val} spaced gauges"
        )
    cells = chosen[n_val:] + chosen[:n_val]
    roles = ["cal"] * n_cal + ["val"] * n_val
    names = [f"g{k + 1:02d}" for k in range(len(cells))]
    return GaugeSet(names=names, cells=np.asarray(cells), roles=roles, mesh=mesh)


@dataclass
class TwinProblem:
    """A generated problem plus the withheld truth used only for scoring."""

    mesh: Mesh
    gauges: GaugeSet
    forcings: ForcingSet
    observations: np.ndarray
    descriptors: DescriptorStack
    bounds: BoundsSpec
    truth_kind: str
    truth_params: ParameterFields
    truth_control: object
    warmup: int
    cal_window: tuple
    val_window: tuple
    seed: int
    noise_std: float
    truth_discharge: np.ndarray = field(default=None)


def generate_twin(seed: int = 0, shape=(12, 12), truth_kind: str = "linear",
                  n_desc: int = 3, nt: int = 400, dt: float = 3600.0,
                  dx: float = 1000.0, n_cal: int = 3, n_val: int = 1,
                  noise_std: float = 0.0, warmup: int = 48,
                  bounds: BoundsSpec = None) -> TwinProblem:
    """Build a complete synthetic problem, deterministic in the seed."""
    if truth_kind not in TRUTH_KINDS:
        raise ConfigError(
            f"truth kind {truth_kind!r} not one of {TRUTH_KINDS}"
        )
    if nt <= warmup + 40:
        raise ConfigError(f"nt={nt} too short for warmup={warmup}")
    rng = np.random.default_rng(seed)
    if bounds is None:
        # tighter than the file-format defaults so twin responses keep the
        # transfer store active and every parameter identifiable
        bounds = BoundsSpec(
            lower=np.array([30.0, 5.0, -3.0, 1.0]),
            upper=np.array([500.0, 100.0, 3.0, 200.0]),
        )
    flowdir = synthetic_flowdir(shape, rng)
    mesh = build_mesh(flowdir, dx=dx)
    descriptors = synthetic_descriptors(rng, shape, n_desc)
    truth_params, truth_control = _truth_fields(truth_kind, descriptors,
                                                bounds, rng)
    forcings = storm_forcings(rng, mesh, nt, dt)
    gauges = choose_gauges(mesh, n_cal=n_cal, n_val=n_val)
    sim = simulate(mesh, truth_params, forcings, record_cells=gauges.cells)
    truth_q = sim.discharge
    obs = truth_q.copy()
    if noise_std > 0:
        obs = obs * (1.0 + noise_std * rng.standard_normal(obs.shape))
        np.maximum(obs, 0.0, out=obs)
    split = warmup + int(round((nt - warmup) * 0.75))
    return TwinProblem(
        mesh=mesh,
        gauges=gauges,
        forcings=forcings,
        observations=obs,
        descriptors=descriptors,
        bounds=bounds,
        truth_kind=truth_kind,
        truth_params=truth_params,
        truth_control=truth_control,
        warmup=warmup,
        cal_window=(warmup, split),
        val_window=(split, nt),
        seed=seed,
        noise_std=noise_std,
        truth_discharge=truth_q,
    )


# --------------------------------------------------------------------------
# twin configs and dataset writing
# --------------------------------------------------------------------------

_TRUTH_TO_MAPPING = {
    "uniform": "uniform",
    "linear": "multilinear",
    "nonlinear": "mlp",
}


def parse_twin_config(path):
    """Read a [twin]/[output] config.

    Returns (generate_twin keyword arguments, output directory).
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    if not cp.has_section("twin"):
        raise ConfigError(f"{path}: missing [twin] section")

    def get(key, default, cast):
        try:
            return cast(cp.get("twin", key, fallback=default))
        except ValueError as exc:
            raise ConfigError(f"[twin] {key}: {exc}")

    kw = dict(
        seed=get("seed", 0, int),
        shape=(get("rows", 12, int), get("cols", 12, int)),
        truth_kind=str(cp.get("twin", "truth", fallback="linear")).lower(),
        n_desc=get("n_desc", 3, int),
        nt=get("nt", 400, int),
        dt=get("dt", 3600.0, float),
        dx=get("dx", 1000.0, float),
        n_cal=get("n_cal", 3, int),
        n_val=get("n_val", 1, int),
        noise_std=get("noise_std", 0.0, float),
        warmup=get("warmup", 48, int),
    )
    out_dir = cp.get("output", "dir", fallback="twin_dataset")
    base = os.path.dirname(os.path.abspath(path))
    return kw, os.path.join(base, out_dir)


def _int_raster(mesh: Mesh, grid) -> RasterGrid:
    return RasterGrid(data=np.asarray(grid, dtype=np.float64),
                      cellsize=mesh.dx)


def write_twin_dataset(problem: TwinProblem, out_dir) -> str:
    """Write the problem as a file dataset plus a calibration config.

    Returns the path of the generated config.  Everything is derived from
    the problem object; no clocks or environment state leak into the files.
    """
    os.makedirs(out_dir, exist_ok=True)
    mesh = problem.mesh
    write_raster(
        os.path.join(out_dir, "flowdir.asc"),
        _int_raster(mesh, mesh.flowdir),
    )
    save_forcing_record(
        os.path.join(out_dir, "rain", "manifest.txt"),
        mesh, problem.forcings.rain, prefix="rain",
    )
    # constant-rate demand: one grid file shared by every step
    pet_dir = os.path.join(out_dir, "pet")
    os.makedirs(pet_dir, exist_ok=True)
    pet0 = problem.forcings.pet.step(0)
    write_raster(
        os.path.join(pet_dir, "pet_const.asc"),
        RasterGrid(
            data=np.where(mesh.active, mesh.to_grid(pet0, fill=0.0), -9999.0),
            cellsize=mesh.dx,
        ),
    )
    with open(os.path.join(pet_dir, "manifest.txt"), "w") as fh:
        fh.write(f"nt {problem.forcings.nt}\n")
        for t in range(problem.forcings.nt):
            fh.write(f"{t} pet_const.asc\n")
    save_gauges(os.path.join(out_dir, "gauges.txt"), mesh, problem.gauges)
    save_observations(
        os.path.join(out_dir, "observations.csv"),
        problem.gauges.names, problem.observations,
    )
    save_descriptors(
        os.path.join(out_dir, "descriptors", "manifest.txt"),
        mesh, problem.descriptors,
    )
    truth_dir = os.path.join(out_dir, "truth")
    os.makedirs(truth_dir, exist_ok=True)
    for k, name in enumerate(PARAM_NAMES):
        grid = np.where(
            mesh.active,
            mesh.to_grid(problem.truth_params.values[:, k], fill=0.0),
            -9999.0,
        )
        write_raster(
            os.path.join(truth_dir, f"param_{name}.asc"),
            RasterGrid(data=grid, cellsize=mesh.dx),
        )
    if problem.truth_control is not None:
        regio.save_control(
            os.path.join(truth_dir, "control.txt"), problem.truth_control
        )

    mapping = _TRUTH_TO_MAPPING[problem.truth_kind]
    lines = [
        "[paths]",
        "flowdir = flowdir.asc",
        "rain = rain/manifest.txt",
        "pet = pet/manifest.txt",
        "gauges = gauges.txt",
        "observations = observations.csv",
        "descriptors = descriptors/manifest.txt",
        "",
        "[time]",
        f"dt = {problem.forcings.dt:g}",
        f"nt = {problem.forcings.nt}",
        f"warmup_steps = {problem.warmup}",
        f"cal_start = {problem.cal_window[0]}",
        f"cal_end = {problem.cal_window[1]}",
        f"val_start = {problem.val_window[0]}",
        f"val_end = {problem.val_window[1]}",
        "",
        "[mapping]",
        f"kind = {mapping}",
        f"seed = {problem.seed + 1000}",
    ]
    if mapping == "mlp":
        lines.append("hidden = 16,12")
    lines += [
        "",
        "[bounds]",
    ]
    for k, name in enumerate(PARAM_NAMES):
        lines.append(
            f"{name} = {problem.bounds.lower[k]:.17g},{problem.bounds.upper[k]:.17g}"
        )
    lines += [
        "",
        "[optimizer]",
        "",
        "[output]",
        "dir = run",
        "",
        "[gradcheck]",
        "tol = 1e-4",
        "components = 24",
    ]
    cfg_path = os.path.join(out_dir, "calibration.ini")
    with open(cfg_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return cfg_path
