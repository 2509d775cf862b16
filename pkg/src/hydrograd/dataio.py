"""File-based inputs and outputs: forcings, gauges, observations, configs.

Forcing records are stored sparsely: a manifest lists only the timesteps
with nonzero fields, pointing each at a grid file.  Unlisted steps are
all-zero and occupy no storage.

Observation files are CSV with a time column followed by one column per
gauge; the sentinel -99 marks a missing value.
"""

import configparser
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ConstantDescriptorWarning,
    MissingTimestepError,
    NegativeForcingError,
    RasterFormatError,
    ShapeMismatchError,
)
from .mesh import GaugeSet, Mesh
from .rasters import RasterGrid, read_raster, write_raster

MISSING_SENTINEL = -99.0


# --------------------------------------------------------------------------
# forcings
# --------------------------------------------------------------------------

@dataclass
class ForcingRecord:
    """One gridded series over active cells with zero steps elided.

    step_row[t] is the row of `data` holding step t, or -1 when the step is
    all zero.  data has shape (n_stored, n_cells).
    """

    nt: int
    step_row: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.step_row = np.asarray(self.step_row, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.step_row.shape != (self.nt,):
            raise ShapeMismatchError(
                f"step index length {self.step_row.shape} for nt={self.nt}"
            )
        if self.data.ndim != 2:
            raise ShapeMismatchError("forcing data must be 2-D (steps, cells)")

    @property
    def n_cells(self) -> int:
        return self.data.shape[1]

    @property
    def n_stored(self) -> int:
        return self.data.shape[0]

    def step(self, t: int) -> np.ndarray:
        r = self.step_row[t]
        if r < 0:
            return np.zeros(self.n_cells)
        return self.data[r]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.nt, self.n_cells))
        stored = self.step_row >= 0
        out[stored] = self.data[self.step_row[stored]]
        return out

    @classmethod
    def from_dense(cls, values) -> "ForcingRecord":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError("dense forcing array must be 2-D (steps, cells)")
        if (values < 0).any():
            t, c = np.argwhere(values < 0)[0]
            raise NegativeForcingError(
                f"negative forcing {values[t, c]} at step {t}, cell {c}"
            )
        nt = values.shape[0]
        nonzero = np.nonzero(values.any(axis=1))[0]
        step_row = np.full(nt, -1, dtype=np.int64)
        step_row[nonzero] = np.arange(nonzero.size)
        return cls(nt=nt, step_row=step_row, data=values[nonzero].copy())


@dataclass
class ForcingSet:
    """Rainfall and evapotranspiration series sharing one clock."""

    rain: ForcingRecord
    pet: ForcingRecord
    dt: float
    t0: int = 0

    def __post_init__(self):
        if self.rain.nt != self.pet.nt:
            raise ShapeMismatchError(
                f"rainfall has {self.rain.nt} steps, evapotranspiration {self.pet.nt}"
            )
        if self.rain.n_cells != self.pet.n_cells:
            raise ShapeMismatchError(
                f"rainfall covers {self.rain.n_cells} cells, "
                f"evapotranspiration {self.pet.n_cells}"
            )
        if self.dt <= 0:
            raise ShapeMismatchError(f"dt must be positive, got {self.dt}")

    @property
    def nt(self) -> int:
        return self.rain.nt

    @property
    def n_cells(self) -> int:
        return self.rain.n_cells

    @classmethod
    def from_dense(cls, rain, pet, dt: float, t0: int = 0) -> "ForcingSet":
        return cls(
            rain=ForcingRecord.from_dense(rain),
            pet=ForcingRecord.from_dense(pet),
            dt=dt,
            t0=t0,
        )


def load_forcing_record(manifest_path, mesh: Mesh, nt: int) -> ForcingRecord:
    """Read one sparse forcing record.

    Manifest format: first line "nt <N>", then one "<step> <grid file>" line
    per stored step (paths relative to the manifest).  Steps must be unique,
    in range, and the record must cover the requested window.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("nt "):
        raise RasterFormatError(f"{manifest_path}: first line must be 'nt <steps>'")
    rec_nt = int(lines[0].split()[1])
    if rec_nt < nt:
        raise MissingTimestepError(
            f"{manifest_path}: record covers {rec_nt} steps, run needs {nt}"
        )
    step_row = np.full(nt, -1, dtype=np.int64)
    rows = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise RasterFormatError(f"{manifest_path}: bad manifest line {ln!r}")
        t = int(parts[0])
        if not 0 <= t < rec_nt:
            raise MissingTimestepError(
                f"{manifest_path}: step {t} outside record of {rec_nt} steps"
            )
        if t >= nt:
            continue
        if step_row[t] >= 0:
            raise RasterFormatError(f"{manifest_path}: duplicate step {t}")
        grid = read_raster(os.path.join(base, parts[1]))
        if grid.shape != mesh.shape:
            raise ShapeMismatchError(
                f"{parts[1]}: shape {grid.shape} does not match mesh {mesh.shape}"
            )
        vals = mesh.from_grid(grid.values())
        if np.isnan(vals).any():
            raise RasterFormatError(f"{parts[1]}: nodata inside the active mask")
        if (vals < 0).any():
            raise NegativeForcingError(f"{parts[1]}: negative forcing value")
        step_row[t] = len(rows)
        rows.append(vals)
    data = np.asarray(rows) if rows else np.zeros((0, mesh.n))
    return ForcingRecord(nt=nt, step_row=step_row, data=data)


def load_forcings(rain_manifest, pet_manifest, mesh: Mesh, nt: int,
                  dt: float) -> ForcingSet:
    return ForcingSet(
        rain=load_forcing_record(rain_manifest, mesh, nt),
        pet=load_forcing_record(pet_manifest, mesh, nt),
        dt=dt,
    )


def save_forcing_record(manifest_path, mesh: Mesh, record: ForcingRecord,
                        prefix: str) -> None:
    """Write a sparse forcing record next to its manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(base, exist_ok=True)
    names = []
    for k in range(record.n_stored):
        t = int(np.nonzero(record.step_row == k)[0][0])
        name = f"{prefix}_{t:06d}.asc"
        grid = RasterGrid(
            data=np.where(mesh.active, mesh.to_grid(record.data[k], fill=0.0), -9999.0),
            cellsize=mesh.dx,
        )
        write_raster(os.path.join(base, name), grid)
        names.append((t, name))
    with open(manifest_path, "w") as fh:
        fh.write(f"nt {record.nt}\n")
        for t, name in sorted(names):
            fh.write(f"{t} {name}\n")


# --------------------------------------------------------------------------
# gauges and observations
# --------------------------------------------------------------------------

def load_gauges(path, mesh: Mesh) -> GaugeSet:
    """Read gauge metadata: one "name row col role [weight]" line per gauge."""
    names, cells, roles, weights = [], [], [], []
    have_weights = False
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) not in (4, 5):
                raise ConfigError(f"{path}: bad gauge line {ln!r}")
            names.append(parts[0])
            cells.append(mesh.cell_at(int(parts[1]), int(parts[2])))
            roles.append(parts[3])
            if len(parts) == 5:
                have_weights = True
                weights.append(float(parts[4]))
            else:
                weights.append(None)
    if have_weights and any(w is None for w in weights):
        raise ConfigError(f"{path}: weights must be given for all gauges or none")
    w = np.asarray(weights, dtype=np.float64) if have_weights else None
    return GaugeSet(names=names, cells=cells, roles=roles, weights=w, mesh=mesh)


def save_gauges(path, mesh: Mesh, gauges: GaugeSet) -> None:
    with open(path, "w") as fh:
        fh.write("# name row col role weight\n")
        for name, cell, role, w in zip(
            gauges.names, gauges.cells, gauges.roles, gauges.weights
        ):
            r, c = mesh.rows[cell], mesh.cols[cell]
            fh.write(f"{name} {r} {c} {role} {w:.17g}\n")


def load_observations(path, gauge_names, nt: int) -> np.ndarray:
    """Read observed discharge (m3/s) as an (nt, n_gauges) array.

    The sentinel -99 becomes NaN.  Columns are matched to gauge names; rows
    beyond nt are ignored, fewer rows than nt is an error.
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    if header[0] != "time":
        raise ConfigError(f"{path}: first column must be 'time'")
    cols = {}
    for name in gauge_names:
        if name not in header:
            raise ConfigError(f"{path}: no column for gauge {name!r}")
        cols[name] = header.index(name)
    if len(rows) < nt:
        raise MissingTimestepError(f"{path}: {len(rows)} rows, run needs {nt}")
    out = np.empty((nt, len(gauge_names)))
    for t in range(nt):
        for g, name in enumerate(gauge_names):
            out[t, g] = float(rows[t][cols[name]])
    out[out == MISSING_SENTINEL] = np.nan
    return out


def save_observations(path, gauge_names, series, times=None) -> None:
    """Write a discharge table; NaN becomes the -99 sentinel."""
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    if series.shape[1] != len(gauge_names):
        series = series.T
    nt = series.shape[0]
    if times is None:
        times = [str(t) for t in range(nt)]
    with open(path, "w") as fh:
        fh.write("time," + ",".join(gauge_names) + "\n")
        for t in range(nt):
            vals = [
                f"{MISSING_SENTINEL:.17g}" if np.isnan(v) else f"{v:.17g}"
                for v in series[t]
            ]
            fh.write(f"{times[t]}," + ",".join(vals) + "\n")


# --------------------------------------------------------------------------
# descriptors
# --------------------------------------------------------------------------

def normalize_descriptors(raw) -> np.ndarray:
    """Min-max scale each layer of (n_desc, n_cells) to [0, 1].

    Constant layers become all zeros with a warning; already-normalized
    layers pass through unchanged.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min(axis=1, keepdims=True)
    hi = raw.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span[:, 0] == 0
    if flat.any():
        warnings.warn(
            f"descriptor layers {np.nonzero(flat)[0].tolist()} are constant; "
            "normalized to zeros",
            ConstantDescriptorWarning,
        )
        span[flat] = 1.0
    out = (raw - lo) / span
    out[flat] = 0.0
    return out


@dataclass
class DescriptorStack:
    """Physiographic descriptor fields and their normalized compact matrix."""

    names: list
    raw: np.ndarray          # (n_desc, n_cells), physical units
    normalized: np.ndarray = field(init=False)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.raw.ndim != 2 or self.raw.shape[0] != len(self.names):
            raise ShapeMismatchError(
                f"descriptor matrix {self.raw.shape} for {len(self.names)} names"
            )
        if not np.isfinite(self.raw).all():
            raise RasterFormatError("descriptor field has non-finite values")
        self.normalized = normalize_descriptors(self.raw)

    @property
    def n_desc(self) -> int:
        return self.raw.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """(n_cells, n_desc) normalized design matrix."""
        return np.ascontiguousarray(self.normalized.T)


def load_descriptors(manifest_path, mesh: Mesh) -> DescriptorStack:
    """Read descriptor fields: manifest lines are "name gridfile"."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    names, rows = [], []
    with open(manifest_path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) != 2:
                raise RasterFormatError(f"{manifest_path}: bad line {ln!r}")
            grid = read_raster(os.path.join(base, parts[1]))
            if grid.shape != mesh.shape:
                raise ShapeMismatchError(
                    f"{parts[1]}: shape {grid.shape} does not match mesh {mesh.shape}"
                )
            vals = mesh.from_grid(grid.values())
            if np.isnan(vals).any():
                raise RasterFormatError(f"{parts[1]}: nodata inside the active mask")
            names.append(parts[0])
            rows.append(vals)
    if not names:
        raise RasterFormatError(f"{manifest_path}: no descriptors listed")
    return DescriptorStack(names=names, raw=np.asarray(rows))


def save_descriptors(manifest_path, mesh: Mesh, stack: DescriptorStack) -> None:
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(base, exist_ok=True)
    with open(manifest_path, "w") as fh:
        for k, name in enumerate(stack.names):
            fname = f"desc_{name}.asc"
            grid = RasterGrid(
                data=np.where(
                    mesh.active, mesh.to_grid(stack.raw[k], fill=0.0), -9999.0
                ),
                cellsize=mesh.dx,
            )
            write_raster(os.path.join(base, fname), grid)
            fh.write(f"{name} {fname}\n")


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Parsed configuration for calibrate/validate/twin/gradcheck runs."""

    base_dir: str
    paths: dict
    dt: float
    nt: int
    warmup: int
    cal_window: tuple
    val_window: tuple
    mapping: str
    hidden: tuple
    seed: int
    allow_wide_hidden: bool
    bounds: dict
    background: dict
    optimizer: str
    maxiter: int
    learning_rate: float
    epochs: int
    output_dir: str
    prefix: str
    gradcheck_tol: float
    gradcheck_components: int
    raw: configparser.ConfigParser = None

    def path(self, key: str) -> str:
        if key not in self.paths:
            raise ConfigError(f"config has no [paths] entry {key!r}")
        return os.path.join(self.base_dir, self.paths[key])

    def has_path(self, key: str) -> bool:
        return key in self.paths


_MAPPINGS = ("uniform", "multilinear", "multipolynomial", "mlp")
_OPTIMIZERS = ("sbs", "lbfgsb", "adam")
_DEFAULT_OPTIMIZER = {
    "uniform": "sbs",
    "multilinear": "lbfgsb",
    "multipolynomial": "lbfgsb",
    "mlp": "adam",
}
_DEFAULT_BOUNDS = {
    "cp": (1e-6, 1000.0),
    "ct": (1e-6, 1000.0),
    "kexc": (-50.0, 50.0),
    "llr": (1e-6, 1000.0),
}


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    base = os.path.dirname(os.path.abspath(path))

    def get(section, key, default=None, cast=str):
        if cp.has_option(section, key):
            try:
                return cast(cp.get(section, key))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}")
        if default is None:
            raise ConfigError(f"config missing [{section}] {key}")
        return default

    paths = dict(cp.items("paths")) if cp.has_section("paths") else {}

    dt = get("time", "dt", cast=float)
    nt = get("time", "nt", cast=int)
    warmup = get("time", "warmup_steps", default=0, cast=int)
    cal = (get("time", "cal_start", cast=int), get("time", "cal_end", cast=int))
    val = (
        get("time", "val_start", default=cal[1], cast=int),
        get("time", "val_end", default=cal[1], cast=int),
    )
    if dt <= 0:
        raise ConfigError(f"[time] dt must be positive, got {dt}")
    if not (0 <= warmup <= cal[0] <= cal[1] <= nt):
        raise ConfigError(
            "[time] windows must satisfy 0 <= warmup <= cal_start <= cal_end <= nt"
            f" (warmup={warmup}, cal={cal}, nt={nt})"
        )
    if not (cal[1] <= val[0] <= val[1] <= nt):
        raise ConfigError(
            f"[time] validation window {val} must follow calibration and fit in nt={nt}"
        )

    mapping = get("mapping", "kind", default="uniform").lower()
    if mapping not in _MAPPINGS:
        raise ConfigError(f"[mapping] kind {mapping!r} not one of {_MAPPINGS}")
    hidden = tuple(
        int(x) for x in get("mapping", "hidden", default="96,48,16").split(",") if x
    )
    seed = get("mapping", "seed", default=1234, cast=int)
    allow_wide = get("mapping", "allow_wide_hidden", default="false").lower() in (
        "1", "true", "yes",
    )

    bounds = {}
    for name, dflt in _DEFAULT_BOUNDS.items():
        txt = get("bounds", name, default=f"{dflt[0]},{dflt[1]}")
        try:
            lo, hi = (float(x) for x in txt.split(","))
        except ValueError:
            raise ConfigError(f"[bounds] {name}: expected 'lower,upper', got {txt!r}")
        bounds[name] = (lo, hi)

    background = {}
    if cp.has_section("background"):
        for name in _DEFAULT_BOUNDS:
            if cp.has_option("background", name):
                background[name] = float(cp.get("background", name))

    optimizer = get("optimizer", "kind", default=_DEFAULT_OPTIMIZER[mapping]).lower()
    if optimizer not in _OPTIMIZERS:
        raise ConfigError(f"[optimizer] kind {optimizer!r} not one of {_OPTIMIZERS}")
    maxiter = get("optimizer", "maxiter", default=250, cast=int)
    lr = get("optimizer", "learning_rate", default=0.003, cast=float)
    epochs = get("optimizer", "epochs", default=350, cast=int)

    outdir = get("output", "dir", default="out")
    prefix = get("output", "prefix", default="run")
    gtol = get("gradcheck", "tol", default=1e-4, cast=float)
    gcomp = get("gradcheck", "components", default=24, cast=int)

    return RunConfig(
        base_dir=base,
        paths=paths,
        dt=dt,
        nt=nt,
        warmup=warmup,
        cal_window=cal,
        val_window=val,
        mapping=mapping,
        hidden=hidden,
        seed=seed,
        allow_wide_hidden=allow_wide,
        bounds=bounds,
        background=background,
        optimizer=optimizer,
        maxiter=maxiter,
        learning_rate=lr,
        epochs=epochs,
        output_dir=os.path.join(base, outdir),
        prefix=prefix,
        gradcheck_tol=gtol,
        gradcheck_components=gcomp,
        raw=cp,
    )
