"""Forward rainfall-runoff simulation on the mesh.

Each timestep applies, per cell: rainfall neutralization, production store
update, percolation, exchange, transfer store release, then routes the
cell runoff downstream through per-cell linear reservoirs processed in
topological order (upstream releases reach downstream cells within the
same step).

States are store levels in mm; discharge is in m3/s; runoff volumes
convert by cell area: 1 mm over dx*dx m2 = dx*dx*1e-3 m3.
"""

from dataclasses import dataclass

import numpy as np

from ..dataio import ForcingSet
from ..errors import ShapeMismatchError
from ..mesh import Mesh
from ..params import ParameterFields
from . import _kernels as _py
from .backend import available_backends, default_backend_name, get_backend

__all__ = [
    "SimResult",
    "simulate",
    "cell_step",
    "route_step",
    "water_balance",
    "available_backends",
    "default_backend_name",
    "release_fraction",
    "default_initial_states",
]


def release_fraction(llr, dt: float):
    """Per-step release fraction of the routing reservoir, 1-exp(-dt/(60*llr))."""
    llr = np.asarray(llr, dtype=np.float64)
    return -np.expm1(-dt / (60.0 * llr))


def release_fraction_derivative(llr, dt: float):
    """d(release_fraction)/d(llr)."""
    llr = np.asarray(llr, dtype=np.float64)
    x = dt / (60.0 * llr)
    return -np.exp(-x) * dt / (60.0 * llr * llr)


def default_initial_states(params: ParameterFields) -> np.ndarray:
    """Stores at 1% of capacity, empty routing reservoirs; shape (3, n)."""
    h0 = np.zeros((3, params.n_cells))
    h0[0] = 0.01 * params.cp
    h0[1] = 0.01 * params.ct
    return h0


@dataclass
class SimResult:
    discharge: np.ndarray        # (nt, n_recorded), m3/s
    record_cells: np.ndarray
    final_states: np.ndarray     # (3, n)
    checkpoints: np.ndarray      # (n_ckpt, 3, n); empty if not requested
    ckpt_every: int
    dt: float


def _check_conformal(mesh: Mesh, params: ParameterFields, forcings: ForcingSet):
    if forcings.n_cells != mesh.n:
        raise ShapeMismatchError(
            f"forcings cover {forcings.n_cells} cells, mesh has {mesh.n}"
        )
    if params.n_cells != mesh.n:
        raise ShapeMismatchError(
            f"parameters cover {params.n_cells} cells, mesh has {mesh.n}"
        )


def _states_array(params: ParameterFields, initial_states) -> np.ndarray:
    if initial_states is None:
        return default_initial_states(params)
    h0 = np.ascontiguousarray(initial_states, dtype=np.float64)
    if h0.shape != (3, params.n_cells):
        raise ShapeMismatchError(
            f"initial states must be (3, {params.n_cells}), got {h0.shape}"
        )
    return h0.copy()


def simulate(mesh: Mesh, params: ParameterFields, forcings: ForcingSet,
             record_cells=None, initial_states=None, ckpt_every: int = 0,
             backend=None) -> SimResult:
    """Run the full forward model.

    record_cells defaults to the mesh outlets.  ckpt_every > 0 additionally
    stores the model state every that many steps for adjoint replay.
    """
    _check_conformal(mesh, params, forcings)
    if record_cells is None:
        record_cells = mesh.outlets
    record_cells = np.asarray(record_cells, dtype=np.int64)
    h0 = _states_array(params, initial_states)
    kern = get_backend(backend)
    nu_dt = mesh.cell_area * 1e-3 / forcings.dt
    alpha = release_fraction(params.llr, forcings.dt)
    qrec, hp, ht, hr, ckpt = kern.forward(
        mesh.order, mesh.down, mesh.levels,
        params.cp.copy(), params.ct.copy(), params.kexc.copy(), alpha,
        forcings.rain.step_row, forcings.rain.data,
        forcings.pet.step_row, forcings.pet.data,
        h0[0], h0[1], h0[2], nu_dt, record_cells, forcings.nt, int(ckpt_every),
    )
    return SimResult(
        discharge=qrec,
        record_cells=record_cells,
        final_states=np.stack([hp, ht, hr]),
        checkpoints=ckpt,
        ckpt_every=int(ckpt_every),
        dt=forcings.dt,
    )


def cell_step(cp, ct, kexc, hp, ht, precip, pet):
    """One vertical-budget step for a single cell or arrays of cells.

    Returns (runoff_mm, (hp_new, ht_new), fluxes) where fluxes holds the
    internal terms: pn, en, ps, es, perc, pr, exchange, qt, qd.
    """
    args = [
        np.asarray(a, dtype=np.float64)
        for a in (cp, ct, kexc, hp, ht, precip, pet)
    ]
    q, hp2, ht2, inter = _py._cell_fwd_full(*args)
    fluxes = {
        "pn": inter["pn"], "en": inter["en"], "ps": inter["ps"],
        "es": inter["es"], "perc": inter["perc"], "pr": inter["pr"],
        "exchange": inter["f"], "qt": inter["qt"], "qd": inter["qd"],
    }
    return q, (hp2, ht2), fluxes


def route_step(mesh: Mesh, runoff, llr, hr, dt: float):
    """Route one step of per-cell runoff (mm) through the reservoir cascade.

    Returns (discharge m3/s per cell, new reservoir levels).
    """
    runoff = np.asarray(runoff, dtype=np.float64)
    hr = np.asarray(hr, dtype=np.float64)
    if runoff.shape != (mesh.n,) or hr.shape != (mesh.n,):
        raise ShapeMismatchError(
            f"runoff/state must have shape ({mesh.n},), got "
            f"{runoff.shape}/{hr.shape}"
        )
    alpha = release_fraction(llr, dt)
    hr_new, out, _ = _py._route_fwd(mesh.levels, mesh.down, alpha, hr, runoff)
    return out * mesh.cell_area * 1e-3 / dt, hr_new


def water_balance(mesh: Mesh, params: ParameterFields, forcings: ForcingSet,
                  initial_states=None) -> dict:
    """Accumulate the volumetric budget of a run (all terms in m3).

    residual = input + exchange_gain - evaporated - outflow - storage_change
    and closes to rounding; `relative_residual` is scaled by total input
    (or by storage change for a rain-free run).
    """
    _check_conformal(mesh, params, forcings)
    h0 = _states_array(params, initial_states)
    hp, ht, hr = h0[0].copy(), h0[1].copy(), h0[2].copy()
    nu = mesh.cell_area * 1e-3
    alpha = release_fraction(params.llr, forcings.dt)
    total_in = total_ev = total_out = total_exch = 0.0
    for t in range(forcings.nt):
        p = forcings.rain.step(t)
        e = forcings.pet.step(t)
        q, hp2, ht2, inter = _py._cell_fwd_full(
            params.cp, params.ct, params.kexc, hp, ht, p, e
        )
        clamp_t = inter["ht1"] - inter["zt"]
        clamp_d = inter["qd"] - (0.1 * inter["pr"] + inter["f"])
        total_exch += float(np.sum(2.0 * inter["f"] + clamp_t + clamp_d)) * nu
        total_in += float(np.sum(inter["pn"])) * nu
        total_ev += float(np.sum(inter["es"])) * nu
        hr, out, _ = _py._route_fwd(mesh.levels, mesh.down, alpha, hr, q)
        total_out += float(np.sum(out[mesh.outlets])) * nu
        hp, ht = hp2, ht2
    dstore = float(
        np.sum(hp - h0[0]) + np.sum(ht - h0[1]) + np.sum(hr - h0[2])
    ) * nu
    residual = total_in + total_exch - total_ev - total_out - dstore
    scale = max(abs(total_in), abs(dstore), 1e-30)
    return {
        "input": total_in,
        "evaporated": total_ev,
        "outflow": total_out,
        "exchange_gain": total_exch,
        "storage_change": dstore,
        "residual": residual,
        "relative_residual": abs(residual) / scale,
    }
