"""Cost gradients with respect to the parameter fields.

grad_theta runs one forward simulation with checkpointing and one reverse
sweep, returning the exact gradient of the multi-gauge cost for every
parameter at every cell.  fd_gradient is the central-difference oracle used
to verify it.  chain_to_control pulls the field gradient back through a
regionalization mapping.

When initial states follow the default 1%-of-capacity rule they depend on
cp and ct, and the gradient includes that dependency.
"""

import math

import numpy as np

from .cost import multi_gauge_cost
from .dataio import ForcingSet
from .errors import NonFiniteGradientError, StepOutOfBoundsError
from .hydro import (
    release_fraction,
    release_fraction_derivative,
    simulate,
)
from .hydro.backend import get_backend
from .mesh import Mesh
from .params import N_PARAMS, BoundsSpec, ParameterFields
from .regio import vjp


def default_checkpoint_interval(nt: int) -> int:
    return max(1, math.isqrt(nt))


def cost_at(mesh: Mesh, params: ParameterFields, forcings: ForcingSet,
            gauge_cells, obs, weights, window=None, initial_states=None,
            backend=None) -> float:
    """Cost only; one forward run without checkpoint storage."""
    res = simulate(
        mesh, params, forcings, record_cells=gauge_cells,
        initial_states=initial_states, backend=backend,
    )
    return multi_gauge_cost(res.discharge, obs, weights, window)


def grad_theta(mesh: Mesh, params: ParameterFields, forcings: ForcingSet,
               gauge_cells, obs, weights, window=None, initial_states=None,
               ckpt_every=None, backend=None):
    """Cost and its exact gradient over the parameter fields.

    Returns (cost, gradient (n_cells, 4), simulated (nt, n_gauges)).
    """
    gauge_cells = np.asarray(gauge_cells, dtype=np.int64)
    if ckpt_every is None:
        ckpt_every = default_checkpoint_interval(forcings.nt)
    res = simulate(
        mesh, params, forcings, record_cells=gauge_cells,
        initial_states=initial_states, ckpt_every=ckpt_every, backend=backend,
    )
    cost, seed = multi_gauge_cost(
        res.discharge, obs, weights, window, return_seed=True
    )
    kern = get_backend(backend)
    nu_dt = mesh.cell_area * 1e-3 / forcings.dt
    alpha = release_fraction(params.llr, forcings.dt)
    gcp, gct, gke, galpha, hphat0, hthat0, _ = kern.adjoint(
        mesh.order, mesh.down, mesh.levels,
        params.cp.copy(), params.ct.copy(), params.kexc.copy(), alpha,
        forcings.rain.step_row, forcings.rain.data,
        forcings.pet.step_row, forcings.pet.data,
        res.checkpoints, int(ckpt_every), forcings.nt, nu_dt,
        gauge_cells, seed,
    )
    gllr = galpha * release_fraction_derivative(params.llr, forcings.dt)
    if initial_states is None:
        # default initial stores are 0.01*cp and 0.01*ct
        gcp = gcp + 0.01 * hphat0
        gct = gct + 0.01 * hthat0
    grad = np.stack([gcp, gct, gke, gllr], axis=1)
    if not np.isfinite(cost) or not np.isfinite(grad).all():
        raise NonFiniteGradientError("non-finite cost or gradient")
    return cost, grad, res.discharge


def fd_gradient(mesh: Mesh, params: ParameterFields, forcings: ForcingSet,
                gauge_cells, obs, weights, h, window=None,
                initial_states=None, components=None, bounds=None,
                backend=None):
    """Central-difference gradient oracle.

    h: scalar or per-parameter (4,) step.  components: iterable of
    (cell, param index) pairs to probe; None probes everything (test scale
    only).  Probes leaving the open bound box raise StepOutOfBounds.
    """
    if bounds is None:
        bounds = BoundsSpec.default()
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (N_PARAMS,))
    if components is None:
        components = [
            (c, k) for c in range(params.n_cells) for k in range(N_PARAMS)
        ]
        out_shape = (params.n_cells, N_PARAMS)
    else:
        components = [(int(c), int(k)) for c, k in components]
        out_shape = None

    def evaluate(values):
        return cost_at(
            mesh, ParameterFields(values=values), forcings, gauge_cells,
            obs, weights, window=window, initial_states=initial_states,
            backend=backend,
        )

    grads = np.empty(len(components))
    for i, (c, k) in enumerate(components):
        step = h[k]
        v0 = params.values[c, k]
        if v0 - step <= bounds.lower[k] or v0 + step >= bounds.upper[k]:
            raise StepOutOfBoundsError(
                f"probe {v0} +- {step} leaves open interval "
                f"({bounds.lower[k]}, {bounds.upper[k]}) for component "
                f"(cell {c}, field {k})"
            )
        plus = params.values.copy()
        plus[c, k] = v0 + step
        minus = params.values.copy()
        minus[c, k] = v0 - step
        grads[i] = (evaluate(plus) - evaluate(minus)) / (2.0 * step)
    if out_shape is not None:
        return grads.reshape(out_shape)
    return grads


def chain_to_control(control, dmat, bounds: BoundsSpec, grad_fields):
    """Pull dJ/dtheta back to the regional control: dJ/drho = vjp(dJ/dtheta)."""
    return vjp(control, dmat, bounds, grad_fields)
