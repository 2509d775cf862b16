"""Differentiable distributed rainfall-runoff modeling and regionalization.

Gridded conceptual hydrology on D8 meshes, exact discrete adjoint
gradients with checkpointed reverse sweeps, descriptor-to-parameter
mappings (uniform, bounded polynomial, neural), multi-gauge calibration,
and a twin-experiment harness.
"""

from . import adjoint, cost, driver, optimize, regio, twin
from .dataio import (
    DescriptorStack,
    ForcingRecord,
    ForcingSet,
    RunConfig,
    load_config,
    load_descriptors,
    load_forcings,
    load_gauges,
    load_observations,
    normalize_descriptors,
)
from .hydro import (
    available_backends,
    cell_step,
    default_initial_states,
    release_fraction,
    route_step,
    simulate,
    water_balance,
)
from .mesh import GaugeSet, Mesh, build_mesh, delineate
from .params import PARAM_NAMES, BoundsSpec, ParameterFields
from .rasters import RasterGrid, read_raster, write_raster
from .regio import (
    MlpControl,
    PolynomialControl,
    UniformControl,
    init_control,
    load_control,
    map_params,
    save_control,
    sigmoid_scale,
)
from .twin import TwinProblem, generate_twin

__version__ = "0.1.0"

__all__ = [
    "BoundsSpec",
    "DescriptorStack",
    "ForcingRecord",
    "ForcingSet",
    "GaugeSet",
    "Mesh",
    "MlpControl",
    "PARAM_NAMES",
    "ParameterFields",
    "PolynomialControl",
    "RasterGrid",
    "RunConfig",
    "TwinProblem",
    "UniformControl",
    "adjoint",
    "available_backends",
    "build_mesh",
    "cell_step",
    "cost",
    "default_initial_states",
    "delineate",
    "driver",
    "generate_twin",
    "init_control",
    "load_config",
    "load_control",
    "load_descriptors",
    "load_forcings",
    "load_gauges",
    "load_observations",
    "map_params",
    "normalize_descriptors",
    "optimize",
    "read_raster",
    "regio",
    "release_fraction",
    "route_step",
    "save_control",
    "sigmoid_scale",
    "simulate",
    "twin",
    "water_balance",
    "write_raster",
]
