"""Descriptor-to-parameter mappings and their vector-Jacobian products.

Three mapping families share one interface:

    uniform      one value per parameter, broadcast over cells
    polynomial   theta_k(x) = s_k(a_k0 + sum_d a_kd * D_d(x)^b_kd), with a
                 linear mode pinning every exponent b to 1
    mlp          per-cell multilayer perceptron, ReLU hidden layers, sigmoid
                 output scaled into the bound box

s_k is the sigmoid scaling into (l_k, u_k).  Mapped values stay strictly
inside the open box: the sigmoid output is clipped to [1e-15, 1 - 1e-13]
before scaling (derivatives use the unclipped sigmoid).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (
    BackgroundOutOfBoundsError,
    BoundsError,
    ConfigError,
    NegativeBaseError,
    ShapeMismatchError,
    WideHiddenLayerWarning,
)
from .params import N_PARAMS, PARAM_NAMES, BoundsSpec, ParameterFields

SIGMOID_CLIP_LO = 1e-15
SIGMOID_CLIP_HI = 1.0 - 1e-13


# --------------------------------------------------------------------------
# sigmoid scaling
# --------------------------------------------------------------------------

def sigmoid_scale(z, lower, upper):
    """l + (u - l)/(1 + exp(-z)), clipped to stay strictly inside (l, u)."""
    s = np.clip(expit(z), SIGMOID_CLIP_LO, SIGMOID_CLIP_HI)
    return lower + (upper - lower) * s


def sigmoid_scale_derivative(z, lower, upper):
    """d(sigmoid_scale)/dz using the unclipped sigmoid."""
    s = expit(z)
    return (upper - lower) * s * (1.0 - s)


def inverse_sigmoid_scale(y, lower, upper):
    """z such that sigmoid_scale(z) = y; requires l < y < u."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= lower) or np.any(y >= upper):
        raise BoundsError(
            f"value {y} not strictly inside ({lower}, {upper}); cannot invert"
        )
    return np.log((y - lower) / (upper - y))


# --------------------------------------------------------------------------
# control containers
# --------------------------------------------------------------------------

@dataclass
class UniformControl:
    """One value per parameter, broadcast to every cell."""

    theta: np.ndarray

    kind = "uniform"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (N_PARAMS,):
            raise ShapeMismatchError(
                f"uniform control needs {N_PARAMS} values, got {self.theta.shape}"
            )

    @property
    def n_params(self) -> int:
        return N_PARAMS

    def to_vector(self) -> np.ndarray:
        return self.theta.copy()

    def from_vector(self, vec) -> "UniformControl":
        return UniformControl(theta=np.asarray(vec, dtype=np.float64).copy())


@dataclass
class PolynomialControl:
    """Coefficients of the bounded multivariate polynomial mapping.

    alpha0: (4,) intercepts; alpha, beta: (4, n_desc).  linear_mode pins
    beta to ones and removes it from the optimization vector.
    """

    alpha0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    linear_mode: bool = True

    @property
    def kind(self) -> str:
        return "multilinear" if self.linear_mode else "multipolynomial"

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha0.shape != (N_PARAMS,) or self.alpha.ndim != 2 \
                or self.alpha.shape[0] != N_PARAMS \
                or self.beta.shape != self.alpha.shape:
            raise ShapeMismatchError(
                f"polynomial control shapes {self.alpha0.shape}/"
                f"{self.alpha.shape}/{self.beta.shape} inconsistent"
            )
        if self.linear_mode and not np.all(self.beta == 1.0):
            raise ShapeMismatchError("linear mode requires every exponent = 1")

    @property
    def n_desc(self) -> int:
        return self.alpha.shape[1]

    @property
    def n_params(self) -> int:
        per_k = 1 + self.n_desc * (1 if self.linear_mode else 2)
        return N_PARAMS * per_k

    def to_vector(self) -> np.ndarray:
        blocks = []
        for k in range(N_PARAMS):
            blocks.append([self.alpha0[k]])
            blocks.append(self.alpha[k])
            if not self.linear_mode:
                blocks.append(self.beta[k])
        return np.concatenate(blocks)

    def from_vector(self, vec) -> "PolynomialControl":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ShapeMismatchError(
                f"vector of {vec.size} values for control of {self.n_params}"
            )
        nd = self.n_desc
        alpha0 = np.empty(N_PARAMS)
        alpha = np.empty((N_PARAMS, nd))
        beta = np.ones((N_PARAMS, nd))
        pos = 0
        for k in range(N_PARAMS):
            alpha0[k] = vec[pos]
            pos += 1
            alpha[k] = vec[pos:pos + nd]
            pos += nd
            if not self.linear_mode:
                beta[k] = vec[pos:pos + nd]
                pos += nd
        return PolynomialControl(
            alpha0=alpha0, alpha=alpha, beta=beta, linear_mode=self.linear_mode
        )

    def vector_bounds(self) -> list:
        """(low, high) per vector entry: alphas free, betas in [0.5, 2]."""
        out = []
        for _ in range(N_PARAMS):
            out.append((None, None))
            out.extend([(None, None)] * self.n_desc)
            if not self.linear_mode:
                out.extend([(0.5, 2.0)] * self.n_desc)
        return out


@dataclass
class MlpControl:
    """Weights and biases of the per-cell multilayer perceptron."""

    weights: list
    biases: list

    kind = "mlp"

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatchError("need matching weight/bias lists")
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatchError(
                    f"layer {j}: weight {w.shape} incompatible with bias {b.shape}"
                )
            if j > 0 and w.shape[1] != self.weights[j - 1].shape[0]:
                raise ShapeMismatchError(
                    f"layer {j}: fan-in {w.shape[1]} does not match previous "
                    f"width {self.weights[j - 1].shape[0]}"
                )
        if self.weights[-1].shape[0] != N_PARAMS:
            raise ShapeMismatchError(
                f"output layer width {self.weights[-1].shape[0]}, "
                f"need {N_PARAMS}"
            )

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def layer_param_counts(self) -> tuple:
        return tuple(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def n_params(self) -> int:
        return sum(self.layer_param_counts)

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def from_vector(self, vec) -> "MlpControl":
        weights, biases = self.unflatten(vec)
        return MlpControl(weights=weights, biases=biases)

    def unflatten(self, vec):
        """Split a flat vector back into per-layer (weights, biases) lists."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ShapeMismatchError(
                f"vector of {vec.size} values for control of {self.n_params}"
            )
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(vec[pos:pos + b.size].copy())
            pos += b.size
        return weights, biases


# --------------------------------------------------------------------------
# forward mappings
# --------------------------------------------------------------------------

def _check_dmat(dmat) -> np.ndarray:
    dmat = np.asarray(dmat, dtype=np.float64)
    if dmat.ndim != 2:
        raise ShapeMismatchError("descriptor matrix must be (n_cells, n_desc)")
    if (dmat < 0).any():
        raise NegativeBaseError(
            "descriptors must be normalized to [0, 1] before mapping "
            "(negative base under fractional exponent)"
        )
    return dmat


def _power(dmat, beta):
    """D^beta per (parameter, descriptor) pair; shape (n, 4, n_desc)."""
    return dmat[:, None, :] ** beta[None, :, :]


def map_polynomial(dmat, control: PolynomialControl,
                   bounds: BoundsSpec) -> ParameterFields:
    dmat = _check_dmat(dmat)
    if dmat.shape[1] != control.n_desc:
        raise ShapeMismatchError(
            f"{dmat.shape[1]} descriptors for control with {control.n_desc}"
        )
    z = control.alpha0[None, :] + np.einsum(
        "kd,nkd->nk", control.alpha, _power(dmat, control.beta)
    )
    theta = sigmoid_scale(z, bounds.lower[None, :], bounds.upper[None, :])
    return ParameterFields(values=theta)


def _mlp_forward(control: MlpControl, dmat):
    """Hidden activations and output pre-activation; acts[0] is the input."""
    acts = [dmat]
    a = dmat
    for w, b in zip(control.weights[:-1], control.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
        acts.append(a)
    z_out = a @ control.weights[-1].T + control.biases[-1]
    return acts, z_out


def map_mlp(dmat, control: MlpControl, bounds: BoundsSpec) -> ParameterFields:
    dmat = _check_dmat(dmat)
    if dmat.shape[1] != control.layer_sizes[0]:
        raise ShapeMismatchError(
            f"{dmat.shape[1]} descriptors for net expecting "
            f"{control.layer_sizes[0]}"
        )
    _, z_out = _mlp_forward(control, dmat)
    out = np.clip(expit(z_out), SIGMOID_CLIP_LO, SIGMOID_CLIP_HI)
    theta = bounds.lower[None, :] + (bounds.upper - bounds.lower)[None, :] * out
    return ParameterFields(values=theta)


def map_params(control, dmat, bounds: BoundsSpec, n_cells=None) -> ParameterFields:
    """Evaluate any control kind into per-cell parameter fields."""
    if isinstance(control, UniformControl):
        if n_cells is None:
            if dmat is None:
                raise ShapeMismatchError(
                    "uniform mapping needs n_cells or a descriptor matrix"
                )
            n_cells = np.asarray(dmat).shape[0]
        bounds.check_inside(control.theta[None, :], what="uniform control")
        return ParameterFields.uniform(n_cells, control.theta)
    if isinstance(control, PolynomialControl):
        return map_polynomial(dmat, control, bounds)
    if isinstance(control, MlpControl):
        return map_mlp(dmat, control, bounds)
    raise ShapeMismatchError(f"unknown control type {type(control).__name__}")


# --------------------------------------------------------------------------
# vector-Jacobian products
# --------------------------------------------------------------------------

def vjp(control, dmat, bounds: BoundsSpec, grad_theta) -> np.ndarray:
    """Pull a (n_cells, 4) cost gradient back to the control vector.

    The result is aligned with control.to_vector().
    """
    grad_theta = np.asarray(grad_theta, dtype=np.float64)
    if isinstance(control, UniformControl):
        return grad_theta.sum(axis=0)

    if isinstance(control, PolynomialControl):
        dmat = _check_dmat(dmat)
        powers = _power(dmat, control.beta)
        z = control.alpha0[None, :] + np.einsum("kd,nkd->nk", control.alpha, powers)
        zhat = grad_theta * sigmoid_scale_derivative(
            z, bounds.lower[None, :], bounds.upper[None, :]
        )
        galpha0 = zhat.sum(axis=0)
        galpha = np.einsum("nk,nkd->kd", zhat, powers)
        blocks = []
        if control.linear_mode:
            for k in range(N_PARAMS):
                blocks.append([galpha0[k]])
                blocks.append(galpha[k])
        else:
            # d(D^b)/db = D^b * ln D, extended by 0 at D = 0
            logd = np.where(dmat > 0.0, np.log(np.where(dmat > 0.0, dmat, 1.0)), 0.0)
            gbeta = np.einsum(
                "nk,kd,nkd,nd->kd", zhat, control.alpha, powers, logd
            )
            for k in range(N_PARAMS):
                blocks.append([galpha0[k]])
                blocks.append(galpha[k])
                blocks.append(gbeta[k])
        return np.concatenate(blocks)

    if isinstance(control, MlpControl):
        dmat = _check_dmat(dmat)
        acts, z_out = _mlp_forward(control, dmat)
        sig = expit(z_out)
        dz = grad_theta * (bounds.upper - bounds.lower)[None, :] * sig * (1.0 - sig)
        n_layers = len(control.weights)
        gw = [None] * n_layers
        gb = [None] * n_layers
        gw[-1] = dz.T @ acts[-1]
        gb[-1] = dz.sum(axis=0)
        da = dz @ control.weights[-1]
        for j in range(n_layers - 2, -1, -1):
            dzj = da * (acts[j + 1] > 0.0)
            gw[j] = dzj.T @ acts[j]
            gb[j] = dzj.sum(axis=0)
            da = dzj @ control.weights[j]
        parts = []
        for w, b in zip(gw, gb):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    raise ShapeMismatchError(f"unknown control type {type(control).__name__}")


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------

def check_hidden_widths(hidden, n_desc: int, n_cells: int,
                        allow_wide: bool = False) -> None:
    """Enforce the hidden-width guideline sqrt(n_desc * n_cells)."""
    limit = np.sqrt(n_desc * n_cells)
    wide = [h for h in hidden if h > limit]
    if not wide:
        return
    msg = (
        f"hidden widths {wide} exceed sqrt({n_desc}*{n_cells}) = {limit:.1f}"
    )
    if allow_wide:
        warnings.warn(msg + " (override enabled)", WideHiddenLayerWarning)
    else:
        raise ConfigError(msg + "; set allow_wide_hidden to override")


def xavier_init(layer_sizes, seed) -> MlpControl:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpControl(weights=weights, biases=biases)


def init_control(kind: str, n_desc: int, bounds: BoundsSpec, background=None,
                 seed: int = 0, hidden=(96, 48, 16), n_cells=None,
                 allow_wide_hidden: bool = False):
    """Build the starting control for an optimization.

    background is a spatially uniform parameter set (defaults to the bound
    midpoints); the polynomial init reproduces it exactly through the
    mapping, the uniform init starts at it.
    """
    if background is None:
        background = bounds.midpoint()
    background = np.asarray(background, dtype=np.float64)
    if background.shape != (N_PARAMS,):
        raise ShapeMismatchError(f"background must have {N_PARAMS} entries")
    if (background <= bounds.lower).any() or (background >= bounds.upper).any():
        k = int(
            np.nonzero(
                (background <= bounds.lower) | (background >= bounds.upper)
            )[0][0]
        )
        raise BackgroundOutOfBoundsError(
            f"background {PARAM_NAMES[k]}={background[k]} outside "
            f"({bounds.lower[k]}, {bounds.upper[k]})"
        )

    if kind == "uniform":
        return UniformControl(theta=background.copy())
    if kind in ("multilinear", "multipolynomial"):
        alpha0 = inverse_sigmoid_scale(background, bounds.lower, bounds.upper)
        return PolynomialControl(
            alpha0=alpha0,
            alpha=np.zeros((N_PARAMS, n_desc)),
            beta=np.ones((N_PARAMS, n_desc)),
            linear_mode=(kind == "multilinear"),
        )
    if kind == "mlp":
        if n_cells is not None:
            check_hidden_widths(hidden, n_desc, n_cells, allow_wide_hidden)
        sizes = (n_desc,) + tuple(hidden) + (N_PARAMS,)
        return xavier_init(sizes, seed)
    raise ConfigError(f"unknown mapping kind {kind!r}")


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def save_control(path, control) -> None:
    """Flat text serialization, exact round-trip at 17 significant digits."""
    def write_array(fh, name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        fh.write(f"array {name} {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    with open(path, "w") as fh:
        fh.write("hydrograd-control v1\n")
        fh.write(f"kind {control.kind}\n")
        if isinstance(control, UniformControl):
            write_array(fh, "theta", control.theta)
        elif isinstance(control, PolynomialControl):
            fh.write(f"linear_mode {int(control.linear_mode)}\n")
            write_array(fh, "alpha0", control.alpha0)
            write_array(fh, "alpha", control.alpha)
            write_array(fh, "beta", control.beta)
        elif isinstance(control, MlpControl):
            for j, (w, b) in enumerate(zip(control.weights, control.biases)):
                write_array(fh, f"W{j}", w)
                write_array(fh, f"b{j}", b)
        else:
            raise ShapeMismatchError(
                f"unknown control type {type(control).__name__}"
            )


def load_control(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "hydrograd-control v1":
        raise ConfigError(f"{path}: not a control file")
    if not lines[1].startswith("kind "):
        raise ConfigError(f"{path}: missing kind line")
    kind = lines[1].split(None, 1)[1]
    pos = 2
    flags = {}
    arrays = {}
    while pos < len(lines):
        ln = lines[pos]
        if not ln.strip():
            pos += 1
            continue
        if ln.startswith("array "):
            _, name, nr, nc = ln.split()
            nr, nc = int(nr), int(nc)
            rows = []
            for r in range(nr):
                rows.append(
                    np.array(lines[pos + 1 + r].split(), dtype=np.float64)
                )
                if rows[-1].size != nc:
                    raise ConfigError(f"{path}: array {name} row {r} wrong width")
            arrays[name] = np.vstack(rows)
            pos += 1 + nr
        else:
            key, val = ln.split(None, 1)
            flags[key] = val
            pos += 1

    if kind == "uniform":
        return UniformControl(theta=arrays["theta"][0])
    if kind in ("multilinear", "multipolynomial"):
        return PolynomialControl(
            alpha0=arrays["alpha0"][0],
            alpha=arrays["alpha"],
            beta=arrays["beta"],
            linear_mode=bool(int(flags.get("linear_mode", "1"))),
        )
    if kind == "mlp":
        weights, biases = [], []
        j = 0
        while f"W{j}" in arrays:
            weights.append(arrays[f"W{j}"])
            biases.append(arrays[f"b{j}"][0])
            j += 1
        return MlpControl(weights=weights, biases=biases)
    raise ConfigError(f"{path}: unknown control kind {kind!r}")
