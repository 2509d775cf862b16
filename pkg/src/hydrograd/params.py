"""Parameter fields and bound boxes shared by the model and the mappings.

The four calibrated fields, in fixed column order:

    cp    production store capacity (mm)
    ct    transfer store capacity (mm)
    kexc  exchange coefficient (mm per step, signed)
    llr   routing lag (minutes)
"""

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ShapeMismatchError

PARAM_NAMES = ("cp", "ct", "kexc", "llr")
N_PARAMS = 4

DEFAULT_BOUNDS = {
    "cp": (1e-6, 1000.0),
    "ct": (1e-6, 1000.0),
    "kexc": (-50.0, 50.0),
    "llr": (1e-6, 1000.0),
}


@dataclass
class BoundsSpec:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != (N_PARAMS,) or self.upper.shape != (N_PARAMS,):
            raise ShapeMismatchError(
                f"bounds must have {N_PARAMS} entries, got "
                f"{self.lower.shape}/{self.upper.shape}"
            )
        if not (self.lower < self.upper).all():
            k = int(np.nonzero(~(self.lower < self.upper))[0][0])
            raise BoundsError(
                f"bound for {PARAM_NAMES[k]}: lower {self.lower[k]} "
                f">= upper {self.upper[k]}"
            )

    @classmethod
    def default(cls) -> "BoundsSpec":
        lo = [DEFAULT_BOUNDS[k][0] for k in PARAM_NAMES]
        hi = [DEFAULT_BOUNDS[k][1] for k in PARAM_NAMES]
        return cls(lower=np.array(lo), upper=np.array(hi))

    @classmethod
    def from_dict(cls, d: dict) -> "BoundsSpec":
        lo, hi = [], []
        for k in PARAM_NAMES:
            pair = d.get(k, DEFAULT_BOUNDS[k])
            lo.append(pair[0])
            hi.append(pair[1])
        return cls(lower=np.array(lo), upper=np.array(hi))

    def check_inside(self, values: np.ndarray, what: str = "parameter") -> None:
        """Raise unless every value is strictly inside the open box."""
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        for k in range(N_PARAMS):
            col = values[:, k]
            if (col <= self.lower[k]).any() or (col >= self.upper[k]).any():
                bad = col[(col <= self.lower[k]) | (col >= self.upper[k])][0]
                raise BoundsError(
                    f"{what} {PARAM_NAMES[k]}={bad} outside open interval "
                    f"({self.lower[k]}, {self.upper[k]})"
                )

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass
class ParameterFields:
    """Per-cell values of the four fields, shape (n_cells, 4)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != N_PARAMS:
            raise ShapeMismatchError(
                f"parameter fields must be (n, {N_PARAMS}), got {self.values.shape}"
            )

    @classmethod
    def uniform(cls, n: int, theta) -> "ParameterFields":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (N_PARAMS,):
            raise ShapeMismatchError(f"theta must have {N_PARAMS} entries")
        return cls(values=np.tile(theta, (n, 1)))

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def cp(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def ct(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def kexc(self) -> np.ndarray:
        return self.values[:, 2]

    @property
    def llr(self) -> np.ndarray:
        return self.values[:, 3]
