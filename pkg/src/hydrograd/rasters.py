"""ESRI ASCII grid reading and writing.

Header is six "key value" lines (ncols, nrows, xllcorner, yllcorner,
cellsize, NODATA_value) followed by nrows lines of ncols values, north row
first.  Values are written with repr-level precision so write/read
round-trips are bit-exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import RasterFormatError

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass
class RasterGrid:
    data: np.ndarray
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 1.0
    nodata: float = -9999.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise RasterFormatError(f"raster data must be 2-D, got {self.data.ndim}-D")

    @property
    def shape(self):
        return self.data.shape

    def mask(self) -> np.ndarray:
        """True where data is valid (not nodata, not NaN)."""
        return ~(np.isnan(self.data) | (self.data == self.nodata))

    def values(self) -> np.ndarray:
        """Data with nodata replaced by NaN."""
        out = self.data.copy()
        out[out == self.nodata] = np.nan
        return out


def read_raster(path) -> RasterGrid:
    with open(path, "r") as fh:
        lines = fh.read().split("\n")
    header = {}
    for k in range(6):
        if k >= len(lines):
            raise RasterFormatError(f"{path}: truncated header")
        parts = lines[k].split()
        if len(parts) != 2:
            raise RasterFormatError(f"{path}: bad header line {lines[k]!r}")
        header[parts[0].lower()] = parts[1]
    for key in _HEADER_KEYS:
        if key not in header:
            raise RasterFormatError(f"{path}: missing header entry {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    body = " ".join(lines[6:])
    try:
        flat = np.array(body.split(), dtype=np.float64)
    except ValueError as exc:
        raise RasterFormatError(f"{path}: non-numeric grid value ({exc})")
    if flat.size != nrows * ncols:
        raise RasterFormatError(
            f"{path}: expected {nrows * ncols} values, found {flat.size}"
        )
    return RasterGrid(
        data=flat.reshape(nrows, ncols),
        xllcorner=float(header["xllcorner"]),
        yllcorner=float(header["yllcorner"]),
        cellsize=float(header["cellsize"]),
        nodata=float(header["nodata_value"]),
    )


def write_raster(path, grid: RasterGrid) -> None:
    nrows, ncols = grid.shape
    with open(path, "w") as fh:
        fh.write(f"ncols {ncols}\n")
        fh.write(f"nrows {nrows}\n")
        fh.write(f"xllcorner {grid.xllcorner:.17g}\n")
        fh.write(f"yllcorner {grid.yllcorner:.17g}\n")
        fh.write(f"cellsize {grid.cellsize:.17g}\n")
        fh.write(f"NODATA_value {grid.nodata:.17g}\n")
        data = np.where(np.isnan(grid.data), grid.nodata, grid.data)
        for r in range(nrows):
            fh.write(" ".join(f"{v:.17g}" for v in data[r]))
            fh.write("\n")


def check_same_shape(grids, paths) -> None:
    """Raise if the rasters do not share shape and cellsize."""
    first = grids[0]
    for g, p in zip(grids[1:], paths[1:]):
        if g.shape != first.shape or g.cellsize != first.cellsize:
            raise RasterFormatError(
                f"{p}: grid {g.shape}/{g.cellsize} does not match "
                f"{paths[0]}: {first.shape}/{first.cellsize}"
            )
