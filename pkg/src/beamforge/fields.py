"""Sampled complex fields on uniform periodic grids, with GBF1 and CSV I/O.

Grid nodes along axis i are ``lower[i] + h[i] * arange(dims[i])``; the upper
corner is the periodic image of the lower one and is not a node.

GBF1 layout (little-endian): magic ``b"GBF1"``, int64 n_dims, int64 dims[n],
float64 lower[n], float64 upper[n], float64 time, float64 epsilon, then the
values as row-major complex128.
"""
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError

MAGIC = b"GBF1"


@dataclass
class SampledField:
    dims: tuple
    lower: np.ndarray
    upper: np.ndarray
    values: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if len(self.lower) != len(self.dims) or len(self.upper) != len(self.dims):
            raise ShapeError("box corners must match the number of dimensions")
        if any(d < 1 or d & (d - 1) for d in self.dims):
            raise ShapeError(f"grid sizes must be powers of two, got {self.dims}")
        if np.any(self.upper <= self.lower):
            raise ShapeError("box lengths must be positive")
        if self.values is None:
            self.values = np.zeros(self.dims, dtype=complex)
        else:
            self.values = np.asarray(self.values, dtype=complex)
            if self.values.shape != self.dims:
                raise ShapeError(f"values shape {self.values.shape} != dims {self.dims}")

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def spacing(self):
        return (self.upper - self.lower) / np.array(self.dims)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def axes(self):
        return [lo + h * np.arange(d) for lo, h, d in zip(self.lower, self.spacing, self.dims)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """Node coordinates, shape (*dims, n)."""
        return np.stack(self.mesh(), axis=-1)

    def wavenumbers(self):
        """Angular wavenumber arrays matching numpy's FFT layout."""
        return [2 * np.pi * np.fft.fftfreq(d, d=h) for d, h in zip(self.dims, self.spacing)]

    def same_geometry(self, other):
        return (self.dims == other.dims and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def check_geometry(self, other):
        if not self.same_geometry(other):
            raise ShapeError("field geometries differ")

    def like(self, values=None, **meta):
        """Same geometry, new values and merged metadata."""
        new_meta = dict(self.meta)
        new_meta.update(meta)
        vals = np.zeros(self.dims, dtype=complex) if values is None else values
        return replace(self, values=vals, meta=new_meta)


def grid_for_box(lower, upper, h_max):
    """Smallest power-of-two grid on the box with spacing <= h_max."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dims = []
    for lo, hi in zip(lower, upper):
        n = int(np.ceil((hi - lo) / h_max - 1e-9))
        dims.append(1 << max(int(np.ceil(np.log2(max(n, 1)))), 0))
    return SampledField(tuple(dims), lower, upper)


def write_gbf1(path, f):
    n = f.ndim
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<q", n))
        fh.write(struct.pack(f"<{n}q", *f.dims))
        fh.write(struct.pack(f"<{n}d", *f.lower))
        fh.write(struct.pack(f"<{n}d", *f.upper))
        fh.write(struct.pack("<2d", float(f.meta.get("time", 0.0)),
                             float(f.meta.get("epsilon", 0.0))))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def read_gbf1(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ShapeError(f"{path} is not a GBF1 file")
        (n,) = struct.unpack("<q", fh.read(8))
        dims = struct.unpack(f"<{n}q", fh.read(8 * n))
        lower = struct.unpack(f"<{n}d", fh.read(8 * n))
        upper = struct.unpack(f"<{n}d", fh.read(8 * n))
        time, eps = struct.unpack("<2d", fh.read(16))
        count = int(np.prod(dims))
        values = np.frombuffer(fh.read(16 * count), dtype="<c16")
    if values.size != count:
        raise ShapeError(f"{path} is truncated")
    return SampledField(dims, lower, upper, values.reshape(dims).astype(complex),
                        {"time": time, "epsilon": eps})


def write_csv(path, f):
    pts = f.points().reshape(-1, f.ndim)
    vals = f.values.reshape(-1)
    cols = [f"y{i + 1}" for i in range(f.ndim)] + ["re", "im"]
    data = np.column_stack([pts, vals.real, vals.imag])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def write_field(path, f, fmt="gbf1"):
    if fmt == "gbf1":
        write_gbf1(path, f)
    elif fmt == "csv":
        write_csv(path, f)
    else:
        raise ValueError(f"unknown field format {fmt!r}")
