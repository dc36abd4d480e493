"""Velocity-space discretization, Maxwellian, weights, norms and moments.

Everything downstream (collision quadrature, homogeneous solver, transport,
linearized scheme) lives on the truncated uniform cubic lattice built here.
The lattice is cell-centered with an even number of cells per axis, so the
node set is exactly symmetric under v -> -v and odd moments of even fields
vanish at the discrete level.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    """Invalid velocity-grid construction parameters."""


@dataclass(frozen=True)
class VelocityGrid:
    """Truncated uniform cubic lattice on [-v_max, v_max]^3.

    nodes are the cell centers, flattened row-major over (ix, iy, iz);
    cell_weight is the common quadrature weight (2 v_max / n_v)^3.
    """

    v_max: float
    n_v: int
    nodes: np.ndarray = field(repr=False)
    cell_weight: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def axis(self) -> np.ndarray:
        """1D array of per-axis cell-center coordinates."""
        h = self.spacing
        return -self.v_max + (np.arange(self.n_v) + 0.5) * h

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View a flat node array as (n_v, n_v, n_v)."""
        return np.asarray(values).reshape(self.n_v, self.n_v, self.n_v)


def build_grid(v_max: float, n_v: int) -> VelocityGrid:
    """Build the cell-centered velocity lattice.

    n_v must be even (>= 4) so the node set is point-symmetric; v_max > 0.
    """
    if v_max <= 0:
        raise GridError(f"v_max must be positive, got {v_max}")
    if n_v < 2 or n_v % 2 != 0:
        raise GridError(f"n_v must be even and >= 2, got {n_v}")
    h = 2.0 * v_max / n_v
    ax = -v_max + (np.arange(n_v) + 0.5) * h
    vx, vy, vz = np.meshgrid(ax, ax, ax, indexing="ij")
    nodes = np.stack([vx.ravel(), vy.ravel(), vz.ravel()], axis=1)
    return VelocityGrid(v_max=float(v_max), n_v=int(n_v), nodes=nodes,
                        cell_weight=float(h ** 3))


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Global Maxwellian (2 pi)^{-3/2} exp(-|v|^2 / 2), vectorized over rows."""
    v = np.asarray(v, dtype=float)
    sq = np.sum(v * v, axis=-1)
    return (TWO_PI) ** (-1.5) * np.exp(-0.5 * sq)


def weight(v: np.ndarray, l: float) -> np.ndarray:
    """Polynomial velocity weight <v>^l = (1 + |v|^2)^{l/2}."""
    if l < 0:
        raise ValueError(f"weight exponent must be >= 0, got {l}")
    v = np.asarray(v, dtype=float)
    sq = np.sum(v * v, axis=-1)
    return (1.0 + sq) ** (0.5 * l)


def bracket(v: np.ndarray) -> np.ndarray:
    """<v> = sqrt(1 + |v|^2)."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


@dataclass
class Field:
    """A density on (spatial nodes x) velocity nodes with a weight exponent.

    values has shape (n_vel,) for homogeneous data or (n_x, n_vel) for
    spatially resolved data; the velocity axis is always last.
    """

    grid: VelocityGrid
    values: np.ndarray
    l: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.grid.n_nodes:
            raise ValueError("last axis of values must match grid node count")

    @property
    def homogeneous(self) -> bool:
        return self.values.ndim == 1

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.l)


@dataclass
class Moments:
    mass: float
    momentum: np.ndarray
    energy: float
    angular_momentum: float | None = None


def maxwellian_field(grid: VelocityGrid, l: float = 0.0) -> Field:
    return Field(grid, maxwellian(grid.nodes), l)


def weighted_sup_norm(f: Field) -> float:
    """sup over all nodes of |w_l(v) f(., v)|; 0 for the zero field."""
    w = weight(f.grid.nodes, f.l)
    if f.values.size == 0:
        return 0.0
    return float(np.max(np.abs(f.values) * w))


def tail_mass(grid: VelocityGrid) -> float:
    """Mass of mu lost to the velocity truncation, 1 - discrete mass of mu.

    Reported as a truncation-quality diagnostic; the continuous problem lives
    on all of R^3.
    """
    mu = maxwellian(grid.nodes)
    return float(1.0 - grid.cell_weight * mu.sum())


class NoAxisError(ValueError):
    """Angular momentum requested for a domain without a rotation axis."""


def moments(f: Field, domain=None, spatial_weight: float | None = None) -> Moments:
    """Quadrature moments of f against {1, v, |v|^2} and, with an axis,
    the angular-momentum functional ((x - x0) x varpi) . v.

    For spatially resolved fields the moments are spatial averages (total
    divided by the discrete domain volume), so f = mu gives mass 1 either way.
    """
    g = f.grid
    w = g.cell_weight
    vals = f.values
    nodes = g.nodes
    if vals.ndim == 1:
        mass = w * vals.sum()
        mom = w * vals @ nodes
        energy = w * vals @ np.sum(nodes * nodes, axis=1)
        ang = None
        if domain is not None and getattr(domain, "axis", None) is not None:
            raise NoAxisError(
                "angular momentum of a velocity-only field needs spatial data")
        return Moments(float(mass), mom, float(energy), ang)

    n_x = vals.shape[0]
    vol = n_x * (spatial_weight if spatial_weight is not None else 1.0)
    col = vals.sum(axis=0) * (spatial_weight if spatial_weight is not None else 1.0)
    mass = w * col.sum() / vol
    mom = w * (col @ nodes) / vol
    energy = w * (col @ np.sum(nodes * nodes, axis=1)) / vol
    ang = None
    if domain is not None:
        if getattr(domain, "axis", None) is None:
            raise NoAxisError("domain has no rotation axis (x0, varpi)")
        x0, varpi = domain.axis
        xs = domain.spatial_nodes  # (n_x, 3), set by the phase grid
        lever = np.cross(xs - x0, varpi)  # (n_x, 3)
        sw = spatial_weight if spatial_weight is not None else 1.0
        ang = float(w * sw * np.einsum("xv,xd,vd->", vals, lever, nodes) / vol)
    return Moments(float(mass), mom, float(energy), ang)


# ---------------------------------------------------------------------------
# Field snapshots: flat binary (header + row-major float64) and CSV.

_MAGIC = b"BBOXFLD1"


def save_field(f: Field, path) -> None:
    shape = f.values.shape
    spatial = shape[:-1]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<dIdI", f.grid.v_max, f.grid.n_v, f.l, len(spatial)))
        for s in spatial:
            fh.write(struct.pack("<I", s))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError("not a field snapshot")
        v_max, n_v, l, ndim = struct.unpack("<dIdI", fh.read(24))
        spatial = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
        grid = build_grid(v_max, n_v)
        data = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    return Field(grid, data.reshape(spatial + (grid.n_nodes,)), l)


def field_to_csv(f: Field) -> str:
    """CSV dump (vx, vy, vz, value...) for small grids."""
    buf = io.StringIO()
    vals = np.atleast_2d(f.values)
    buf.write("vx,vy,vz," + ",".join(f"f{i}" for i in range(vals.shape[0])) + "\n")
    for j, v in enumerate(f.grid.nodes):
        row = ",".join(repr(float(x)) for x in vals[:, j])
        buf.write(f"{v[0]!r},{v[1]!r},{v[2]!r},{row}\n")
    return buf.getvalue()
