"""Scalar fields on a uniform grid over the unit square.

A GridField samples f(x, y) at the nodes x_i = i/(nx-1), y_j = j/(ny-1).
Values are stored as a (ny, nx) float64 array, i.e. row-major with y outer
and x inner, which is also the on-disk ordering.  The module provides the
analytic conductivity phantoms, bilinear interpolation, relative L2 error
(optionally masked to a sub-rectangle), and plain-text file I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

__all__ = [
    "GridField",
    "MaskedField",
    "Constant",
    "FourMode",
    "DiscontinuousBump",
    "SheppLogan",
    "make_phantom",
    "grid_coords",
    "bilinear_sample",
    "bilinear_sample_many",
    "relative_l2_error",
    "subdomain_mask",
    "restrict_to_subdomain",
    "read_grid",
    "write_grid",
    "read_mask",
    "write_mask",
]


@dataclass(frozen=True)
class GridField:
    """Scalar field on the uniform (nx x ny)-node grid over [0,1]^2."""

    nx: int
    ny: int
    values: np.ndarray  # shape (ny, nx), float64

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.ny, self.nx):
            raise ValueError(f"values shape {v.shape} does not match ny={self.ny}, nx={self.nx}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must all be finite")
        object.__setattr__(self, "values", v)

    @property
    def hx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 1.0 / (self.ny - 1)

    def same_shape(self, other: "GridField") -> bool:
        return self.nx == other.nx and self.ny == other.ny


@dataclass(frozen=True)
class MaskedField:
    """A GridField together with a boolean node mask selecting a subdomain."""

    field: GridField
    mask: np.ndarray  # shape (ny, nx), bool

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.field.values.shape:
            raise ValueError("mask shape does not match field shape")
        object.__setattr__(self, "mask", m)


def grid_coords(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates as broadcastable arrays x (1, nx) and y (ny, 1)."""
    x = np.linspace(0.0, 1.0, nx)[None, :]
    y = np.linspace(0.0, 1.0, ny)[:, None]
    return x, y


# ---------------------------------------------------------------------------
# phantoms


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("constant conductivity must be positive")


@dataclass(frozen=True)
class FourMode:
    pass


@dataclass(frozen=True)
class DiscontinuousBump:
    pass


@dataclass(frozen=True)
class SheppLogan:
    pass


PhantomKind = Constant | FourMode | DiscontinuousBump | SheppLogan


def four_mode(x, y):
    """Smooth four-mode conductivity; x, y broadcastable arrays or scalars."""
    a = 2.0 * x - 1.0
    b = 2.0 * y - 1.0
    alpha = 0.3 * (1.0 - 3.0 * a) ** 2 * np.exp(-9.0 * a**2 - (3.0 * b + 1.0) ** 2)
    beta = (3.0 * a / 5.0 - 27.0 * a**3 - (3.0 * b) ** 5) * np.exp(-9.0 * a**2 - 9.0 * b**2)
    gamma = np.exp(-((3.0 * a + 1.0) ** 2) - 9.0 * b**2)
    return 1.1 + 0.3 * (alpha - beta - gamma)


def discontinuous_bump(x, y):
    """Unit background plus a truncated Gaussian bump on {x > 0.5}."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bump = np.exp(-2.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))
    return 1.0 + np.where(x > 0.5, bump, 0.0)


# Contrast-enhanced Shepp-Logan ellipse table (intensity, a, b, x0, y0, angle
# in degrees), the default table of the common imaging toolboxes.
_SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

_SHEPP_LOGAN_LO = 1.0
_SHEPP_LOGAN_HI = 1.8


def shepp_logan(x, y):
    """Shepp-Logan head phantom on [0,1]^2, rescaled to [1.0, 1.8].

    The raw ellipse sum ranges over [0, 1] (background 0, skull ring 1), so
    the affine rescaling is fixed rather than computed per grid.
    """
    xi = 2.0 * np.asarray(x, dtype=np.float64) - 1.0
    eta = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    total = np.zeros(np.broadcast(xi, eta).shape)
    for amp, a, b, x0, y0, deg in _SHEPP_LOGAN_ELLIPSES:
        phi = math.radians(deg)
        c, s = math.cos(phi), math.sin(phi)
        dx = xi - x0
        dy = eta - y0
        inside = ((dx * c + dy * s) / a) ** 2 + ((dy * c - dx * s) / b) ** 2 <= 1.0
        total = total + amp * inside
    return _SHEPP_LOGAN_LO + (_SHEPP_LOGAN_HI - _SHEPP_LOGAN_LO) * total


def make_phantom(kind: PhantomKind, nx: int, ny: int) -> GridField:
    """Evaluate a conductivity phantom at the grid nodes."""
    if nx < 2 or ny < 2:
        raise ValueError(f"grid must be at least 2x2, got {nx}x{ny}")
    x, y = grid_coords(nx, ny)
    if isinstance(kind, Constant):
        vals = np.full((ny, nx), float(kind.c))
    elif isinstance(kind, FourMode):
        vals = four_mode(x, y) * np.ones((ny, nx))
    elif isinstance(kind, DiscontinuousBump):
        vals = discontinuous_bump(x, y) * np.ones((ny, nx))
    elif isinstance(kind, SheppLogan):
        vals = shepp_logan(x, y) * np.ones((ny, nx))
    else:
        raise ValueError(f"unknown phantom kind: {kind!r}")
    return GridField(nx, ny, vals)


# ---------------------------------------------------------------------------
# interpolation and metrics


def bilinear_sample_many(f: GridField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of f at arrays of points inside [0,1]^2."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if np.any(xs < 0.0) or np.any(xs > 1.0) or np.any(ys < 0.0) or np.any(ys > 1.0):
        raise ValueError("sample point outside [0,1]^2")
    gx = xs * (f.nx - 1)
    gy = ys * (f.ny - 1)
    i0 = np.minimum(gx.astype(np.int64), f.nx - 2)
    j0 = np.minimum(gy.astype(np.int64), f.ny - 2)
    tx = gx - i0
    ty = gy - j0
    v = f.values
    return (
        v[j0, i0] * (1.0 - tx) * (1.0 - ty)
        + v[j0, i0 + 1] * tx * (1.0 - ty)
        + v[j0 + 1, i0] * (1.0 - tx) * ty
        + v[j0 + 1, i0 + 1] * tx * ty
    )


def bilinear_sample(f: GridField, x: float, y: float) -> float:
    """Bilinear interpolation at a single point; exact at nodes and on
    fields affine in (x, y)."""
    return float(bilinear_sample_many(f, np.asarray([x]), np.asarray([y]))[0])


def relative_l2_error(estimate: GridField, truth: GridField, mask: np.ndarray | None = None) -> float:
    """Discrete relative L2 error over grid nodes (masked nodes only if a
    mask is given)."""
    if not estimate.same_shape(truth):
        raise ValueError(
            f"shape mismatch: estimate {estimate.nx}x{estimate.ny} vs truth {truth.nx}x{truth.ny}"
        )
    diff = estimate.values - truth.values
    ref = truth.values
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != truth.values.shape:
            raise ValueError("mask shape does not match grid shape")
        diff = diff[mask]
        ref = ref[mask]
    denom = math.sqrt(float(np.sum(ref * ref)))
    if denom == 0.0:
        raise ValueError("truth field has zero norm")
    return math.sqrt(float(np.sum(diff * diff))) / denom


def subdomain_mask(nx: int, ny: int, rect: tuple[float, float, float, float]) -> np.ndarray:
    """Boolean node mask of the closed rectangle [x0,x1]x[y0,y1]."""
    x0, x1, y0, y1 = rect
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ValueError(f"degenerate or out-of-range rectangle: {rect}")
    x, y = grid_coords(nx, ny)
    return ((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)) * np.ones((ny, nx), dtype=bool)


def restrict_to_subdomain(f: GridField, rect: tuple[float, float, float, float]) -> MaskedField:
    """Attach to f the node mask of the closed rectangle rect."""
    return MaskedField(f, subdomain_mask(f.nx, f.ny, rect))


# ---------------------------------------------------------------------------
# file I/O
#
# Format: one header line `grid nx=<int> ny=<int>`, then nx*ny decimal values
# in row-major order (y outer, x inner), 17 significant digits.  Mask files
# use the header word `mask` and 0/1 values.


def _write_header_and_values(path, word: str, nx: int, ny: int, flat: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(f"{word} nx={nx} ny={ny}\n")
        for row in flat.reshape(ny, nx):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def write_grid(f: GridField, path) -> None:
    _write_header_and_values(path, "grid", f.nx, f.ny, f.values)


def write_mask(mask: np.ndarray, path) -> None:
    ny, nx = mask.shape
    _write_header_and_values(path, "mask", nx, ny, mask.astype(np.float64))


def _read_field_file(path, word: str) -> tuple[int, int, np.ndarray]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: line 1: empty file")
    parts = lines[0].split()
    if len(parts) != 3 or parts[0] != word or not parts[1].startswith("nx=") or not parts[2].startswith("ny="):
        raise FormatError(f"{path}: line 1: malformed header {lines[0]!r}")
    try:
        nx = int(parts[1][3:])
        ny = int(parts[2][3:])
    except ValueError as exc:
        raise FormatError(f"{path}: line 1: bad grid size in header") from exc
    if nx < 2 or ny < 2:
        raise FormatError(f"{path}: line 1: grid must be at least 2x2")
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for tok in line.split():
            try:
                v = float(tok)
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid value {tok!r}") from exc
            if not math.isfinite(v):
                raise FormatError(f"{path}: line {lineno}: non-finite value {tok!r}")
            values.append(v)
    if len(values) != nx * ny:
        raise FormatError(f"{path}: expected {nx * ny} values, found {len(values)}")
    return nx, ny, np.asarray(values).reshape(ny, nx)


def read_grid(path) -> GridField:
    nx, ny, vals = _read_field_file(path, "grid")
    return GridField(nx, ny, vals)


def read_mask(path) -> np.ndarray:
    _, _, vals = _read_field_file(path, "mask")
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise FormatError(f"{path}: mask values must be 0 or 1")
    return vals.astype(bool)
