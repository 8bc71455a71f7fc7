"""Relaxed weighted least-gradient loss and its Monte Carlo / quadrature forms.

The population objective is

    area * E[a(X) psi(|grad u(X)|)] + gamma * perimeter * E[a(Y) psi(|u(Y) - g(Y)|)]

with X uniform over the domain (or a sub-rectangle for partial interior
data), Y uniform over the full boundary, and psi the Huber smoothing of the
absolute value with knee zeta.  The empirical loss replaces both
expectations by fixed sample batches; the quadrature variant uses midpoint
rules and serves as the sampling-free oracle.  Data values a at sample
points come from bilinear interpolation of the data grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network
from .field import GridField, bilinear_sample_many
from .forward import DirichletData
from .rng import Rng

__all__ = [
    "LossConfig",
    "SampleBatch",
    "sample_interior",
    "sample_boundary",
    "assemble_batch",
    "huber",
    "empirical_loss",
    "empirical_loss_partial",
    "loss_value_and_grad",
    "quadrature_loss",
    "mc_standard_error",
]

Rect = tuple[float, float, float, float]


@dataclass(frozen=True)
class LossConfig:
    """Boundary weight gamma, Huber knee zeta, and the measure constants."""

    gamma: float
    zeta: float
    area: float = 1.0
    perimeter: float = 4.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError("gamma must be positive and finite")
        if not (np.isfinite(self.zeta) and self.zeta > 0.0):
            raise ValueError("zeta must be positive and finite")


@dataclass(frozen=True)
class SampleBatch:
    """Interior points with a-values, boundary points with a- and g-values."""

    interior: np.ndarray  # (n1, 2)
    a_interior: np.ndarray  # (n1,)
    boundary: np.ndarray  # (n2, 2)
    a_boundary: np.ndarray  # (n2,)
    g_boundary: np.ndarray  # (n2,)


def sample_interior(n1: int, seed: int, subdomain: Rect | None = None) -> np.ndarray:
    """n1 i.i.d. uniform points strictly inside the unit square (or inside
    the given sub-rectangle)."""
    if n1 < 1:
        raise ValueError("n1 must be at least 1")
    rng = Rng(seed)
    u = rng.uniform_open(n1)
    v = rng.uniform_open(n1)
    if subdomain is None:
        return np.column_stack([u, v])
    x0, x1, y0, y1 = subdomain
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ValueError(f"degenerate or out-of-range rectangle: {subdomain}")
    return np.column_stack([x0 + (x1 - x0) * u, y0 + (y1 - y0) * v])


def sample_boundary(n2: int, seed: int) -> np.ndarray:
    """n2 i.i.d. points uniform over the perimeter; every point lies exactly
    on one edge (one coordinate is 0.0 or 1.0)."""
    if n2 < 1:
        raise ValueError("n2 must be at least 1")
    rng = Rng(seed)
    edge = np.minimum((rng.uniform(n2) * 4.0).astype(np.int64), 3)
    t = rng.uniform(n2)
    pts = np.empty((n2, 2))
    bottom, right, top, left = edge == 0, edge == 1, edge == 2, edge == 3
    pts[bottom] = np.column_stack([t[bottom], np.zeros(bottom.sum())])
    pts[right] = np.column_stack([np.ones(right.sum()), t[right]])
    pts[top] = np.column_stack([t[top], np.ones(top.sum())])
    pts[left] = np.column_stack([np.zeros(left.sum()), t[left]])
    return pts


def assemble_batch(a: GridField, g: DirichletData, n1: int, n2: int, seed: int,
                   subdomain: Rect | None = None) -> SampleBatch:
    """Draw the training batch and attach interpolated data values.

    Interior points come first in the seed's stream, then boundary points,
    so the batch is a pure function of (seed, n1, n2, subdomain).
    """
    interior = sample_interior(n1, seed, subdomain)
    boundary = sample_boundary(n2, seed + 1)
    a_int = bilinear_sample_many(a, interior[:, 0], interior[:, 1])
    a_bdy = bilinear_sample_many(a, boundary[:, 0], boundary[:, 1])
    g_bdy = g(boundary[:, 0], boundary[:, 1])
    return SampleBatch(interior, a_int, boundary, a_bdy, g_bdy)


def huber(t: float, zeta: float) -> float:
    """psi(t) for t >= 0: t above the knee, quadratic below, C^1 at zeta."""
    if t < 0.0:
        raise ValueError("huber expects a nonnegative argument")
    if not zeta > 0.0:
        raise ValueError("zeta must be positive")
    return t if t >= zeta else t * t / (2.0 * zeta) + zeta / 2.0


def _loss_terms(tape: ad.Tape, spec: network.MlpSpec, theta_var: ad.Var,
                batch: SampleBatch, cfg: LossConfig) -> tuple[ad.Var, ad.Var]:
    if batch.interior.shape[0] < 1 or batch.boundary.shape[0] < 1:
        raise ValueError("batch must contain interior and boundary samples")
    if np.any(batch.a_interior < 0.0) or np.any(batch.a_boundary < 0.0):
        raise ValueError("data values a must be nonnegative")
    n1 = batch.interior.shape[0]
    n2 = batch.boundary.shape[0]
    _, gx, gy = network.forward_batch(tape, spec, theta_var, batch.interior, with_gradient=True)
    grad_mag = ad.huber_sqrt(ad.square(gx) + ad.square(gy), cfg.zeta)
    interior = ad.asum(batch.a_interior * grad_mag) * (cfg.area / n1)
    u_bdy = network.forward_batch(tape, spec, theta_var, batch.boundary)
    mismatch = ad.abs_smooth(u_bdy - batch.g_boundary, cfg.zeta)
    boundary = ad.asum(batch.a_boundary * mismatch) * (cfg.gamma * cfg.perimeter / n2)
    return interior, boundary


def empirical_loss(tape: ad.Tape, spec: network.MlpSpec, theta_var: ad.Var,
                   batch: SampleBatch, cfg: LossConfig) -> ad.Var:
    """Tape-recorded empirical loss of u_theta over the batch."""
    interior, boundary = _loss_terms(tape, spec, theta_var, batch, cfg)
    return interior + boundary


def empirical_loss_partial(tape: ad.Tape, spec: network.MlpSpec, theta_var: ad.Var,
                           batch: SampleBatch, cfg: LossConfig, subdomain: Rect) -> ad.Var:
    """Partial-interior-data loss: same structure with interior samples drawn
    from the sub-rectangle and cfg.area equal to its area; the boundary term
    is unchanged (full boundary)."""
    x0, x1, y0, y1 = subdomain
    area = (x1 - x0) * (y1 - y0)
    if abs(cfg.area - area) > 1e-12 * max(area, 1.0):
        raise ValueError(f"cfg.area={cfg.area} does not match the rectangle area {area}")
    xs, ys = batch.interior[:, 0], batch.interior[:, 1]
    if np.any(xs < x0) or np.any(xs > x1) or np.any(ys < y0) or np.any(ys > y1):
        raise ValueError("interior samples fall outside the subdomain")
    return empirical_loss(tape, spec, theta_var, batch, cfg)


def loss_value_and_grad(spec: network.MlpSpec, theta: np.ndarray, batch: SampleBatch,
                        cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Loss value and its theta-gradient in one reverse sweep."""
    tape = ad.Tape()
    theta_var = tape.leaf(np.asarray(theta, dtype=np.float64))
    value = empirical_loss(tape, spec, theta_var, batch, cfg)
    grad = ad.backward(tape, value)[0]
    return float(value.value), grad


def quadrature_loss(spec: network.MlpSpec, theta: np.ndarray, m: int, cfg: LossConfig,
                    a: GridField, g: DirichletData, subdomain: Rect | None = None) -> float:
    """Midpoint-rule evaluation of the loss: tensor-product midpoints on the
    (sub)domain, composite midpoints with m points per edge on the boundary.
    This is the sampling-free oracle for the Monte Carlo loss."""
    if m < 64:
        raise ValueError("quadrature grid must be at least 64 points per direction")
    x0, x1, y0, y1 = subdomain if subdomain is not None else (0.0, 1.0, 0.0, 1.0)
    mid = (np.arange(m) + 0.5) / m
    xs = x0 + (x1 - x0) * mid
    ys = y0 + (y1 - y0) * mid
    xx, yy = np.meshgrid(xs, ys)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    area = (x1 - x0) * (y1 - y0)

    tape = ad.Tape()
    theta_var = tape.leaf(np.asarray(theta, dtype=np.float64))
    _, gx, gy = network.forward_batch(tape, spec, theta_var, pts, with_gradient=True)
    mag = ad.huber_sqrt(ad.square(gx) + ad.square(gy), cfg.zeta).value
    a_int = bilinear_sample_many(a, pts[:, 0], pts[:, 1])
    interior = float(np.sum(a_int * mag)) * (area / (m * m))

    t = mid
    zeros, ones = np.zeros(m), np.ones(m)
    bpts = np.concatenate([
        np.column_stack([t, zeros]),
        np.column_stack([ones, t]),
        np.column_stack([t, ones]),
        np.column_stack([zeros, t]),
    ])
    u_b = network.forward_batch(tape, spec, theta_var, bpts).value
    g_b = g(bpts[:, 0], bpts[:, 1])
    a_b = bilinear_sample_many(a, bpts[:, 0], bpts[:, 1])
    s = u_b - g_b
    mag_b = np.where(np.abs(s) >= cfg.zeta, np.abs(s), s * s / (2.0 * cfg.zeta) + cfg.zeta / 2.0)
    boundary = float(np.sum(a_b * mag_b)) * (cfg.gamma * cfg.perimeter / (4 * m))
    return interior + boundary


def mc_standard_error(spec: network.MlpSpec, theta: np.ndarray, batch: SampleBatch,
                      cfg: LossConfig) -> float:
    """Estimated standard error of the Monte Carlo loss at fixed theta."""
    tape = ad.Tape()
    theta_var = tape.leaf(np.asarray(theta, dtype=np.float64))
    _, gx, gy = network.forward_batch(tape, spec, theta_var, batch.interior, with_gradient=True)
    f_int = batch.a_interior * ad.huber_sqrt(ad.square(gx) + ad.square(gy), cfg.zeta).value
    u_b = network.forward_batch(tape, spec, theta_var, batch.boundary).value
    s = u_b - batch.g_boundary
    psi = np.where(np.abs(s) >= cfg.zeta, np.abs(s), s * s / (2.0 * cfg.zeta) + cfg.zeta / 2.0)
    f_bdy = batch.a_boundary * psi
    n1, n2 = f_int.size, f_bdy.size
    var1 = float(np.var(f_int, ddof=1)) / n1 if n1 > 1 else 0.0
    var2 = float(np.var(f_bdy, ddof=1)) / n2 if n2 > 1 else 0.0
    return float(np.sqrt(cfg.area**2 * var1 + (cfg.gamma * cfg.perimeter) ** 2 * var2))
