"""Fully connected feedforward ansatz u_theta(x, y) and its bookkeeping.

Parameters live in one flat float64 vector laid out layer by layer (weight
matrix row-major, then bias).  The forward pass and the spatial gradient are
recorded on an autodiff tape so that gradients of any loss with respect to
theta are available by a single backward sweep; the spatial gradient is
built by the explicit layer-wise chain-rule recursion, which keeps mixed
x/theta derivatives first-order on the tape.

The module also carries numerical checks of the two proved inequalities for
this network class: the sup-norm bound on |grad u_theta| and the Lipschitz
bound of the spatial gradient with respect to the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import FormatError
from .rng import Rng

__all__ = [
    "MlpSpec",
    "default_spec",
    "n_params",
    "init_params",
    "clip_params",
    "forward_batch",
    "forward_eval",
    "spatial_gradient",
    "eval_on_grid",
    "probe_grid",
    "check_gradient_sup_bound",
    "check_param_lipschitz",
    "layer_gradient_sups",
    "save_params",
    "load_params",
]

_ACTIVATIONS = ("tanh", "sigmoid", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture: layer sizes d_0..d_L (d_0 = 2, d_L = 1) and activation."""

    layer_sizes: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        ls = tuple(int(d) for d in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", ls)
        if len(ls) < 3:
            raise ValueError("network needs at least two layers (one hidden)")
        if any(d < 1 for d in ls):
            raise ValueError("layer sizes must be positive")
        if ls[0] != 2 or ls[-1] != 1:
            raise ValueError("input width must be 2 and output width 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def depth(self) -> int:
        """Number of layers L (affine maps); hidden layers are L - 1."""
        return len(self.layer_sizes) - 1

    @property
    def width(self) -> int:
        return max(self.layer_sizes)


def default_spec(depth: int = 9, width: int = 10, activation: str = "tanh") -> MlpSpec:
    """Uniform-width spec; the default (9, 10) has 811 parameters."""
    return MlpSpec((2,) + (width,) * (depth - 1) + (1,), activation)


def n_params(spec: MlpSpec) -> int:
    ls = spec.layer_sizes
    return sum(ls[l] * ls[l - 1] + ls[l] for l in range(1, len(ls)))


def _layer_slices(spec: MlpSpec):
    """(w_start, b_start, b_stop, (d_out, d_in)) per layer, over the flat vector."""
    out = []
    pos = 0
    ls = spec.layer_sizes
    for l in range(1, len(ls)):
        d_out, d_in = ls[l], ls[l - 1]
        w_start = pos
        b_start = w_start + d_out * d_in
        pos = b_start + d_out
        out.append((w_start, b_start, pos, (d_out, d_in)))
    return out


def _check_theta(spec: MlpSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != n_params(spec):
        raise ValueError(f"parameter vector has {theta.size} entries, spec needs {n_params(spec)}")
    return theta


def init_params(spec: MlpSpec, seed: int, scheme: str = "glorot_uniform", r: float = 1.0) -> np.ndarray:
    """Deterministic initialization.

    glorot_uniform draws weights from U(-sqrt(6/(d_in+d_out)), +...) per layer
    with zero biases; uniform draws every component from U(-r, r).
    """
    rng = Rng(seed)
    theta = np.zeros(n_params(spec))
    for w_start, b_start, b_stop, (d_out, d_in) in _layer_slices(spec):
        if scheme == "glorot_uniform":
            bound = np.sqrt(6.0 / (d_in + d_out))
            theta[w_start:b_start] = (2.0 * rng.uniform(d_out * d_in) - 1.0) * bound
        elif scheme == "uniform":
            theta[w_start:b_start] = (2.0 * rng.uniform(d_out * d_in) - 1.0) * r
            theta[b_start:b_stop] = (2.0 * rng.uniform(d_out) - 1.0) * r
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
    return theta


def clip_params(theta: np.ndarray, r: float) -> np.ndarray:
    """Componentwise clamp of theta into [-r, r]."""
    if not r > 0.0:
        raise ValueError("clip radius must be positive")
    return np.clip(np.asarray(theta, dtype=np.float64), -r, r)


def _act(spec: MlpSpec, z: ad.Var) -> tuple[ad.Var, ad.Var | None]:
    """Activated value and its derivative as tape variables (None: derivative 1)."""
    if spec.activation == "tanh":
        f = ad.tanh(z)
        return f, 1.0 - ad.square(f)
    if spec.activation == "sigmoid":
        f = 1.0 / (1.0 + ad.exp(-z))
        return f, f * (1.0 - f)
    return z, None


def _forward_layers(tape: ad.Tape, spec: MlpSpec, theta_var: ad.Var, points: np.ndarray,
                    with_gradient: bool):
    """Run the layer recursion; returns (u, gx, gy, hidden_gx, hidden_gy).

    u is a (n,) variable; gx/gy are (n,) gradient components (None when
    with_gradient is False); hidden_gx/gy list the per-hidden-layer gradient
    variables of shape (n, d_l), used by the theory checks.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    n = points.shape[0]
    slices = _layer_slices(spec)

    f = points
    gx = np.array([[1.0, 0.0]])
    gy = np.array([[0.0, 1.0]])
    hidden_gx, hidden_gy = [], []
    for w_start, b_start, b_stop, shape in slices[:-1]:
        w = ad.take(theta_var, w_start, b_start, shape)
        b = ad.take(theta_var, b_start, b_stop, (shape[0],))
        z = ad.linear(f, w) + b
        f, deriv = _act(spec, z)
        if with_gradient:
            gx = ad.linear(gx, w) if deriv is None else deriv * ad.linear(gx, w)
            gy = ad.linear(gy, w) if deriv is None else deriv * ad.linear(gy, w)
            hidden_gx.append(gx)
            hidden_gy.append(gy)
    w_start, b_start, b_stop, shape = slices[-1]
    w = ad.take(theta_var, w_start, b_start, shape)
    b = ad.take(theta_var, b_start, b_stop, (shape[0],))
    u = ad.reshape(ad.linear(f, w) + b, (n,))
    if not with_gradient:
        return u, None, None, hidden_gx, hidden_gy
    gx = ad.linear(gx, w)
    gy = ad.linear(gy, w)
    if gx.value.shape[0] == 1 and n != 1:
        # identity activations never mixed the batch in; expand explicitly
        gx = gx * np.ones((n, 1))
        gy = gy * np.ones((n, 1))
    return u, ad.reshape(gx, (n,)), ad.reshape(gy, (n,)), hidden_gx, hidden_gy


def forward_batch(tape: ad.Tape, spec: MlpSpec, theta_var: ad.Var, points: np.ndarray,
                  with_gradient: bool = False):
    """Tape-recorded network values (and optionally spatial gradients) at a
    batch of points; returns u or (u, gx, gy), each of shape (n,)."""
    u, gx, gy, _, _ = _forward_layers(tape, spec, theta_var, points, with_gradient)
    return (u, gx, gy) if with_gradient else u


def forward_eval(spec: MlpSpec, theta: np.ndarray, x: float, y: float) -> float:
    """Network value at one point (fresh tape)."""
    theta = _check_theta(spec, theta)
    tape = ad.Tape()
    u = forward_batch(tape, spec, tape.leaf(theta), np.array([[x, y]]))
    return float(u.value[0])


def spatial_gradient(spec: MlpSpec, theta: np.ndarray, x: float, y: float) -> np.ndarray:
    """(du/dx, du/dy) at one point via the layer-wise recursion."""
    theta = _check_theta(spec, theta)
    tape = ad.Tape()
    _, gx, gy = forward_batch(tape, spec, tape.leaf(theta), np.array([[x, y]]), with_gradient=True)
    return np.array([float(gx.value[0]), float(gy.value[0])])


def eval_on_grid(spec: MlpSpec, theta: np.ndarray, nx: int, ny: int):
    """u, du/dx, du/dy evaluated at all nodes of the (nx x ny) grid,
    returned as (ny, nx) arrays."""
    theta = _check_theta(spec, theta)
    x = np.linspace(0.0, 1.0, nx)
    y = np.linspace(0.0, 1.0, ny)
    xx, yy = np.meshgrid(x, y)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    tape = ad.Tape()
    u, gx, gy = forward_batch(tape, spec, tape.leaf(theta), pts, with_gradient=True)
    return (u.value.reshape(ny, nx), gx.value.reshape(ny, nx), gy.value.reshape(ny, nx))


# ---------------------------------------------------------------------------
# numerical verification of the proved network bounds


def probe_grid(m: int) -> np.ndarray:
    """Uniform m x m probe points covering [0,1]^2 including the boundary."""
    t = np.linspace(0.0, 1.0, m)
    xx, yy = np.meshgrid(t, t)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _gradients_at(spec: MlpSpec, theta: np.ndarray, points: np.ndarray):
    tape = ad.Tape()
    _, gx, gy, hgx, hgy = _forward_layers(tape, spec, tape.leaf(theta), points, True)
    return gx.value, gy.value, hgx, hgy


def check_gradient_sup_bound(spec: MlpSpec, theta: np.ndarray, points: np.ndarray):
    """Measured sup of |grad u_theta| over the probes against the bound
    sqrt(d) * R^L * (rho1 * W)^(L-1) with R = max|theta|, rho1 = 1, d = 2.

    Returns (measured, bound, ok)."""
    theta = _check_theta(spec, theta)
    gx, gy, _, _ = _gradients_at(spec, theta, points)
    measured = float(np.max(np.sqrt(gx * gx + gy * gy))) if gx.size else 0.0
    r = float(np.max(np.abs(theta)))
    bound = np.sqrt(2.0) * r**spec.depth * float(spec.width) ** (spec.depth - 1)
    return measured, bound, measured <= bound


def check_param_lipschitz(spec: MlpSpec, theta: np.ndarray, theta2: np.ndarray,
                          points: np.ndarray):
    """Measured sup over probes and components of |d_i(u_theta - u_theta2)|
    against L^2 * R^(2L-2) * W^(2L-2) * |theta - theta2|_inf with
    R = max(|theta|_inf, |theta2|_inf, 1) and the tanh constants.

    Returns (measured, bound, ok)."""
    theta = _check_theta(spec, theta)
    theta2 = _check_theta(spec, theta2)
    gx1, gy1, _, _ = _gradients_at(spec, theta, points)
    gx2, gy2, _, _ = _gradients_at(spec, theta2, points)
    measured = float(max(np.max(np.abs(gx1 - gx2)), np.max(np.abs(gy1 - gy2))))
    r = max(float(np.max(np.abs(theta))), float(np.max(np.abs(theta2))), 1.0)
    sep = float(np.max(np.abs(theta - theta2)))
    big_l = spec.depth
    bound = big_l**2 * (r * spec.width) ** (2 * big_l - 2) * sep
    return measured, bound, measured <= bound


def layer_gradient_sups(spec: MlpSpec, theta: np.ndarray, points: np.ndarray):
    """Per hidden layer: (measured sup_j |d_i f_j^(l)|, bound (rho1 R)^l W^(l-1))."""
    theta = _check_theta(spec, theta)
    _, _, hgx, hgy = _gradients_at(spec, theta, points)
    r = float(np.max(np.abs(theta)))
    out = []
    for l, (gx, gy) in enumerate(zip(hgx, hgy), start=1):
        measured = float(max(np.max(np.abs(gx.value)), np.max(np.abs(gy.value))))
        out.append((measured, r**l * float(spec.width) ** (l - 1)))
    return out


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_params(spec: MlpSpec, theta: np.ndarray, path) -> None:
    theta = _check_theta(spec, theta)
    with open(path, "w") as fh:
        sizes = ",".join(str(d) for d in spec.layer_sizes)
        fh.write(f"mlp layers={sizes} activation={spec.activation}\n")
        for v in theta:
            fh.write(f"{v:.17g}\n")


def load_params(path) -> tuple[MlpSpec, np.ndarray]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: line 1: empty file")
    parts = lines[0].split()
    if len(parts) != 3 or parts[0] != "mlp" or not parts[1].startswith("layers=") \
            or not parts[2].startswith("activation="):
        raise FormatError(f"{path}: line 1: malformed header {lines[0]!r}")
    try:
        sizes = tuple(int(s) for s in parts[1][len("layers="):].split(","))
    except ValueError as exc:
        raise FormatError(f"{path}: line 1: bad layer sizes") from exc
    spec = MlpSpec(sizes, parts[2][len("activation="):])
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid value {tok!r}") from exc
    if len(values) != n_params(spec):
        raise FormatError(f"{path}: expected {n_params(spec)} values, found {len(values)}")
    return spec, np.asarray(values)
