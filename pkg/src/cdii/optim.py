"""First-order optimizers and the full-batch training loop.

ADAM is the default (bias-corrected moments, standard constants); plain SGD
is available as a fallback.  The training loop evaluates the empirical loss
on a fixed batch once per epoch, applies the current learning rate from a
piecewise-constant schedule, and records the loss history (plus the
reconstruction error against a supplied truth field, when requested).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import loss as loss_mod
from . import network
from .errors import NumericError
from .field import GridField, relative_l2_error

__all__ = [
    "AdamConfig",
    "AdamState",
    "TrainHistory",
    "SigmaProbe",
    "adam_step",
    "sgd_step",
    "train",
]


@dataclass(frozen=True)
class AdamConfig:
    """ADAM hyperparameters, epoch budget, and learning-rate schedule.

    schedule is a tuple of (epoch_start, lr) pairs with strictly increasing
    epoch_start beginning at 0; empty means the flat rate lr throughout.
    """

    lr: float
    epochs: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epoch budget must be nonnegative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if self.schedule:
            starts = [s for s, _ in self.schedule]
            if starts[0] != 0 or any(a >= b for a, b in zip(starts, starts[1:])):
                raise ValueError("schedule epochs must strictly increase starting at 0")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for the given 0-based epoch index."""
        rate = self.lr
        for start, lr in self.schedule:
            if epoch >= start:
                rate = lr
        return rate


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, cfg: AdamConfig,
              t: int, lr: float | None = None) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update; t is the 1-based step index."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("theta, gradient, and state shapes must match")
    if t < 1:
        raise ValueError("step index t starts at 1")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient component in ADAM step")
    if lr is None:
        lr = cfg.lr
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + cfg.eps), AdamState(m, v)


def sgd_step(theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """Plain gradient-descent update."""
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient component in SGD step")
    return theta - lr * grad


@dataclass
class TrainHistory:
    """Per-epoch loss values, optionally per-epoch sigma errors."""

    losses: list[float] = dc_field(default_factory=list)
    sigma_errors: list[float] | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if self.sigma_errors is None:
                writer.writerow(["epoch", "loss"])
                for i, l in enumerate(self.losses):
                    writer.writerow([i, f"{l:.17g}"])
            else:
                # baseline runs have errors but no losses; leave blanks
                writer.writerow(["epoch", "loss", "sigma_error"])
                for i in range(max(len(self.losses), len(self.sigma_errors))):
                    l = f"{self.losses[i]:.17g}" if i < len(self.losses) else ""
                    e = f"{self.sigma_errors[i]:.17g}" if i < len(self.sigma_errors) else ""
                    writer.writerow([i, l, e])


@dataclass(frozen=True)
class SigmaProbe:
    """Optional per-epoch error tracking: the truth conductivity, the data
    grid used for the division, and the gradient floor."""

    sigma_true: GridField
    a_used: GridField
    eps_floor: float = 1e-6

    def error(self, spec: network.MlpSpec, theta: np.ndarray) -> float:
        _, gx, gy = network.eval_on_grid(spec, theta, self.sigma_true.nx, self.sigma_true.ny)
        mag = np.maximum(np.sqrt(gx * gx + gy * gy), self.eps_floor)
        est = GridField(self.sigma_true.nx, self.sigma_true.ny, self.a_used.values / mag)
        return relative_l2_error(est, self.sigma_true)


def train(spec: network.MlpSpec, theta0: np.ndarray, batch: loss_mod.SampleBatch | None,
          loss_cfg: loss_mod.LossConfig | None, adam_cfg: AdamConfig,
          probe: SigmaProbe | None = None,
          loss_fn: Callable[[ad.Tape, ad.Var], ad.Var] | None = None,
          clip_radius: float | None = None,
          resample: Callable[[int], loss_mod.SampleBatch] | None = None,
          ) -> tuple[np.ndarray, TrainHistory]:
    """Full-batch ADAM minimization of the empirical loss.

    The default policy trains on the one fixed batch; passing resample draws
    a fresh batch per epoch instead (resample(epoch) -> SampleBatch).
    loss_fn overrides the empirical loss with an arbitrary tape-recorded
    objective of theta (used by the denoiser and by tests).  The recorded
    loss for each epoch is the value at the step's start.  On a numerical
    failure the partial history is attached to the raised error.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    state = AdamState.zeros(theta.size)
    history = TrainHistory(sigma_errors=[] if probe is not None else None)
    if resample is not None and loss_fn is not None:
        raise ValueError("resample only applies to the built-in empirical loss")
    if loss_fn is None:
        if (batch is None and resample is None) or loss_cfg is None:
            raise ValueError("either a batch and loss config or a loss_fn is required")

    for epoch in range(adam_cfg.epochs):
        tape = ad.Tape()
        theta_var = tape.leaf(theta)
        if loss_fn is not None:
            value = loss_fn(tape, theta_var)
        else:
            epoch_batch = batch if resample is None else resample(epoch)
            value = loss_mod.empirical_loss(tape, spec, theta_var, epoch_batch, loss_cfg)
        grad = ad.backward(tape, value)[0]
        history.losses.append(float(value.value))
        if probe is not None:
            history.sigma_errors.append(probe.error(spec, theta))
        try:
            theta, state = adam_step(theta, grad, state, adam_cfg, epoch + 1,
                                     lr=adam_cfg.lr_at(epoch))
        except NumericError as exc:
            exc.history = history
            raise
        if clip_radius is not None:
            theta = network.clip_params(theta, clip_radius)
    return theta, history
