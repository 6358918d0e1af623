"""Consistency-training losses: residual-target and state-target variants.

Both evaluate the model at adjacent noise levels with one shared noise draw
per sample and pull the lower-level (teacher) branch out of the
differentiation tape (teacher weights equal student weights; no EMA). The
distance is Pseudo-Huber per sample, weighted by 1 / (t_{i+1} - t_i), and
averaged over the batch, so the loss is invariant to sample order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NumericsError
from ..optim import Adam
from ..rng import substream
from .denoiser import ToyDenoiser
from .normalizer import RangeNormalizer
from .schedule import (
    Curriculum,
    NoiseSchedule,
    curriculum_n,
    default_huber_c,
    sample_index,
    timesteps,
)

_DIVERGE = 1e6


def consistency_pair_loss(
    denoiser: ToyDenoiser,
    x_clean: np.ndarray,
    cond: np.ndarray | None,
    t_lo: np.ndarray,
    t_hi: np.ndarray,
    z: np.ndarray,
    c: float,
) -> tuple[float, float, dict[str, np.ndarray]]:
    """Weighted CT loss for explicit (t_lo, t_hi, z).

    Returns (loss, mean unweighted distance, parameter gradients). When the
    two branch inputs coincide (t_lo == t_hi elementwise) the distance is
    exactly zero with exactly zero gradients; the weighted loss is reported
    as zero in that degenerate case.
    """
    t_lo = np.asarray(t_lo, dtype=np.float64)
    t_hi = np.asarray(t_hi, dtype=np.float64)
    if np.any(t_hi < t_lo):
        raise ContractError("need t_hi >= t_lo")
    x_hi = x_clean + t_hi.reshape((-1,) + (1,) * (x_clean.ndim - 1)) * z
    x_lo = x_clean + t_lo.reshape((-1,) + (1,) * (x_clean.ndim - 1)) * z
    f_hi, tape = denoiser.forward_batch(x_hi, t_hi, cond)
    f_lo, _ = denoiser.forward_batch(x_lo, t_lo, cond)  # teacher: outside the tape

    b = x_clean.shape[0]
    diff = (f_hi - f_lo).reshape(b, -1)
    d2 = np.sum(diff * diff, axis=1)
    dist = np.sqrt(d2 + c * c) - c
    gap = t_hi - t_lo
    weights = np.where(gap > 0, 1.0 / np.where(gap > 0, gap, 1.0), 0.0)
    loss = float(np.mean(weights * dist))
    # d(dist)/d(f_hi) = (f_hi - f_lo) / sqrt(|diff|^2 + c^2)
    scale = (weights / (b * np.sqrt(d2 + c * c))).reshape((-1,) + (1,) * (x_clean.ndim - 1))
    grads = denoiser.backward_batch(tape, scale * (f_hi - f_lo))
    return loss, float(np.mean(dist)), grads


def _pair_times(n: int, batch: int, rng: np.random.Generator, sched: NoiseSchedule):
    ts = timesteps(n, sched)
    idx = np.array([sample_index(n, rng, sched) for _ in range(batch)])
    return ts[idx - 1], ts[idx]


def ct_loss_residual(
    denoiser: ToyDenoiser,
    u_t: np.ndarray,
    u_hat: np.ndarray,
    y: np.ndarray,
    k: int,
    cur: Curriculum,
    normalizer: RangeNormalizer,
    rng: np.random.Generator,
    c: float | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """CT loss for the residual corrector: the noised quantity is the
    normalized residual y - u_hat, conditioned on (u_t, u_hat). u_hat must
    come from a frozen deterministic model; nothing here updates it."""
    r_n = normalizer.forward(y - u_hat)
    cond = np.concatenate([u_t, u_hat], axis=1)
    return _ct_loss(denoiser, r_n, cond, k, cur, rng, c)


def ct_loss_refiner(
    denoiser: ToyDenoiser,
    u_t: np.ndarray,
    u_hat: np.ndarray,
    y: np.ndarray,
    k: int,
    cur: Curriculum,
    normalizer: RangeNormalizer,
    rng: np.random.Generator,
    c: float | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """CT loss for the state refiner: the noised quantity is the normalized
    ground-truth state itself, same conditioning."""
    y_n = normalizer.forward(y)
    cond = np.concatenate([u_t, u_hat], axis=1)
    return _ct_loss(denoiser, y_n, cond, k, cur, rng, c)


def _ct_loss(denoiser, x_clean, cond, k, cur, rng, c):
    batch = x_clean.shape[0]
    n = curriculum_n(k, cur)
    t_lo, t_hi = _pair_times(n, batch, rng, denoiser.sched)
    z = rng.standard_normal(x_clean.shape)
    if c is None:
        c = default_huber_c(int(np.prod(x_clean.shape[1:])))
    loss, _, grads = consistency_pair_loss(denoiser, x_clean, cond, t_lo, t_hi, z, c)
    return loss, grads


@dataclass(frozen=True)
class CtConfig:
    steps: int = 2000
    batch: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    s0: int = 10
    s1: int = 1280
    seed: int = 0
    huber_c: float | None = None

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1 or self.lr <= 0:
            raise ContractError("steps >= 1, batch >= 1, lr > 0 required")


def train_ct(
    denoiser: ToyDenoiser,
    u_t: np.ndarray,
    u_hat: np.ndarray,
    y: np.ndarray,
    normalizer: RangeNormalizer,
    cfg: CtConfig,
    target: str = "residual",
) -> tuple[ToyDenoiser, list[tuple[int, float, float]]]:
    """Run K steps of consistency training over a fixed (u_t, u_hat, y) set.

    Deterministic given cfg.seed; returns (trained denoiser, loss curve).
    """
    if target not in ("residual", "state"):
        raise ContractError(f"unknown CT target {target!r}")
    loss_fn = ct_loss_residual if target == "residual" else ct_loss_refiner
    denoiser = denoiser.copy()
    cur = Curriculum(cfg.s0, cfg.s1, cfg.steps)
    rng = substream(cfg.seed, "ct/train")
    opt = Adam(denoiser.groups(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    n = u_t.shape[0]
    curve = []
    for k in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch, n))
        loss, grads = loss_fn(
            denoiser, u_t[idx], u_hat[idx], y[idx], k, cur, normalizer, rng, cfg.huber_c
        )
        if not math.isfinite(loss) or loss > _DIVERGE:
            raise NumericsError(f"consistency training diverged at step {k}: {loss:.3e}")
        opt.step(grads)
        curve.append((k, loss, cfg.lr))
    return denoiser, curve
