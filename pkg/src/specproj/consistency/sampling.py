"""Multistep consistency sampling, the stochastic one-step-ahead forecast,
and ensemble uncertainty estimation.

Sampling starts from x = f(t_max * z, t_max) and alternates noise injection
x + sqrt(t_n^2 - t_min^2) z with denoising f(., t_n) down the given time
points; a single time point means one model evaluation and no injection
loop. The residual variant clamps and denormalizes the sampled residual,
the refiner variant denormalizes the sampled state.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..grids import RealField
from ..rng import substream
from ..surrogate.fno import pcno_forward_batch
from ..surrogate.params import FnoParams
from .denoiser import DenoiserBundle
from .schedule import noise_injection_scale


def sample_multistep(
    bundle: DenoiserBundle,
    cond: np.ndarray | None,
    rng: np.random.Generator,
    time_points: tuple[float, ...] | None = None,
    batch: int = 1,
) -> np.ndarray:
    """Draw normalized samples (B, *field_shape) along descending time points."""
    den = bundle.denoiser
    tps = bundle.time_points if time_points is None else tuple(time_points)
    if len(tps) < 1:
        raise ContractError("need at least one time point")
    if any(b >= a for a, b in zip(tps, tps[1:])):
        raise ContractError(f"time points must be strictly descending, got {tps}")
    if abs(tps[0] - den.sched.t_max) > 1e-9 * den.sched.t_max:
        raise ContractError(f"time points must start at t_max = {den.sched.t_max}")
    shape = (batch,) + den.hyper.field_shape
    t_max = den.sched.t_max
    x_hat = t_max * rng.standard_normal(shape)
    x, _ = den.forward_batch(x_hat, np.full(batch, t_max), cond)
    for t_n in tps[1:]:
        z = rng.standard_normal(shape)
        x_hat = x + noise_injection_scale(t_n, den.sched) * z
        x, _ = den.forward_batch(x_hat, np.full(batch, t_n), cond)
    return x


def sample_residual(
    bundle: DenoiserBundle, cond: np.ndarray | None, rng: np.random.Generator, batch: int = 1
) -> np.ndarray:
    """Sampled physical-space value: clamp the normalized draw, then map it
    back through the fitted range."""
    x = sample_multistep(bundle, cond, rng, batch=batch)
    return bundle.normalizer.inverse(x)


def diffpcno_step(
    pcno: FnoParams,
    bundle: DenoiserBundle,
    u_t: RealField,
    rng: np.random.Generator,
    cond_scalars: np.ndarray | None = None,
) -> tuple[RealField, RealField]:
    """Probabilistic one-step-ahead forecast: deterministic projection
    output plus one sampled residual. Returns (forecast, deterministic part)
    so the correction is inspectable."""
    if bundle.kind != "residual":
        raise ContractError("diffpcno_step needs a residual-kind denoiser")
    out, _ = pcno_forward_batch(pcno, u_t.data[None], u_t.grid, cond_scalars)
    u_hat = out[0]
    cond = np.concatenate([u_t.data[None], u_hat[None]], axis=1)
    r = sample_residual(bundle, cond, rng, batch=1)[0]
    return RealField(u_t.grid, u_hat + r), RealField(u_t.grid, u_hat)


def refiner_step(
    pcno: FnoParams,
    bundle: DenoiserBundle,
    u_t: RealField,
    rng: np.random.Generator,
    cond_scalars: np.ndarray | None = None,
) -> tuple[RealField, RealField]:
    """Refinement forecast: the sampled state replaces the deterministic one."""
    if bundle.kind != "state":
        raise ContractError("refiner_step needs a state-kind denoiser")
    out, _ = pcno_forward_batch(pcno, u_t.data[None], u_t.grid, cond_scalars)
    u_hat = out[0]
    cond = np.concatenate([u_t.data[None], u_hat[None]], axis=1)
    x = sample_multistep(bundle, cond, rng, batch=1)
    refined = bundle.normalizer.inverse(x)[0]
    return RealField(u_t.grid, refined), RealField(u_t.grid, u_hat)


def stochastic_rollout(step_fn, u0: RealField, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Propagate one trajectory: step_fn(state: RealField, rng) -> RealField."""
    if steps < 1:
        raise ContractError("steps >= 1 required")
    u = u0
    frames = np.empty((steps,) + u0.data.shape)
    for s in range(steps):
        u = step_fn(u, rng)
        frames[s] = u.data
    return frames


def uncertainty_ensemble(
    step_fn,
    u0: RealField,
    steps: int,
    n_traj: int = 50,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel, per-step empirical mean and standard deviation over
    independently propagated stochastic rollouts (one sample drawn per
    autoregressive step, fed back into the next). Trajectories own disjoint
    RNG sub-streams, so the ensemble is order-independent and repeatable.
    """
    if n_traj < 2:
        raise ContractError("n_traj >= 2 required")
    acc = np.empty((n_traj, steps) + u0.data.shape)
    for j in range(n_traj):
        rng = substream(seed, f"ensemble/{j}")
        acc[j] = stochastic_rollout(step_fn, u0, steps, rng)
    mean = acc.mean(axis=0)
    std = acc.std(axis=0, ddof=1)
    # a degenerate (deterministic) ensemble must report exact zeros, not the
    # rounding residue of mean-subtraction
    spread = acc.max(axis=0) - acc.min(axis=0)
    mean = np.where(spread == 0.0, acc[0], mean)
    std = np.where(spread == 0.0, 0.0, std)
    return mean, std
