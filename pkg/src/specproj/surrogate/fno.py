"""Fourier-layer surrogate: lift, spectral + pointwise layers, two-layer
head, optional conservation projection on the output, and the hand-derived
reverse-mode gradients for all of it.

Shapes are batched and channel-major throughout: (B, C, *spatial). The
spectral kernels act only on the retained corner modes; everything else
passes zero. The adjoint of the unnormalized forward FFT is a scaled inverse
transform, the adjoint of the spectral multiply is the conjugate kernel, and
the Helmholtz stage is self-adjoint - see projection.py for those pieces.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import ContractError
from ..grids import GridSpec, RealField
from ..projection import compose_backward, compose_forward, corner_mode_axes
from .params import FnoHyper, FnoParams

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _act(name: str):
    if name == "gelu":
        return gelu, gelu_grad
    if name == "identity":
        return (lambda x: x), (lambda x: np.ones_like(x))
    raise ContractError(f"unknown activation {name!r}")


def _pointwise_weight_grad(g_out: np.ndarray, vin: np.ndarray) -> np.ndarray:
    """Contract (B, O, *sp) with (B, I, *sp) over batch and space -> (O, I)."""
    dims = [0] + list(range(2, g_out.ndim))
    return np.tensordot(g_out, vin, axes=(dims, dims))


def _with_cond(x: np.ndarray, cond: np.ndarray | None, hyper: FnoHyper) -> np.ndarray:
    if x.shape[1] != hyper.in_channels:
        raise ContractError(
            f"expected {hyper.in_channels} input channels, got {x.shape[1]}"
        )
    if hyper.cond_dim == 0:
        return x
    if cond is None:
        raise ContractError(f"model expects {hyper.cond_dim} conditioning scalars")
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim == 1:
        cond = np.broadcast_to(cond, (x.shape[0], cond.shape[0]))
    if cond.shape != (x.shape[0], hyper.cond_dim):
        raise ContractError(f"conditioning shape {cond.shape} != (B, {hyper.cond_dim})")
    spatial = x.shape[2:]
    planes = np.broadcast_to(
        cond.reshape(cond.shape + (1,) * len(spatial)), cond.shape + spatial
    )
    return np.concatenate([x, planes], axis=1)


def fno_forward_batch(
    params: FnoParams, x: np.ndarray, cond: np.ndarray | None = None
) -> tuple[np.ndarray, dict]:
    """Surrogate forward on (B, in_channels, *spatial); returns (out, tape)."""
    h = params.hyper
    act, _ = _act(h.activation)
    a = params.arrays
    tape: dict = {"x_aug": None, "layers": [], "spatial": x.shape[2:]}

    x0 = _with_cond(x, cond, h)
    tape["x_aug"] = x0
    v = np.einsum("wc,bc...->bw...", a["lift_w"], x0) + a["lift_b"].reshape(
        (1, h.width) + (1,) * (x0.ndim - 2)
    )

    pad = h.fno_padding or (0,) * h.ndim
    if any(pad):
        v = np.pad(v, [(0, 0), (0, 0)] + [(0, p) for p in pad])
    padded_shape = v.shape[2:]
    sel = (slice(None), slice(None)) + np.ix_(*corner_mode_axes(padded_shape, h.modes))
    n_total = float(np.prod(padded_shape))
    axes = tuple(range(2, v.ndim))
    tape["sel"], tape["n_total"], tape["padded_shape"] = sel, n_total, padded_shape

    for l in range(h.n_layers):
        vhat_sel = np.fft.fftn(v, axes=axes)[sel]
        wh = np.zeros((v.shape[0], h.width) + padded_shape, dtype=np.complex128)
        wh[sel] = np.einsum("oi...,bi...->bo...", a[f"spectral_{l}"], vhat_sel)
        w = np.real(np.fft.ifftn(wh, axes=axes))
        pre = (
            np.einsum("oi,bi...->bo...", a[f"pw_w_{l}"], v)
            + a[f"pw_b_{l}"].reshape((1, h.width) + (1,) * len(padded_shape))
            + w
        )
        tape["layers"].append({"v": v, "vhat_sel": vhat_sel, "pre": pre})
        v = act(pre)

    if any(pad):
        crop = (slice(None), slice(None)) + tuple(slice(0, n) for n in x.shape[2:])
        tape["v_padded_shape"] = v.shape
        v = v[crop]
    tape["trunk_out"] = v

    hpre = np.einsum("oi,bi...->bo...", a["head1_w"], v) + a["head1_b"].reshape(
        (1, h.width) + (1,) * len(x.shape[2:])
    )
    tape["head_pre"] = hpre
    hmid = act(hpre)
    tape["head_mid"] = hmid
    out = np.einsum("oi,bi...->bo...", a["head2_w"], hmid) + a["head2_b"].reshape(
        (1, h.out_channels) + (1,) * len(x.shape[2:])
    )
    return out, tape


def fno_backward_batch(params: FnoParams, tape: dict, g_out: np.ndarray) -> dict[str, np.ndarray]:
    """Adjoint of fno_forward_batch -> gradients for every parameter group."""
    h = params.hyper
    _, dact = _act(h.activation)
    a = params.arrays
    grads: dict[str, np.ndarray] = {}
    ndim_sp = len(tape["spatial"])
    sum_axes = (0,) + tuple(range(2, 2 + ndim_sp))

    grads["head2_w"] = _pointwise_weight_grad(g_out, tape["head_mid"])
    grads["head2_b"] = g_out.sum(axis=sum_axes)
    g_mid = np.einsum("oi,bo...->bi...", a["head2_w"], g_out)
    g_hpre = g_mid * dact(tape["head_pre"])
    grads["head1_w"] = _pointwise_weight_grad(g_hpre, tape["trunk_out"])
    grads["head1_b"] = g_hpre.sum(axis=sum_axes)
    g_v = np.einsum("oi,bo...->bi...", a["head1_w"], g_hpre)

    pad = h.fno_padding or (0,) * h.ndim
    if any(pad):
        g_full = np.zeros(tape["v_padded_shape"])
        crop = (slice(None), slice(None)) + tuple(slice(0, n) for n in tape["spatial"])
        g_full[crop] = g_v
        g_v = g_full

    sel = tape["sel"]
    n_total = tape["n_total"]
    padded_shape = tape["padded_shape"]
    axes = tuple(range(2, g_v.ndim))
    psum_axes = (0,) + tuple(range(2, 2 + len(padded_shape)))

    for l in reversed(range(h.n_layers)):
        rec = tape["layers"][l]
        g_pre = g_v * dact(rec["pre"])
        grads[f"pw_w_{l}"] = _pointwise_weight_grad(g_pre, rec["v"])
        grads[f"pw_b_{l}"] = g_pre.sum(axis=psum_axes)
        g_v = np.einsum("oi,bo...->bi...", a[f"pw_w_{l}"], g_pre)
        # spectral path: adjoint of Re(ifftn) is fftn/N, of fftn is N*Re(ifftn)
        gh_sel = (np.fft.fftn(g_pre, axes=axes) / n_total)[sel]
        grads[f"spectral_{l}"] = np.einsum(
            "bo...,bi...->oi...", gh_sel, np.conj(rec["vhat_sel"])
        )
        gvh = np.zeros((g_pre.shape[0], h.width) + padded_shape, dtype=np.complex128)
        gvh[sel] = np.einsum("oi...,bo...->bi...", np.conj(a[f"spectral_{l}"]), gh_sel)
        g_v = g_v + n_total * np.real(np.fft.ifftn(gvh, axes=axes))

    if any(pad):
        crop = (slice(None), slice(None)) + tuple(slice(0, n) for n in tape["spatial"])
        g_v = g_v[crop]

    x0 = tape["x_aug"]
    grads["lift_w"] = _pointwise_weight_grad(g_v, x0)
    grads["lift_b"] = g_v.sum(axis=sum_axes)
    return grads


def pcno_forward_batch(
    params: FnoParams,
    x: np.ndarray,
    grid: GridSpec,
    cond: np.ndarray | None = None,
    selector: str | None = None,
) -> tuple[np.ndarray, dict]:
    """Surrogate forward followed by the conservation projection."""
    selector = params.hyper.selector if selector is None else selector
    raw, tape = fno_forward_batch(params, x, cond)
    out, proj_cache = compose_forward(raw, grid, selector, params.projection(selector))
    tape["proj"] = proj_cache
    return out, tape


def pcno_backward_batch(params: FnoParams, tape: dict, g_out: np.ndarray) -> dict[str, np.ndarray]:
    g, g_free, g_wspe = compose_backward(g_out, tape["proj"])
    grads = fno_backward_batch(params, tape, g)
    if "momentum_free" in params.arrays:
        grads["momentum_free"] = (
            g_free if g_free is not None else np.zeros_like(params.arrays["momentum_free"])
        )
    if "w_spe" in params.arrays:
        grads["w_spe"] = (
            g_wspe if g_wspe is not None else np.zeros_like(params.arrays["w_spe"])
        )
    return grads


def fno_forward(params: FnoParams, u: RealField, cond=None) -> RealField:
    out, _ = fno_forward_batch(params, u.data[None], cond)
    return RealField(u.grid, out[0])


def pcno_forward(params: FnoParams, u: RealField, cond=None, selector: str | None = None) -> RealField:
    out, _ = pcno_forward_batch(params, u.data[None], u.grid, cond, selector)
    return RealField(u.grid, out[0])


def loss_relative_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of |pred - target|^2 / |target|^2."""
    if pred.shape != target.shape:
        raise ContractError("prediction and target shapes differ")
    b = pred.shape[0]
    diff = (pred - target).reshape(b, -1)
    ref = target.reshape(b, -1)
    denom = np.sum(ref * ref, axis=1)
    if np.any(denom == 0.0):
        raise ContractError("relative MSE undefined for a zero-norm target")
    return float(np.mean(np.sum(diff * diff, axis=1) / denom))


def loss_relative_mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    b = pred.shape[0]
    denom = np.sum((target.reshape(b, -1)) ** 2, axis=1).reshape((b,) + (1,) * (pred.ndim - 1))
    return 2.0 * (pred - target) / (b * denom)
