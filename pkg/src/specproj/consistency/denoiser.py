"""Dense denoiser with the consistency skip/out parameterization.

    f(x, t, cond) = c_skip(t) * x + c_out(t) * F(x, t, cond)

F is a two-hidden-layer GELU network on the flattened noisy target, the
flattened conditioning frames, and a sinusoidal embedding of log t. The
boundary c_skip(t_min) = 1, c_out(t_min) = 0 makes f the identity at the
smallest noise level for any weights. Gradients are hand-derived, matching
the surrogate module's optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, FieldFormatError
from ..surrogate.fno import gelu, gelu_grad
from ..surrogate.params import read_container, write_container
from .. import fldio
from .normalizer import RangeNormalizer
from .schedule import DEFAULT_TIME_POINTS, NoiseSchedule, skip_out_coeffs


@dataclass(frozen=True)
class DenoiserHyper:
    field_shape: tuple[int, ...]          # (C, *spatial) of the noised quantity
    cond_shape: tuple[int, ...] = ()      # (C_cond, *spatial); empty = unconditioned
    hidden: int = 128
    emb_dim: int = 16

    @property
    def out_dim(self) -> int:
        return int(np.prod(self.field_shape))

    @property
    def in_dim(self) -> int:
        cond = int(np.prod(self.cond_shape)) if self.cond_shape else 0
        return self.out_dim + cond + self.emb_dim


def time_embedding(t: np.ndarray, emb_dim: int) -> np.ndarray:
    """Sinusoidal features of log t, (B, emb_dim)."""
    half = emb_dim // 2
    freqs = np.exp(-np.log(1e4) * np.arange(half) / max(half - 1, 1))
    ang = np.log(np.asarray(t, dtype=np.float64))[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class ToyDenoiser:
    hyper: DenoiserHyper
    arrays: dict[str, np.ndarray] = field(repr=False)
    sched: NoiseSchedule = NoiseSchedule()

    @classmethod
    def init(
        cls,
        hyper: DenoiserHyper,
        rng: np.random.Generator,
        sched: NoiseSchedule = NoiseSchedule(),
    ) -> "ToyDenoiser":
        def uni(shape, fan_in):
            a = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-a, a, size=shape)

        h = hyper
        arrays = {
            "w1": uni((h.hidden, h.in_dim), h.in_dim),
            "b1": np.zeros(h.hidden),
            "w2": uni((h.hidden, h.hidden), h.hidden),
            "b2": np.zeros(h.hidden),
            "w3": uni((h.out_dim, h.hidden), h.hidden),
            "b3": np.zeros(h.out_dim),
        }
        return cls(hyper, arrays, sched)

    def groups(self) -> dict[str, np.ndarray]:
        return self.arrays

    def copy(self) -> "ToyDenoiser":
        return ToyDenoiser(self.hyper, {k: v.copy() for k, v in self.arrays.items()}, self.sched)

    # -- forward / backward --------------------------------------------------

    def _flatten_inputs(self, x: np.ndarray, t: np.ndarray, cond: np.ndarray | None):
        h = self.hyper
        b = x.shape[0]
        if x.shape[1:] != h.field_shape:
            raise ContractError(f"denoiser input shape {x.shape[1:]} != {h.field_shape}")
        parts = [x.reshape(b, -1)]
        if h.cond_shape:
            if cond is None or cond.shape != (b,) + h.cond_shape:
                raise ContractError(f"conditioning must be (B, {h.cond_shape})")
            parts.append(cond.reshape(b, -1))
        parts.append(time_embedding(t, h.emb_dim))
        return np.concatenate(parts, axis=1)

    def forward_batch(
        self, x: np.ndarray, t: np.ndarray, cond: np.ndarray | None = None
    ) -> tuple[np.ndarray, dict]:
        """f(x, t, cond) on (B, *field_shape); t is (B,). Returns (f, tape)."""
        a = self.arrays
        t = np.asarray(t, dtype=np.float64)
        z = self._flatten_inputs(x, t, cond)
        pre1 = z @ a["w1"].T + a["b1"]
        h1 = gelu(pre1)
        pre2 = h1 @ a["w2"].T + a["b2"]
        h2 = gelu(pre2)
        raw = h2 @ a["w3"].T + a["b3"]
        coeffs = np.array([skip_out_coeffs(float(ti), self.sched) for ti in t])
        c_skip = coeffs[:, 0].reshape((-1,) + (1,) * (x.ndim - 1))
        c_out = coeffs[:, 1].reshape((-1,) + (1,) * (x.ndim - 1))
        f = c_skip * x + c_out * raw.reshape(x.shape)
        tape = {"z": z, "pre1": pre1, "h1": h1, "pre2": pre2, "h2": h2, "c_out": coeffs[:, 1]}
        return f, tape

    def backward_batch(self, tape: dict, g_f: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for a cotangent of the forward output."""
        a = self.arrays
        b = g_f.shape[0]
        g_raw = (tape["c_out"].reshape((-1,) + (1,) * (g_f.ndim - 1)) * g_f).reshape(b, -1)
        grads = {
            "w3": g_raw.T @ tape["h2"],
            "b3": g_raw.sum(axis=0),
        }
        g_h2 = g_raw @ a["w3"]
        g_pre2 = g_h2 * gelu_grad(tape["pre2"])
        grads["w2"] = g_pre2.T @ tape["h1"]
        grads["b2"] = g_pre2.sum(axis=0)
        g_h1 = g_pre2 @ a["w2"]
        g_pre1 = g_h1 * gelu_grad(tape["pre1"])
        grads["w1"] = g_pre1.T @ tape["z"]
        grads["b1"] = g_pre1.sum(axis=0)
        return grads


@dataclass
class DenoiserBundle:
    """A trained denoiser plus everything sampling needs to be self-contained:
    the value normalizer, whether it models residuals or states, and the
    multistep time points."""

    denoiser: ToyDenoiser
    normalizer: RangeNormalizer
    kind: str = "residual"  # residual (one-step-ahead correction) | state (refinement)
    time_points: tuple[float, ...] = DEFAULT_TIME_POINTS

    def __post_init__(self):
        if self.kind not in ("residual", "state"):
            raise ContractError(f"unknown denoiser kind {self.kind!r}")


def save_denoiser(path: str | Path, bundle: DenoiserBundle, extra: dict | None = None) -> None:
    d = bundle.denoiser
    s = d.sched
    header = {
        "model_kind": "denoiser",
        "kind": bundle.kind,
        "field_shape": ",".join(map(str, d.hyper.field_shape)),
        "cond_shape": ",".join(map(str, d.hyper.cond_shape)) if d.hyper.cond_shape else "-",
        "hidden": d.hyper.hidden,
        "emb_dim": d.hyper.emb_dim,
        "t_min": repr(s.t_min),
        "t_max": repr(s.t_max),
        "rho": repr(s.rho),
        "sigma_data": repr(s.sigma_data),
        "p_mean": repr(s.p_mean),
        "p_std": repr(s.p_std),
        "time_points": ",".join(repr(t) for t in bundle.time_points),
    }
    if extra:
        header.update(extra)
    blocks = [(name, fldio.pack_array(d.arrays[name])) for name in sorted(d.arrays)]
    blocks.append(("norm_min", fldio.pack_array(bundle.normalizer.r_min)))
    blocks.append(("norm_max", fldio.pack_array(bundle.normalizer.r_max)))
    write_container(path, header, blocks)


def load_denoiser(path: str | Path) -> tuple[DenoiserBundle, dict]:
    header, blocks = read_container(path)
    if header.get("model_kind") != "denoiser":
        raise FieldFormatError(f"not a denoiser container: {header.get('model_kind')!r}")
    cond = header["cond_shape"]
    hyper = DenoiserHyper(
        field_shape=tuple(int(x) for x in header["field_shape"].split(",")),
        cond_shape=() if cond == "-" else tuple(int(x) for x in cond.split(",")),
        hidden=int(header["hidden"]),
        emb_dim=int(header["emb_dim"]),
    )
    sched = NoiseSchedule(
        t_min=float(header["t_min"]),
        t_max=float(header["t_max"]),
        rho=float(header["rho"]),
        sigma_data=float(header["sigma_data"]),
        p_mean=float(header["p_mean"]),
        p_std=float(header["p_std"]),
    )
    arrays = {k: v for k, v in blocks.items() if k not in ("norm_min", "norm_max")}
    den = ToyDenoiser(hyper, arrays, sched)
    norm = RangeNormalizer(blocks["norm_min"], blocks["norm_max"])
    tps = tuple(float(x) for x in header["time_points"].split(","))
    return DenoiserBundle(den, norm, kind=header["kind"], time_points=tps), header
