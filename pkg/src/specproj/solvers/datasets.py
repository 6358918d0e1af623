"""Trajectory dataset assembly: FLD1 files plus a flat-text manifest.

One trajectory is one independent job with its own RNG sub-stream keyed by
(seed, index), so parallel and serial generation produce bit-identical
files. The manifest is stanza-per-trajectory ``key = value`` text recording
every sampled parameter (the conditioning features of the dataset).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .. import fldio
from ..grids import RealField
from ..rng import substream
from .kse import sample_config, solve_kse
from .kolmogorov import KolmogorovConfig, solve_kolmogorov
from .swe import SweConfig, solve_swe_flood, tilted_dem

KINDS = ("kse", "kolmogorov", "swe")


def traj_filename(index: int) -> str:
    return f"traj_{index:04d}.fld"


def write_manifest(path: Path, header: dict, stanzas: list[dict]) -> None:
    lines = []
    for k, v in header.items():
        lines.append(f"{k} = {v}")
    for stanza in stanzas:
        lines.append("")
        for k, v in stanza.items():
            lines.append(f"{k} = {v}")
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> tuple[dict, list[dict]]:
    header: dict[str, str] = {}
    stanzas: list[dict] = []
    current = header
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            if current is not header or header:
                current = {}
                stanzas.append(current)
            continue
        if line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ContractError(f"manifest line without '=': {raw!r}")
        current[key.strip()] = value.strip()
    return header, [s for s in stanzas if s]


def _generate_kse(index: int, seed: int, overrides: dict) -> tuple[RealField, dict]:
    rng = substream(seed, f"solver/{index}")
    vary_nu = bool(overrides.pop("vary_nu", False))
    cfg = sample_config(rng, vary_nu=vary_nu, seed=seed, **overrides)
    from .kse import initial_condition

    traj = solve_kse(cfg, u0=initial_condition(cfg, rng))
    stanza = {
        "index": index,
        "file": traj_filename(index),
        "seed": seed,
        "L": repr(cfg.length),
        "dt": repr(cfg.dt),
        "nu": repr(cfg.nu),
        "N": cfg.n,
        "warmup": cfg.warmup,
        "steps": cfg.steps,
        "substeps": cfg.substeps,
    }
    return traj, stanza


def _generate_kolmogorov(index: int, seed: int, overrides: dict) -> tuple[RealField, dict]:
    rng = substream(seed, f"solver/{index}")
    form = overrides.pop("form", "velocity")
    cfg = KolmogorovConfig(seed=seed, **overrides)
    from .kolmogorov import gaussian_random_vorticity

    w0 = gaussian_random_vorticity(cfg, rng)
    w_traj, u_traj = solve_kolmogorov(cfg, w0=w0)
    traj = u_traj if form == "velocity" else w_traj
    stanza = {
        "index": index,
        "file": traj_filename(index),
        "seed": seed,
        "N": cfg.n,
        "nu": repr(cfg.nu),
        "dt": repr(cfg.dt),
        "frame_interval": cfg.frame_interval,
        "steps": cfg.t_in + cfg.t_out,
        "form": form,
        "init_tau": repr(cfg.init_tau),
        "init_alpha": repr(cfg.init_alpha),
    }
    return traj, stanza


def _generate_swe(index: int, seed: int, overrides: dict) -> tuple[RealField, dict]:
    rng = substream(seed, f"solver/{index}")
    ny = int(overrides.pop("ny", 24))
    nx = int(overrides.pop("nx", 24))
    slope = float(overrides.pop("slope", 0.005))
    rain = float(overrides.pop("rainfall", 1e-5))
    dem = tilted_dem(ny, nx, slope=slope) + 0.05 * rng.standard_normal((ny, nx))
    cfg = SweConfig(dem=dem, rainfall=rain, **overrides)
    traj = solve_swe_flood(cfg)
    stanza = {
        "index": index,
        "file": traj_filename(index),
        "seed": seed,
        "ny": ny,
        "nx": nx,
        "cell": repr(cfg.cell_size),
        "manning_n": repr(cfg.manning_n),
        "rainfall": repr(rain),
        "duration": repr(cfg.duration),
        "steps": traj.grid.shape[0],
    }
    return traj, stanza


_GENERATORS = {
    "kse": _generate_kse,
    "kolmogorov": _generate_kolmogorov,
    "swe": _generate_swe,
}


def generate_dataset(
    kind: str,
    out_dir: str | Path,
    count: int,
    seed: int,
    overrides: dict | None = None,
    threads: int = 1,
) -> Path:
    """Write ``count`` trajectories plus a manifest; deterministic per seed."""
    if kind not in KINDS:
        raise ContractError(f"unknown dataset kind {kind!r} (choose from {KINDS})")
    if count < 1:
        raise ContractError("count >= 1 required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gen = _GENERATORS[kind]
    overrides = dict(overrides or {})

    def job(i: int):
        return gen(i, seed, dict(overrides))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(count)))
    else:
        results = [job(i) for i in range(count)]

    stanzas = []
    for i, (traj, stanza) in enumerate(results):
        fldio.write_fld(traj, out / traj_filename(i))
        stanzas.append(stanza)
    write_manifest(out / "manifest", {"kind": kind, "count": count, "seed": seed}, stanzas)
    return out


def load_dataset(path: str | Path) -> tuple[dict, list[dict], list[np.ndarray]]:
    """Read back (header, stanzas, trajectory arrays (T, C, *spatial))."""
    p = Path(path)
    header, stanzas = read_manifest(p / "manifest")
    trajs = []
    for stanza in stanzas:
        f = p / stanza["file"]
        if not f.exists():
            raise ContractError(f"dataset is missing trajectory file {stanza['file']}")
        data = fldio.read_array(f)  # (channels, T, *spatial)
        trajs.append(np.moveaxis(data, 0, 1))  # -> (T, channels, *spatial)
    return header, stanzas, trajs
