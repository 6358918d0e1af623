"""Periodic grid geometry and the field containers built on it.

A field is always channel-major: ``data[c, i_0, ..., i_{d-1}]`` with the last
axis fastest in memory. Axes keep their declared order; there is no hidden
reordering, and at most one axis may be temporal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

SPATIAL = "spatial"
TEMPORAL = "temporal"


@dataclass(frozen=True)
class Axis:
    name: str
    size: int
    extent: float
    kind: str = SPATIAL


@dataclass(frozen=True)
class GridSpec:
    """Ordered axes of a periodic grid; shared by every field on it."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ContractError("grid needs at least one axis")
        for ax in self.axes:
            if ax.size < 2:
                raise ContractError(f"axis {ax.name!r}: size {ax.size} < 2")
            if not ax.extent > 0:
                raise ContractError(f"axis {ax.name!r}: extent {ax.extent} <= 0")
            if ax.kind not in (SPATIAL, TEMPORAL):
                raise ContractError(f"axis {ax.name!r}: unknown kind {ax.kind!r}")
        if sum(ax.kind == TEMPORAL for ax in self.axes) > 1:
            raise ContractError("at most one temporal axis")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def spacing(self, i: int) -> float:
        ax = self.axes[i]
        return ax.extent / ax.size

    def axis_index(self, name: str) -> int:
        for i, ax in enumerate(self.axes):
            if ax.name == name:
                return i
        raise ContractError(f"no axis named {name!r}")

    def wavenumbers(self, i: int, zero_nyquist: bool = False) -> np.ndarray:
        """k_j = 2*pi*n_j/L_j with integer frequencies in FFT order.

        ``zero_nyquist`` zeroes the self-conjugate mode of even axes; the i*k
        differentiation rule is sign-ambiguous there and zeroing keeps
        derivative outputs real and Hermitian.
        """
        ax = self.axes[i]
        n = np.fft.fftfreq(ax.size, d=1.0 / ax.size)  # integer frequencies
        if zero_nyquist and ax.size % 2 == 0:
            n = n.copy()
            n[ax.size // 2] = 0.0
        return 2.0 * np.pi * n / ax.extent

    def wavenumber_mesh(self, zero_nyquist: bool = False) -> list[np.ndarray]:
        """Per-axis wavenumber arrays broadcast to the full grid shape."""
        ks = [self.wavenumbers(i, zero_nyquist) for i in range(self.ndim)]
        return list(np.meshgrid(*ks, indexing="ij", sparse=True))


def grid_1d(n: int, extent: float = 1.0, name: str = "x") -> GridSpec:
    return GridSpec((Axis(name, n, extent),))


def grid_2d(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> GridSpec:
    return GridSpec((Axis("x", nx, lx), Axis("y", ny, ly)))


@dataclass(frozen=True)
class RealField:
    """Multi-channel real field on a grid; the universal state carrier."""

    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape[1:] != self.grid.shape:
            raise ContractError(
                f"data shape {d.shape} does not match (channels, {self.grid.shape})"
            )
        if d.ndim != self.grid.ndim + 1:
            raise ContractError("data must be channel-major: (channels, *grid.shape)")
        if not np.all(np.isfinite(d)):
            raise ContractError("field contains non-finite values")
        object.__setattr__(self, "data", np.ascontiguousarray(d))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def channel(self, c: int) -> np.ndarray:
        return self.data[c]


@dataclass(frozen=True)
class SpectralField:
    """Complex Fourier coefficients of a RealField, full FFT-order layout.

    ``hermitian`` asserts coeffs(-k) = conj(coeffs(k)); the inverse transform
    checks the implied real-valuedness and raises on violation.
    """

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)
    hermitian: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape[1:] != self.grid.shape or c.ndim != self.grid.ndim + 1:
            raise ContractError(
                f"coeffs shape {c.shape} does not match (channels, {self.grid.shape})"
            )
        object.__setattr__(self, "coeffs", np.ascontiguousarray(c))

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]
