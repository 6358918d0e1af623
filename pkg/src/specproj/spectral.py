"""Forward/inverse transforms and spectral calculus on periodic grids.

Conventions fixed repo-wide:
  - forward FFT unnormalized, inverse divides by the grid size
    (Parseval: sum |f|^2 = sum |fhat|^2 / N_total);
  - differentiation multiplies by i*k with the Nyquist mode of even axes
    zeroed (sign-ambiguous there; zeroing keeps outputs real);
  - the Laplacian inverse maps every mode with zero effective wavenumber
    (mean, pure-Nyquist) to zero -- the gauge freedom of the potential.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, SymmetryError
from .grids import GridSpec, RealField, SpectralField

# max |imag| / scale tolerated when inverting a spectrum flagged Hermitian
_HERMITIAN_RTOL = 1e-12


def _axis_dims(grid: GridSpec) -> tuple[int, ...]:
    # channel axis is 0; grid axes follow
    return tuple(range(1, grid.ndim + 1))


def fft_forward(f: RealField) -> SpectralField:
    """Unnormalized DFT over all grid axes, channel by channel."""
    coeffs = np.fft.fftn(f.data, axes=_axis_dims(f.grid))
    return SpectralField(f.grid, coeffs, hermitian=True)


def fft_inverse(s: SpectralField) -> RealField:
    """Inverse DFT; requires and verifies the Hermitian flag."""
    if not s.hermitian:
        raise ContractError("fft_inverse requires a spectrum flagged hermitian")
    z = np.fft.ifftn(s.coeffs, axes=_axis_dims(s.grid))
    scale = np.max(np.abs(z))
    resid = np.max(np.abs(z.imag))
    if resid > _HERMITIAN_RTOL * max(scale, 1.0):
        raise SymmetryError(
            f"spectrum flagged hermitian but inverse has imaginary residue "
            f"{resid:.3e} (scale {scale:.3e})"
        )
    return RealField(s.grid, z.real)


def fft_center_shift(s: SpectralField, direction: str) -> SpectralField:
    """Move mode 0 to the array center ('forward') or back ('inverse')."""
    axes = _axis_dims(s.grid)
    if direction == "forward":
        coeffs = np.fft.fftshift(s.coeffs, axes=axes)
    elif direction == "inverse":
        coeffs = np.fft.ifftshift(s.coeffs, axes=axes)
    else:
        raise ContractError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return SpectralField(s.grid, coeffs, hermitian=s.hermitian)


def spectral_gradient(s: SpectralField, axis: int | str) -> SpectralField:
    """Multiply by i*k along one axis (Nyquist of even axes zeroed)."""
    i = s.grid.axis_index(axis) if isinstance(axis, str) else axis
    if not 0 <= i < s.grid.ndim:
        raise ContractError(f"axis {axis!r} out of range")
    k = s.grid.wavenumbers(i, zero_nyquist=True)
    shape = [1] * (s.grid.ndim + 1)
    shape[i + 1] = len(k)
    coeffs = s.coeffs * (1j * k.reshape(shape))
    return SpectralField(s.grid, coeffs, hermitian=s.hermitian)


def spectral_divergence(v: SpectralField, axes: tuple[int, ...] | None = None) -> SpectralField:
    """Sum_j i*k_j * coeff_j over the differentiated axes (one channel out)."""
    if axes is None:
        axes = tuple(range(v.grid.ndim))
    if v.channels != len(axes):
        raise ContractError(
            f"divergence needs one channel per differentiated axis: "
            f"{v.channels} channels vs {len(axes)} axes"
        )
    out = np.zeros((1,) + v.grid.shape, dtype=np.complex128)
    for c, i in enumerate(axes):
        k = v.grid.wavenumbers(i, zero_nyquist=True)
        shape = [1] * v.grid.ndim
        shape[i] = len(k)
        out[0] += 1j * k.reshape(shape) * v.coeffs[c]
    return SpectralField(v.grid, out, hermitian=v.hermitian)


def spectral_laplacian_inverse(s: SpectralField) -> SpectralField:
    """Divide by -|k|^2; modes with k = 0 (incl. pure Nyquist) map to zero."""
    ks = s.grid.wavenumber_mesh(zero_nyquist=True)
    k2 = np.zeros(s.grid.shape)
    for k in ks:
        k2 = k2 + k * k
    inv = np.zeros_like(k2)
    nz = k2 > 0
    inv[nz] = -1.0 / k2[nz]
    return SpectralField(s.grid, s.coeffs * inv, hermitian=s.hermitian)


def spectral_laplacian(s: SpectralField) -> SpectralField:
    """Multiply by -|k|^2 (same Nyquist convention as the gradient)."""
    ks = s.grid.wavenumber_mesh(zero_nyquist=True)
    k2 = np.zeros(s.grid.shape)
    for k in ks:
        k2 = k2 + k * k
    return SpectralField(s.grid, s.coeffs * (-k2), hermitian=s.hermitian)


def dealias_mask(grid: GridSpec, fraction: float = 2.0 / 3.0) -> np.ndarray:
    """Boolean keep-mask implementing the 2/3 rule over all grid axes."""
    keep = np.ones(grid.shape, dtype=bool)
    for i, ax in enumerate(grid.axes):
        n = np.fft.fftfreq(ax.size, d=1.0 / ax.size)
        cut = np.abs(n) <= fraction * (ax.size // 2)
        shape = [1] * grid.ndim
        shape[i] = ax.size
        keep &= cut.reshape(shape)
    return keep
