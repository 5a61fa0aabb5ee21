"""Periodic blur operators and point-spread-function generators.

The forward operator and its adjoint are circular convolutions realized
in the frequency domain.  All PSFs are nonnegative and normalized to sum
one, so the resulting circulant matrix is doubly stochastic: constant
images are fixed points and total flux is conserved.
"""

from dataclasses import dataclass

import numpy as np
from numpy.fft import fft2, ifft2

from .image import load_f64img, save_f64img

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Psf:
    """Small convolution kernel with odd support, centered at (h//2, w//2)."""

    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValueError("PSF kernel must be 2D with odd dimensions")
        if np.any(k < 0):
            raise ValueError("PSF kernel must be nonnegative")
        if abs(k.sum() - 1.0) > _SUM_TOL:
            raise ValueError("PSF kernel must sum to 1")
        object.__setattr__(self, "kernel", k)

    @property
    def center(self):
        return self.kernel.shape[0] // 2, self.kernel.shape[1] // 2

    def save(self, path):
        save_f64img(path, self.kernel)

    @classmethod
    def load(cls, path):
        return cls(load_f64img(path))


def gaussian_psf(size, sigma):
    """Radially symmetric Gaussian kernel on an odd size x size support."""
    if size < 3 or size % 2 == 0:
        raise ValueError("size must be an odd integer >= 3")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    c = size // 2
    u = np.arange(size, dtype=np.float64) - c
    k = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma**2))
    return Psf(k / k.sum())


def motion_psf(length, angle_deg, supersample=64):
    """Linear-motion kernel: a unit-mass line segment rasterized to pixels.

    The segment has the given length, passes through the kernel center at
    the given angle, and is sampled at `supersample` points per unit
    length (midpoint rule) before binning to the pixel grid.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if length == 1:
        return Psf(np.ones((1, 1)))
    theta = np.deg2rad(angle_deg)
    # Angle measured counterclockwise from the horizontal axis; rows grow
    # downward, hence the sign flip on the vertical component.
    dx, dy = np.cos(theta), -np.sin(theta)
    nsamp = max(int(round(supersample * length)), 2)
    t = (np.arange(nsamp) + 0.5) / nsamp * length - length / 2.0
    px = t * dx
    py = t * dy
    ix = np.rint(px).astype(int)
    iy = np.rint(py).astype(int)
    m = max(int(np.abs(ix).max()), int(np.abs(iy).max()))
    size = 2 * m + 1
    k = np.zeros((size, size))
    np.add.at(k, (iy + m, ix + m), 1.0)
    return Psf(k / k.sum())


def disk_psf(radius, supersample=33):
    """Out-of-focus kernel: per-pixel area fraction covered by a disk.

    Coverage is estimated on a supersample x supersample subpixel grid.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    m = int(np.ceil(radius + 0.5))
    size = 2 * m + 1
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    centers = np.arange(size, dtype=np.float64) - m
    # Subpixel center coordinates for every pixel along one axis.
    coords = centers[:, None] + sub[None, :]  # (size, supersample)
    xx = coords.reshape(-1)
    d2 = xx[:, None] ** 2 + xx[None, :] ** 2
    inside = (d2 <= radius**2).astype(np.float64)
    k = inside.reshape(size, supersample, size, supersample).sum(axis=(1, 3))
    k /= supersample**2
    total = k.sum()
    if total == 0:
        raise ValueError("disk too small to cover any subpixel")
    # Trim all-zero border rows/columns (radius < half pixel leaves a delta).
    nz = np.nonzero(k)
    lo = min(nz[0].min(), nz[1].min())
    hi = max(nz[0].max(), nz[1].max())
    lo = min(lo, size - 1 - hi)
    k = k[lo : size - lo, lo : size - lo]
    return Psf(k / total)


class BlurOperator:
    """Circular convolution by a PSF on a fixed r x s grid, via FFT.

    Immutable after construction; `apply` and `apply_adjoint` are pure.
    """

    def __init__(self, psf, r, s):
        kernel = psf.kernel
        kh, kw = kernel.shape
        if kh > r or kw > s:
            raise ValueError("PSF support exceeds image dimensions")
        padded = np.zeros((r, s))
        padded[:kh, :kw] = kernel
        cy, cx = psf.center
        # Circularly center the kernel at pixel (0, 0) so that applying the
        # operator to a delta at the origin reproduces the PSF unshifted.
        padded = np.roll(padded, (-cy, -cx), axis=(0, 1))
        self.r = r
        self.s = s
        self._otf = fft2(padded)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.r, self.s):
            raise ValueError(f"image shape {x.shape} does not match operator "
                             f"({self.r}, {self.s})")
        return x

    def apply(self, x):
        x = self._check(x)
        return np.real(ifft2(self._otf * fft2(x)))

    def apply_adjoint(self, y):
        y = self._check(y)
        return np.real(ifft2(np.conj(self._otf) * fft2(y)))
