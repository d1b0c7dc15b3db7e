"""Six-orientation Gabor filter bank with zero-DC correction.

The complex kernel sampled by :func:`make_gabor` is

    G[i, j] = 1/(2*pi*sigma^2) * exp(-(x^2+y^2)/(2*sigma^2))
                               * exp(2*pi*1j*u*(x*cos(theta) + y*sin(theta)))

on the integer grid i, j in [-n, n] with (x, y) = (j, i): rows are y,
columns are x.  ``theta`` is the direction of the sinusoidal modulation;
the kernel's stripes run perpendicular to it, so this kernel responds most
strongly (most negatively, for a dark line on a bright background) to
lines whose tangent is ``theta + pi/2``.  :func:`make_bank` therefore
labels each filter with the line orientation it detects and builds the
kernel with the modulation rotated a quarter turn from that label.

Filters are applied correlation-style (no kernel flip).  Kernels are
conjugate-symmetric in magnitude, so either convention satisfies the same
orientation-selectivity properties; correlation is fixed for
reproducibility.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import DimensionMismatchError, InvalidParameterError

N_ORIENTATIONS = 6

# Standard parameter set for competitive orientation coding of palmprint
# ROIs around 128x128 px.  All entry points accept overrides.
DEFAULT_U = 0.0916
DEFAULT_SIGMA = 5.6179
DEFAULT_HALF_SIZE = 17

# |sum of kernel elements| below this (scaled by the element count) counts
# as zero-DC.
ZERO_DC_TOL = 1e-10


@dataclass(frozen=True)
class FilterParams:
    """Parameters of a single complex Gabor kernel.

    theta      modulation (wave) direction, radians in [0, pi)
    u          frequency of the sinusoidal wave, cycles per pixel
    sigma      standard deviation of the Gaussian envelope, pixels
    half_size  kernel spans (2*half_size+1) x (2*half_size+1) samples
    """

    theta: float
    u: float = DEFAULT_U
    sigma: float = DEFAULT_SIGMA
    half_size: int = DEFAULT_HALF_SIZE

    def __post_init__(self) -> None:
        if not (self.sigma > 0):
            raise InvalidParameterError(f"sigma must be > 0, got {self.sigma}")
        if not (self.u > 0):
            raise InvalidParameterError(f"u must be > 0, got {self.u}")
        if int(self.half_size) != self.half_size or self.half_size < 1:
            raise InvalidParameterError(
                f"half_size must be an integer >= 1, got {self.half_size}"
            )
        if not (0.0 <= self.theta < math.pi):
            raise InvalidParameterError(
                f"theta must lie in [0, pi), got {self.theta}"
            )

    @property
    def size(self) -> int:
        return 2 * self.half_size + 1


@dataclass(frozen=True)
class GaborFilter:
    """A sampled complex Gabor kernel together with its parameters."""

    params: FilterParams
    kernel: np.ndarray

    @property
    def is_zero_dc(self) -> bool:
        tol = ZERO_DC_TOL * self.kernel.size
        return abs(complex(self.kernel.sum())) < tol


@dataclass(frozen=True)
class LineModel:
    """Ideal dark-line cross-section: an upside-down Gaussian dip.

    The gray level at perpendicular distance d from the line center is
    amplitude * (1 - exp(-d^2 / (2*sigma_l^2))) + brightness, i.e. the
    center sits at ``brightness`` and the far field at
    ``amplitude + brightness``.
    """

    amplitude: float
    sigma_l: float
    brightness: float = 0.0

    def __post_init__(self) -> None:
        if not (self.amplitude > 0):
            raise InvalidParameterError(
                f"amplitude must be > 0, got {self.amplitude}"
            )
        if not (self.sigma_l > 0):
            raise InvalidParameterError(
                f"sigma_l must be > 0, got {self.sigma_l}"
            )

    def profile(self, distance: np.ndarray | float) -> np.ndarray | float:
        d = np.asarray(distance, dtype=np.float64)
        return self.amplitude * (1.0 - np.exp(-(d * d) / (2.0 * self.sigma_l**2))) + self.brightness


def make_gabor(params: FilterParams) -> GaborFilter:
    """Sample the complex Gabor kernel for ``params`` (not yet zero-DC)."""
    n = params.half_size
    grid = np.arange(-n, n + 1, dtype=np.float64)
    y, x = np.meshgrid(grid, grid, indexing="ij")
    envelope = np.exp(-(x * x + y * y) / (2.0 * params.sigma**2)) / (
        2.0 * math.pi * params.sigma**2
    )
    phase = 2.0 * math.pi * params.u * (
        x * math.cos(params.theta) + y * math.sin(params.theta)
    )
    kernel = envelope * np.exp(1j * phase)
    kernel.setflags(write=False)
    return GaborFilter(params=params, kernel=kernel)


def zero_dc(filt: GaborFilter) -> GaborFilter:
    """Subtract the kernel mean so the filter ignores constant brightness."""
    kernel = filt.kernel
    if not np.all(np.isfinite(kernel.real)) or not np.all(np.isfinite(kernel.imag)):
        raise InvalidParameterError("kernel contains non-finite values")
    adjusted = kernel - kernel.mean()
    adjusted.setflags(write=False)
    return GaborFilter(params=filt.params, kernel=adjusted)


@dataclass(frozen=True)
class FilterBank:
    """Ordered set of zero-DC Gabor filters, one per line orientation.

    ``orientations[k]`` is the tangent direction (radians) of the lines
    filter ``k`` detects; the underlying kernels carry the perpendicular
    modulation direction in their own params.
    """

    orientations: tuple[float, ...]
    filters: tuple[GaborFilter, ...]

    def __post_init__(self) -> None:
        if len(self.orientations) != len(self.filters):
            raise InvalidParameterError("one orientation label per filter required")
        if len(self.filters) < 2:
            raise InvalidParameterError("a bank needs at least two orientations")
        if any(b <= a for a, b in zip(self.orientations, self.orientations[1:])):
            raise InvalidParameterError("orientation labels must be strictly increasing")
        ref = self.filters[0].params
        for f in self.filters[1:]:
            p = f.params
            if (p.u, p.sigma, p.half_size) != (ref.u, ref.sigma, ref.half_size):
                raise InvalidParameterError("all filters must share u, sigma and half_size")

    def __len__(self) -> int:
        return len(self.filters)

    @property
    def u(self) -> float:
        return self.filters[0].params.u

    @property
    def sigma(self) -> float:
        return self.filters[0].params.sigma

    @property
    def half_size(self) -> int:
        return self.filters[0].params.half_size

    @property
    def is_zero_dc(self) -> bool:
        return all(f.is_zero_dc for f in self.filters)

    def fingerprint(self) -> str:
        """Hex SHA-256 over the canonical parameter encoding.

        Templates carry this so stale codes cannot silently match against
        a reconfigured bank.
        """
        parts = [
            "palmcc-bank/1",
            f"K={len(self.filters)}",
            f"u={self.u!r}",
            f"sigma={self.sigma!r}",
            f"n={self.half_size}",
            "orients=" + ",".join(repr(o) for o in self.orientations),
            "thetas=" + ",".join(repr(f.params.theta) for f in self.filters),
        ]
        return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()


def make_bank(
    n_orientations: int = N_ORIENTATIONS,
    u: float = DEFAULT_U,
    sigma: float = DEFAULT_SIGMA,
    half_size: int = DEFAULT_HALF_SIZE,
) -> FilterBank:
    """Build the zero-DC bank with orientation labels k*pi/K, k=0..K-1."""
    if n_orientations < 2:
        raise InvalidParameterError("need at least two orientations")
    orientations = []
    filters = []
    for k in range(n_orientations):
        label = k * math.pi / n_orientations
        wave = math.fmod(label + math.pi / 2.0, math.pi)
        params = FilterParams(theta=wave, u=u, sigma=sigma, half_size=half_size)
        filters.append(zero_dc(make_gabor(params)))
        orientations.append(label)
    return FilterBank(orientations=tuple(orientations), filters=tuple(filters))


def _as_image(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def convolve(image: np.ndarray, filt: GaborFilter, method: str = "direct") -> np.ndarray:
    """Real-part filter response, same size as ``image``.

    Applies the kernel's real part correlation-style with symmetric
    reflection padding at the borders.  ``method`` picks the spatial-domain
    path ("direct") or an FFT path ("fft"); both agree to well below 1e-6.
    """
    arr = _as_image(image)
    kreal = np.ascontiguousarray(filt.kernel.real)
    kh, kw = kreal.shape
    if arr.shape[0] < kh or arr.shape[1] < kw:
        raise DimensionMismatchError(
            f"image {arr.shape} smaller than filter {kreal.shape}"
        )
    if method == "direct":
        return ndimage.correlate(arr, kreal, mode="reflect")
    if method == "fft":
        n = filt.params.half_size
        padded = np.pad(arr, n, mode="symmetric")
        # correlation == convolution with the doubly flipped kernel
        return signal.fftconvolve(padded, kreal[::-1, ::-1], mode="valid")
    raise InvalidParameterError(f"unknown convolution method {method!r}")


def predicted_line_response(
    line: LineModel, params: FilterParams, delta_theta: float
) -> float:
    """Closed-form relative response of a zero-DC filter to an ideal line.

    ``delta_theta`` is the angle between the filter's orientation label
    (the line tangent it detects) and the actual line tangent.  The value
    is proportional to the response at the line center: most negative at
    delta_theta = 0, rising toward zero as the misalignment grows.  Used
    as an analytic oracle for orientation selectivity.
    """
    sigma2 = params.sigma**2
    scale = 2.0 * sigma2 * sigma2 / (sigma2 + line.sigma_l**2)
    exponent = (math.pi * params.u) ** 2 * scale * math.sin(delta_theta) ** 2
    return -line.amplitude * math.exp(-exponent)
