"""Competitive orientation coding and palm-line mask extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .filterbank import FilterBank, convolve

CODE_DTYPE = np.uint8


@dataclass(frozen=True, eq=False)
class CompetitiveCode:
    """Per-pixel index of the orientation with the minimal filter response."""

    codes: np.ndarray
    n_orientations: int = 6

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise InvalidParameterError("codes must be a 2-D grid")
        if codes.size and int(codes.max(initial=0)) >= self.n_orientations:
            raise InvalidParameterError(
                f"code values must be < {self.n_orientations}"
            )
        object.__setattr__(self, "codes", codes.astype(CODE_DTYPE))

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompetitiveCode):
            return NotImplemented
        return (self.n_orientations == other.n_orientations
                and self.codes.shape == other.codes.shape
                and bool(np.array_equal(self.codes, other.codes)))


@dataclass(frozen=True, eq=False)
class PalmLineMask:
    """Binary keep-mask over the strongest-response fraction of pixels."""

    mask: np.ndarray
    keep_fraction: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise InvalidParameterError("mask must be a 2-D grid")
        if not (0.0 < self.keep_fraction <= 1.0):
            raise InvalidParameterError("keep_fraction must be in (0, 1]")
        object.__setattr__(self, "mask", mask)

    @property
    def coverage(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, PalmLineMask):
            return NotImplemented
        return (self.keep_fraction == other.keep_fraction
                and self.degenerate == other.degenerate
                and self.mask.shape == other.mask.shape
                and bool(np.array_equal(self.mask, other.mask)))


@dataclass(frozen=True, eq=False)
class Template:
    """Unit of enrollment and matching: code, mask, identity, bank stamp."""

    code: CompetitiveCode
    mask: PalmLineMask
    subject_id: str
    sample_id: str
    bank_fingerprint: str

    def __post_init__(self) -> None:
        if self.code.shape != self.mask.mask.shape:
            raise DimensionMismatchError("code and mask dimensions differ")
        if not self.bank_fingerprint:
            raise InvalidParameterError("bank_fingerprint must be nonempty")

    @property
    def shape(self) -> tuple[int, int]:
        return self.code.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Template):
            return NotImplemented
        return (self.subject_id == other.subject_id
                and self.sample_id == other.sample_id
                and self.bank_fingerprint == other.bank_fingerprint
                and self.code == other.code
                and self.mask == other.mask)


def _normalized_image(image: np.ndarray) -> np.ndarray:
    """Float image with its mean removed.

    For integer images the subtracted value is the exact integer floor-mean
    computed in exact arithmetic, so an integer brightness offset cancels
    bit-for-bit and the downstream responses (hence codes) are identical.
    """
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionMismatchError("image must be a nonempty 2-D array")
    if np.issubdtype(arr.dtype, np.integer):
        total = int(arr.astype(np.int64).sum())
        return arr.astype(np.float64) - float(total // arr.size)
    arr = arr.astype(np.float64)
    return arr - arr.mean()


def _require_zero_dc(bank: FilterBank) -> None:
    if not bank.is_zero_dc:
        raise InvalidParameterError("filter bank must be zero-DC adjusted")


def orientation_responses(
    image: np.ndarray, bank: FilterBank, method: str = "fft"
) -> np.ndarray:
    """Stack of real-part responses, shape (K, H, W), brightness-normalized."""
    _require_zero_dc(bank)
    arr = _normalized_image(image)
    return np.stack([convolve(arr, f, method=method) for f in bank.filters])


def competitive_code(
    image: np.ndarray, bank: FilterBank, method: str = "fft"
) -> CompetitiveCode:
    """Per-pixel argmin orientation index; ties break to the smallest index."""
    responses = orientation_responses(image, bank, method=method)
    codes = np.argmin(responses, axis=0).astype(CODE_DTYPE)
    return CompetitiveCode(codes=codes, n_orientations=len(bank))


def response_strength(
    responses: np.ndarray, statistic: str = "max_abs"
) -> np.ndarray:
    """Per-pixel orientation-response strength used for masking.

    "max_abs" takes max_k |response_k|; "min_response" takes the magnitude
    of the most negative response (line evidence only).
    """
    if statistic == "max_abs":
        return np.abs(responses).max(axis=0)
    if statistic == "min_response":
        return np.maximum(-responses.min(axis=0), 0.0)
    raise InvalidParameterError(f"unknown strength statistic {statistic!r}")


def _mask_from_strength(
    strength: np.ndarray, keep_fraction: float
) -> PalmLineMask:
    if not (0.0 < keep_fraction <= 1.0):
        raise InvalidParameterError("keep_fraction must be in (0, 1]")
    size = strength.size
    spread = float(strength.max() - strength.min()) if size else 0.0
    scale = max(1.0, float(np.abs(strength).max(initial=0.0)))
    if spread <= 1e-12 * scale:
        # constant strength map: no percentile is meaningful
        return PalmLineMask(mask=np.ones(strength.shape, dtype=bool),
                            keep_fraction=keep_fraction, degenerate=True)
    n_keep = int(round(keep_fraction * size))
    n_keep = min(size, max(1, n_keep))
    order = np.argsort(-strength.ravel(), kind="stable")
    mask = np.zeros(size, dtype=bool)
    mask[order[:n_keep]] = True
    return PalmLineMask(mask=mask.reshape(strength.shape),
                        keep_fraction=keep_fraction)


def palm_line_mask(
    image: np.ndarray,
    bank: FilterBank,
    keep_fraction: float = 0.70,
    statistic: str = "max_abs",
    method: str = "fft",
) -> PalmLineMask:
    """Keep the top ``keep_fraction`` of pixels by orientation-response strength.

    The kept count is exact (top-k of the flattened strength map with
    stable tie-breaking), so masks are nested across keep fractions.  A
    constant strength map yields an all-true mask flagged ``degenerate``.
    """
    responses = orientation_responses(image, bank, method=method)
    return _mask_from_strength(response_strength(responses, statistic), keep_fraction)


def encode_template(
    image: np.ndarray,
    bank: FilterBank,
    keep_fraction: float = 0.70,
    subject_id: str = "",
    sample_id: str = "",
    statistic: str = "max_abs",
    method: str = "fft",
) -> Template:
    """Code + mask from one response stack, stamped with the bank fingerprint."""
    responses = orientation_responses(image, bank, method=method)
    codes = np.argmin(responses, axis=0).astype(CODE_DTYPE)
    mask = _mask_from_strength(response_strength(responses, statistic), keep_fraction)
    return Template(
        code=CompetitiveCode(codes=codes, n_orientations=len(bank)),
        mask=mask,
        subject_id=subject_id,
        sample_id=sample_id,
        bank_fingerprint=bank.fingerprint(),
    )
