"""Angular difference fields and template matching scores.

All scores are dissimilarities normalized to [0, 1]: 0 for identical codes,
1 for maximally different ones.  Four method ids are supported:

    compcode  mean cyclic code distance over all pixels (linear mapping)
    m-cc      linear mapping restricted to the gallery's palm-line mask
    e-cc      exponential difference mapping exp(-k * delta), full frame
    cscc      exponential mapping restricted to the gallery mask

The gallery (enrolled) template always supplies the mask: each identity
carries its own pixel weighting, the probe's mask is ignored by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coding import CompetitiveCode, Template
from .errors import (
    DimensionMismatchError,
    FingerprintMismatchError,
    InvalidParameterError,
    NoOverlapError,
)

METHODS = ("compcode", "m-cc", "e-cc", "cscc")
_MASKED_METHODS = frozenset({"m-cc", "cscc"})
_MAPPED_METHODS = frozenset({"e-cc", "cscc"})

DEFAULT_MAPPING_K = 1.0
DEFAULT_WINDOW = 2
# below this fraction of the frame, an overlap is too small for the mean
# difference to be meaningful and the offset is rejected
MIN_VALID_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class MatchDifference:
    """Per-pixel cyclic code distance plus the pixels that may be scored."""

    delta: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        delta = np.asarray(self.delta)
        valid = np.asarray(self.valid, dtype=bool)
        if delta.shape != valid.shape or delta.ndim != 2:
            raise DimensionMismatchError("delta and valid must be equal 2-D grids")
        if delta.size and int(delta.max(initial=0)) > 3:
            raise InvalidParameterError("delta values must be in 0..3")
        object.__setattr__(self, "delta", delta.astype(np.uint8))
        object.__setattr__(self, "valid", valid)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatchDifference):
            return NotImplemented
        return (np.array_equal(self.delta, other.delta)
                and np.array_equal(self.valid, other.valid))


@dataclass(frozen=True)
class MatchScore:
    """Normalized dissimilarity with its pre-normalization mean and context."""

    value: float
    raw_mean: float
    n_valid: int
    offset: tuple[int, int]
    method: str

    def __post_init__(self) -> None:
        if not (-1e-12 <= self.value <= 1.0 + 1e-12):
            raise InvalidParameterError(f"score out of range: {self.value}")


def angular_difference(c1: CompetitiveCode, c2: CompetitiveCode) -> MatchDifference:
    """Cyclic distance between orientation indices, range 0..3 for 6 codes."""
    if c1.shape != c2.shape:
        raise DimensionMismatchError(f"code shapes differ: {c1.shape} vs {c2.shape}")
    if c1.n_orientations != c2.n_orientations:
        raise InvalidParameterError("codes use different orientation counts")
    n = c1.n_orientations
    d = np.abs(c1.codes.astype(np.int16) - c2.codes.astype(np.int16))
    delta = np.minimum(d, n - d).astype(np.uint8)
    return MatchDifference(delta=delta, valid=np.ones(c1.shape, dtype=bool))


def _check_pair(t1: Template, t2: Template) -> None:
    if t1.shape != t2.shape:
        raise DimensionMismatchError(
            f"template shapes differ: {t1.shape} vs {t2.shape}"
        )
    if t1.bank_fingerprint != t2.bank_fingerprint:
        raise FingerprintMismatchError(
            "templates were extracted with different filter banks"
        )


def _exp_table(mapping_k: float) -> np.ndarray:
    return np.exp(-mapping_k * np.arange(4, dtype=np.float64))


def _mapped_mean(delta: np.ndarray, mapping_k: float | None) -> float:
    """Mean of the (optionally exponentially mapped) differences."""
    if mapping_k is None:
        return float(delta.mean())
    return float(_exp_table(mapping_k)[delta].mean())


def _normalize(raw_mean: float, mapping_k: float | None, max_delta: int = 3) -> float:
    if mapping_k is None:
        return raw_mean / max_delta
    floor = math.exp(-mapping_k * max_delta)
    return 1.0 - (raw_mean - floor) / (1.0 - floor)


def compcode_distance(t1: Template, t2: Template) -> MatchScore:
    """Mean angular difference over the full frame, normalized by 3."""
    _check_pair(t1, t2)
    diff = angular_difference(t1.code, t2.code)
    raw = float(diff.delta.mean())
    return MatchScore(value=raw / 3.0, raw_mean=raw,
                      n_valid=diff.delta.size, offset=(0, 0), method="compcode")


def cscc_distance(
    t1_gallery: Template, t2_probe: Template, mapping_k: float = DEFAULT_MAPPING_K
) -> MatchScore:
    """Exponentially mapped difference over the gallery's palm-line mask.

    Similarity s = mean(exp(-k * delta)) over kept pixels is rescaled so
    identical codes give 0 and uniformly maximal differences give 1.
    """
    if not (mapping_k > 0):
        raise InvalidParameterError("mapping_k must be > 0")
    _check_pair(t1_gallery, t2_probe)
    keep = t1_gallery.mask.mask
    if not keep.any():
        raise NoOverlapError("gallery mask keeps no pixels")
    diff = angular_difference(t1_gallery.code, t2_probe.code)
    raw = _mapped_mean(diff.delta[keep], mapping_k)
    return MatchScore(value=_normalize(raw, mapping_k), raw_mean=raw,
                      n_valid=int(keep.sum()), offset=(0, 0), method="cscc")


def _offset_slices(shape: tuple[int, int], dx: int, dy: int):
    """Slices aligning gallery[i, j] with probe[i + dy, j + dx]."""
    h, w = shape
    g_rows = slice(max(0, -dy), h - max(0, dy))
    p_rows = slice(max(0, dy), h - max(0, -dy))
    g_cols = slice(max(0, -dx), w - max(0, dx))
    p_cols = slice(max(0, dx), w - max(0, -dx))
    return (g_rows, g_cols), (p_rows, p_cols)


def aligned_distance(
    t1_gallery: Template,
    t2_probe: Template,
    window: int = DEFAULT_WINDOW,
    method: str = "cscc",
    mapping_k: float = DEFAULT_MAPPING_K,
    min_valid_fraction: float = MIN_VALID_FRACTION,
) -> MatchScore:
    """Best score over integer probe translations in [-window, window]^2.

    The probe is shifted against the gallery; pixels leaving the overlap
    are invalid, masked methods additionally gate by the gallery mask, and
    the mean is renormalized over the surviving pixels.  Offsets keeping
    fewer than ``min_valid_fraction`` of the frame are rejected; the
    first strictly smaller score (scanning dy, then dx) wins ties.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    if window < 0:
        raise InvalidParameterError("window must be >= 0")
    if method in _MAPPED_METHODS and not (mapping_k > 0):
        raise InvalidParameterError("mapping_k must be > 0")
    _check_pair(t1_gallery, t2_probe)
    h, w = t1_gallery.shape
    min_valid = max(1, int(math.ceil(min_valid_fraction * h * w)))
    k = mapping_k if method in _MAPPED_METHODS else None
    gallery_mask = t1_gallery.mask.mask if method in _MASKED_METHODS else None
    gallery_codes = t1_gallery.code.codes.astype(np.int16)
    probe_codes = t2_probe.code.codes.astype(np.int16)
    n_orient = t1_gallery.code.n_orientations

    # every method reduces to a 4-bin histogram of delta dotted with a
    # mapping table (identity for linear methods, exp(-k v) otherwise)
    n_delta = n_orient // 2 + 1
    mapping = _exp_table(k) if k is not None else np.arange(n_delta, dtype=np.float64)
    mask_f = gallery_mask.astype(np.float64) if gallery_mask is not None else None
    best: MatchScore | None = None
    for dy in range(-window, window + 1):
        for dx in range(-window, window + 1):
            (g_r, g_c), (p_r, p_c) = _offset_slices((h, w), dx, dy)
            g = gallery_codes[g_r, g_c]
            p = probe_codes[p_r, p_c]
            d = np.abs(g - p)
            delta = np.minimum(d, n_orient - d)
            if mask_f is None:
                counts = np.bincount(delta.ravel(), minlength=n_delta)
                n_valid = delta.size
            else:
                counts = np.bincount(delta.ravel(),
                                     weights=mask_f[g_r, g_c].ravel(),
                                     minlength=n_delta)
                n_valid = int(counts.sum())
            if n_valid < min_valid:
                continue
            raw = float(mapping @ counts) / n_valid
            value = _normalize(raw, k)
            if best is None or value < best.value:
                best = MatchScore(value=value, raw_mean=raw, n_valid=n_valid,
                                  offset=(dx, dy), method=method)
    if best is None:
        raise NoOverlapError(
            f"no offset within window {window} keeps {min_valid} valid pixels"
        )
    return best
