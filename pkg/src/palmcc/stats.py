"""Statistics workbench for matching-difference fields.

Provides the empirical estimators used to study why masked matching works:
mean fields and patch covariances of difference fields, a stationarity
diagnostic that extracts the displacement kernel of a covariance, Fisher
discriminant weights, decidability of score distributions, and a
brute-force search for the most decidable difference coding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy import stats as sp_stats

from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    SingularCovarianceError,
)
from .matching import MatchDifference

MAX_PATCH_AREA = 4096
DELTA_VALUES = 4  # cyclic distances for six orientations: 0, 1, 2, 3


# ---------------------------------------------------------------------------
# accumulation


class RunningFieldStats:
    """Mergeable sums for mean/covariance of vectorized fields.

    Partial accumulators built on disjoint sample shards combine
    associatively via :meth:`merge`, so sharded accumulation gives exactly
    the same estimates as a single pass.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidParameterError("dim must be >= 1")
        self.dim = dim
        self.count = 0
        self._sum = np.zeros(dim)
        self._outer = np.zeros((dim, dim))

    def add(self, samples: np.ndarray) -> "RunningFieldStats":
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"expected samples of dimension {self.dim}, got shape {x.shape}"
            )
        self.count += x.shape[0]
        self._sum += x.sum(axis=0)
        self._outer += x.T @ x
        return self

    def merge(self, other: "RunningFieldStats") -> "RunningFieldStats":
        if other.dim != self.dim:
            raise DimensionMismatchError("cannot merge accumulators of different dims")
        merged = RunningFieldStats(self.dim)
        merged.count = self.count + other.count
        merged._sum = self._sum + other._sum
        merged._outer = self._outer + other._outer
        return merged

    def mean(self) -> np.ndarray:
        if self.count < 1:
            raise InvalidParameterError("no samples accumulated")
        return self._sum / self.count

    def covariance(self) -> np.ndarray:
        """Unbiased sample covariance (symmetrized against roundoff)."""
        if self.count < 2:
            raise InvalidParameterError("covariance needs at least two samples")
        n = self.count
        centered = self._outer - np.outer(self._sum, self._sum) / n
        cov = centered / (n - 1)
        return (cov + cov.T) / 2.0


# ---------------------------------------------------------------------------
# mean field, pmf, covariance


def _delta_stack(diffs: Iterable[MatchDifference | np.ndarray]) -> np.ndarray:
    arrays = []
    for d in diffs:
        arr = d.delta if isinstance(d, MatchDifference) else np.asarray(d)
        arrays.append(arr.astype(np.float64))
    if not arrays:
        raise InvalidParameterError("need at least one difference field")
    stack = np.stack(arrays)
    if stack.ndim != 3:
        raise DimensionMismatchError("difference fields must share one 2-D shape")
    return stack


def empirical_mean_field(diffs: Sequence[MatchDifference | np.ndarray]) -> np.ndarray:
    """Pixelwise sample mean of difference fields."""
    stack = _delta_stack(diffs)
    if stack.shape[0] < 2:
        raise InvalidParameterError("need at least two difference fields")
    return stack.mean(axis=0)


def impostor_difference_pmf(diffs: Sequence[MatchDifference | np.ndarray] | np.ndarray) -> np.ndarray:
    """Empirical frequencies of the difference values 0..3 over all pixels."""
    if isinstance(diffs, np.ndarray):
        values = diffs.ravel()
    else:
        values = np.concatenate([
            (d.delta if isinstance(d, MatchDifference) else np.asarray(d)).ravel()
            for d in diffs
        ])
    if values.size == 0:
        raise InvalidParameterError("no pixel samples given")
    counts = np.bincount(values.astype(np.int64), minlength=DELTA_VALUES)
    if len(counts) > DELTA_VALUES:
        raise InvalidParameterError("difference values above 3 encountered")
    return counts / values.size


def exhaustive_code_pair_pmf(n_orientations: int = 6) -> np.ndarray:
    """Exact difference pmf from enumerating all ordered code pairs.

    Under the equi-probable-orientation model every ordered pair is equally
    likely, so the enumeration is the exact distribution.
    """
    n = n_orientations
    counts = np.zeros(n // 2 + 1, dtype=np.int64)
    for a in range(n):
        for b in range(n):
            d = abs(a - b)
            counts[min(d, n - d)] += 1
    return counts / (n * n)


@dataclass(frozen=True)
class FieldStatistics:
    """Mean field and patch covariance of a set of difference fields."""

    mean_field: np.ndarray
    covariance: np.ndarray
    sample_count: int
    low_confidence: bool = False

    @property
    def patch_size(self) -> int:
        return self.mean_field.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "estimator": "field-statistics",
            "sample_count": self.sample_count,
            "values": {
                "patch_size": self.patch_size,
                "mean_field_mean": float(self.mean_field.mean()),
                "mean_field_min": float(self.mean_field.min()),
                "mean_field_max": float(self.mean_field.max()),
                "variance_mean": float(np.diag(self.covariance).mean()),
            },
            "tolerances": {"low_confidence": self.low_confidence},
        }


def empirical_covariance(
    diffs: Sequence[MatchDifference | np.ndarray],
    patch: tuple[int, int, int] | None = None,
) -> FieldStatistics:
    """Unbiased mean/covariance of vectorized (patch-restricted) fields.

    ``patch`` is (row0, col0, size); None uses the whole field.  The patch
    area is capped at MAX_PATCH_AREA and estimates from fewer than
    10 * size samples are flagged low-confidence rather than rejected.
    """
    stack = _delta_stack(diffs)
    count = stack.shape[0]
    if count < 2:
        raise InvalidParameterError("covariance needs at least two difference fields")
    if patch is not None:
        r0, c0, size = patch
        if size < 1 or r0 < 0 or c0 < 0 or r0 + size > stack.shape[1] or c0 + size > stack.shape[2]:
            raise InvalidParameterError(f"patch {patch} outside field of shape {stack.shape[1:]}")
        stack = stack[:, r0:r0 + size, c0:c0 + size]
    p = stack.shape[1]
    if stack.shape[1] != stack.shape[2]:
        raise InvalidParameterError("covariance patches must be square")
    if p * p > MAX_PATCH_AREA:
        raise InvalidParameterError(
            f"patch area {p * p} exceeds the {MAX_PATCH_AREA} limit"
        )
    acc = RunningFieldStats(p * p).add(stack.reshape(count, p * p))
    return FieldStatistics(
        mean_field=acc.mean().reshape(p, p),
        covariance=acc.covariance(),
        sample_count=count,
        low_confidence=count < 10 * p,
    )


# ---------------------------------------------------------------------------
# stationarity


@dataclass(frozen=True)
class StationarityReport:
    """How well a patch covariance is explained by pure displacement.

    Entries of the covariance are grouped by pixel displacement (di, dj);
    a stationary field has constant entries within each group.  group_cv
    averages std/|mean| over groups whose mean clears the noise floor, and
    the per-group means arranged on the displacement grid form ``kernel``.
    """

    group_cv: float
    kernel: np.ndarray
    mean_field_cv: float
    n_groups_used: int
    noise_floor: float
    max_displacement: int
    margin: int

    def to_json_dict(self) -> dict:
        return {
            "estimator": "stationarity",
            "sample_count": None,
            "values": {
                "group_cv": self.group_cv,
                "mean_field_cv": self.mean_field_cv,
                "kernel_center": float(self.kernel[self.max_displacement,
                                                   self.max_displacement]),
                "kernel_support": kernel_support(self.kernel),
                "n_groups_used": self.n_groups_used,
            },
            "tolerances": {"noise_floor": self.noise_floor,
                           "margin": self.margin},
        }


def stationarity_score(
    stats: FieldStatistics,
    max_displacement: int | None = None,
    noise_floor_fraction: float = 0.05,
) -> StationarityReport:
    """Group covariance entries by displacement and score their spread.

    A boundary margin of ``max_displacement`` pixels is excluded from the
    anchor set, since displacement structure is only approximate there.
    """
    p = stats.patch_size
    cov = stats.covariance
    if cov.shape != (p * p, p * p):
        raise DimensionMismatchError("covariance does not match the mean field patch")
    m = max_displacement if max_displacement is not None else min(5, (p - 1) // 2)
    if m < 1 or 2 * m >= p:
        raise InvalidParameterError(f"max_displacement {m} unusable for patch {p}")
    margin = m
    anchors_i, anchors_j = np.mgrid[margin:p - margin, margin:p - margin]
    anchors = (anchors_i * p + anchors_j).ravel()
    kernel = np.zeros((2 * m + 1, 2 * m + 1))
    spreads = np.zeros((2 * m + 1, 2 * m + 1))
    for di in range(-m, m + 1):
        for dj in range(-m, m + 1):
            partners = anchors + di * p + dj
            values = cov[anchors, partners]
            kernel[m + di, m + dj] = values.mean()
            spreads[m + di, m + dj] = values.std()
    floor = noise_floor_fraction * np.abs(kernel).max()
    usable = np.abs(kernel) >= floor
    if not usable.any():
        raise InvalidParameterError("all displacement groups are below the noise floor")
    group_cv = float((spreads[usable] / np.abs(kernel[usable])).mean())
    mean_abs = abs(float(stats.mean_field.mean()))
    mean_field_cv = (float(stats.mean_field.std() / mean_abs)
                     if mean_abs > 1e-12 else math.inf)
    return StationarityReport(
        group_cv=group_cv,
        kernel=kernel,
        mean_field_cv=mean_field_cv,
        n_groups_used=int(usable.sum()),
        noise_floor=float(floor),
        max_displacement=m,
        margin=margin,
    )


def kernel_support(kernel: np.ndarray, threshold_fraction: float = 0.05) -> int:
    """Side length of the smallest centered square holding all significant entries."""
    m = kernel.shape[0] // 2
    center = abs(kernel[m, m])
    if center == 0:
        raise InvalidParameterError("kernel has a zero center")
    significant = np.abs(kernel) >= threshold_fraction * center
    dis, djs = np.nonzero(significant)
    reach = int(np.maximum(np.abs(dis - m), np.abs(djs - m)).max())
    return 2 * reach + 1


def has_central_peak(kernel: np.ndarray) -> bool:
    m = kernel.shape[0] // 2
    return bool(np.abs(kernel).argmax() == m * kernel.shape[1] + m)


# ---------------------------------------------------------------------------
# Fisher weight


@dataclass(frozen=True)
class FisherWeightReport:
    """Discriminant direction and its alignment diagnostics.

    The weight solves (cov_genuine + cov_impostor + ridge*I) w = mean gap
    and is reported unnormalized (scaling the mean gap scales the weight).
    Cosines are absolute values: the discriminant direction is defined up
    to sign.
    """

    weight: np.ndarray
    ridge: float
    cosine_ones: float
    cosine_indicator: float | None

    def to_json_dict(self) -> dict:
        return {
            "estimator": "fisher-weight",
            "sample_count": None,
            "values": {
                "dim": int(self.weight.size),
                "cosine_ones": self.cosine_ones,
                "cosine_indicator": self.cosine_indicator,
                "weight_norm": float(np.linalg.norm(self.weight)),
            },
            "tolerances": {"ridge": self.ridge},
        }


def _abs_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(abs(a @ b) / (na * nb))


def fisher_weight(
    stats_genu: FieldStatistics,
    stats_impo: FieldStatistics,
    ridge: float | None = None,
    indicator: np.ndarray | None = None,
) -> FisherWeightReport:
    """Fisher discriminant weight of genuine vs impostor difference fields.

    ``ridge`` defaults to 1e-6 * trace/dim of the pooled covariance; pass 0
    to attempt the unregularized solve, which raises SingularCovarianceError
    when the pooled covariance is singular.
    """
    if stats_genu.mean_field.shape != stats_impo.mean_field.shape:
        raise DimensionMismatchError("genuine/impostor statistics have different patches")
    pooled = stats_genu.covariance + stats_impo.covariance
    dim = pooled.shape[0]
    if ridge is None:
        ridge = 1e-6 * float(np.trace(pooled)) / dim
    if ridge < 0:
        raise InvalidParameterError("ridge must be >= 0")
    gap = (stats_genu.mean_field - stats_impo.mean_field).ravel()
    system = pooled + ridge * np.eye(dim)
    try:
        factor = linalg.cho_factor(system)
        weight = linalg.cho_solve(factor, gap)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"pooled covariance not invertible at ridge={ridge}"
        ) from exc
    cos_ind = None
    if indicator is not None:
        ind = np.asarray(indicator, dtype=np.float64).ravel()
        if ind.size != dim:
            raise DimensionMismatchError("indicator does not match the patch size")
        cos_ind = _abs_cosine(weight, ind)
    return FisherWeightReport(
        weight=weight,
        ridge=float(ridge),
        cosine_ones=_abs_cosine(weight, np.ones(dim)),
        cosine_indicator=cos_ind,
    )


# ---------------------------------------------------------------------------
# decidability and coding schemes


@dataclass(frozen=True)
class DecidabilityReport:
    d_prime: float
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float

    def to_json_dict(self) -> dict:
        return {
            "estimator": "decidability",
            "sample_count": None,
            "values": {
                "d_prime": self.d_prime,
                "mu1": self.mu1, "mu2": self.mu2,
                "sigma1": self.sigma1, "sigma2": self.sigma2,
            },
            "tolerances": {},
        }


def decidability(
    scores_1: Sequence[float] | np.ndarray, scores_2: Sequence[float] | np.ndarray
) -> DecidabilityReport:
    """Separation |mu1 - mu2| / sqrt((s1^2 + s2^2) / 2) of two score sets."""
    a = np.asarray(scores_1, dtype=np.float64)
    b = np.asarray(scores_2, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InvalidParameterError("both score sets need at least two samples")
    s1 = float(a.std(ddof=1))
    s2 = float(b.std(ddof=1))
    pooled = (s1 * s1 + s2 * s2) / 2.0
    if pooled == 0.0:
        raise InvalidParameterError("zero pooled variance; decidability undefined")
    mu1, mu2 = float(a.mean()), float(b.mean())
    return DecidabilityReport(
        d_prime=abs(mu1 - mu2) / math.sqrt(pooled),
        mu1=mu1, mu2=mu2, sigma1=s1, sigma2=s2,
    )


def distribution_shape(scores: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Sample skewness and excess kurtosis of a score set."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size < 3:
        raise InvalidParameterError("need at least three samples")
    return float(sp_stats.skew(arr)), float(sp_stats.kurtosis(arr, fisher=True))


@dataclass(frozen=True)
class CodingScheme:
    """A value assignment z for the difference levels 0..3 plus their pmf."""

    z: tuple[float, float, float, float]
    pmf: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.z) != DELTA_VALUES or len(self.pmf) != DELTA_VALUES:
            raise InvalidParameterError("z and pmf must have four entries")
        if any(p < 0 for p in self.pmf):
            raise InvalidParameterError("pmf entries must be nonnegative")
        if abs(sum(self.pmf) - 1.0) > 1e-12:
            raise InvalidParameterError("pmf must sum to 1 within 1e-12")


def ideal_coding_dprime(z: Sequence[float], pmf: Sequence[float]) -> float:
    """Decidability of a coding under a perfect genuine match.

    The genuine score is pinned at z[0] (zero spread), the impostor score
    is z of a random difference with the given pmf; the separation index is
    |z0 - E z| / (sqrt(2) * std z).  Degenerate codings (zero impostor
    spread) score 0.
    """
    zs = np.asarray(z, dtype=np.float64)
    ps = np.asarray(pmf, dtype=np.float64)
    mu = float(ps @ zs)
    var = float(ps @ (zs - mu) ** 2)
    if var <= 0.0:
        return 0.0
    return abs(zs[0] - mu) / (math.sqrt(2.0) * math.sqrt(var))


def ideal_dprime_bound(p0: float) -> float:
    """Upper bound of ideal-case decidability given the probability of a 0 difference."""
    if not (0.0 < p0 < 1.0):
        raise InvalidParameterError("p0 must be in (0, 1)")
    return math.sqrt((1.0 - p0) / p0) / math.sqrt(2.0)


@dataclass(frozen=True)
class CodingSearchResult:
    best: CodingScheme
    best_dprime: float
    maximizers: tuple[tuple[float, float, float, float], ...]
    landscape: tuple[tuple[tuple[float, float, float, float], float], ...]
    bound: float

    @property
    def maximizers_are_binary_pattern(self) -> bool:
        """True when every maximizer sets z(1) = z(2) = z(3) != z(0)."""
        for z in self.maximizers:
            if not (z[1] == z[2] == z[3] and z[1] != z[0]):
                return False
        return True

    def to_json_dict(self) -> dict:
        return {
            "estimator": "coding-search",
            "sample_count": len(self.landscape),
            "values": {
                "best_z": list(self.best.z),
                "best_dprime": self.best_dprime,
                "bound": self.bound,
                "n_maximizers": len(self.maximizers),
                "binary_pattern": self.maximizers_are_binary_pattern,
            },
            "tolerances": {},
        }


def optimal_coding_search(
    pmf: Sequence[float], grid: Sequence[float]
) -> CodingSearchResult:
    """Exhaustive ideal-case decidability search over codings z with z(0) = 1.

    Every assignment of z(1), z(2), z(3) from ``grid`` is scored; the best
    scheme, all tied maximizers, and the full landscape are returned along
    with the analytic upper bound for the given pmf.
    """
    values = tuple(float(v) for v in grid)
    if len(set(values)) < 5:
        raise InvalidParameterError("grid needs at least five distinct values")
    if min(values) > 1e-9 or max(values) < 1.0 - 1e-9:
        raise InvalidParameterError("grid must span [0, 1]")
    ps = tuple(float(p) for p in pmf)
    landscape = []
    best_d = -1.0
    for z123 in product(values, repeat=3):
        z = (1.0,) + z123
        d = ideal_coding_dprime(z, ps)
        landscape.append((z, d))
        if d > best_d:
            best_d = d
    maximizers = tuple(z for z, d in landscape if d >= best_d - 1e-12)
    best_scheme = CodingScheme(z=maximizers[0], pmf=ps)
    return CodingSearchResult(
        best=best_scheme,
        best_dprime=best_d,
        maximizers=maximizers,
        landscape=tuple(landscape),
        bound=ideal_dprime_bound(ps[0]),
    )
