"""Prebuilt statistical studies over synthetic data.

These pipelines wire the generator, coder, and matcher into the estimators
so that the same code path serves the CLI statistics command, the
acceptance suite, and ad-hoc exploration:

* random-code impostor study: difference pmf, mean field, and the shape of
  the distance distribution under uniformly random codes;
* rendered-palm impostor/genuine difference fields for covariance and
  stationarity work;
* exactly stationary reference fields for checking that the Fisher weight
  degenerates to uniform weighting under constant-mean stationary inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import Template, competitive_code, encode_template
from .errors import InvalidParameterError
from .filterbank import FilterBank
from .matching import angular_difference
from .stats import (
    FieldStatistics,
    RunningFieldStats,
    distribution_shape,
    impostor_difference_pmf,
)
from .synth import SynthConfig, generate_palm, generate_sample_set, impostor_config


@dataclass(frozen=True)
class RandomCodeStudy:
    """Distance statistics of uniformly random code pairs."""

    pmf: np.ndarray
    mean_field: np.ndarray
    raw_means: np.ndarray
    grand_mean: float
    skewness: float
    excess_kurtosis: float
    n_pairs: int

    def to_json_dict(self) -> dict:
        return {
            "estimator": "random-code-impostor",
            "sample_count": self.n_pairs,
            "values": {
                "pmf": [float(p) for p in self.pmf],
                "grand_mean": self.grand_mean,
                "mean_field_min": float(self.mean_field.min()),
                "mean_field_max": float(self.mean_field.max()),
                "skewness": self.skewness,
                "excess_kurtosis": self.excess_kurtosis,
            },
            "tolerances": {},
        }


def random_code_impostor_study(
    n_pairs: int = 10_000,
    size: int = 64,
    seed: int = 0,
    n_orientations: int = 6,
    batch: int = 500,
) -> RandomCodeStudy:
    """Match ``n_pairs`` pairs of uniform random codes and summarize."""
    if n_pairs < 2:
        raise InvalidParameterError("n_pairs must be >= 2")
    rng = np.random.default_rng(seed)
    counts = np.zeros(4, dtype=np.int64)
    pixel_sum = np.zeros((size, size))
    raw_means = np.empty(n_pairs)
    done = 0
    while done < n_pairs:
        m = min(batch, n_pairs - done)
        c1 = rng.integers(0, n_orientations, size=(m, size, size), dtype=np.int16)
        c2 = rng.integers(0, n_orientations, size=(m, size, size), dtype=np.int16)
        d = np.abs(c1 - c2)
        delta = np.minimum(d, n_orientations - d)
        counts += np.bincount(delta.ravel(), minlength=4)
        pixel_sum += delta.sum(axis=0)
        raw_means[done:done + m] = delta.mean(axis=(1, 2))
        done += m
    skew, kurt = distribution_shape(raw_means)
    return RandomCodeStudy(
        pmf=counts / counts.sum(),
        mean_field=pixel_sum / n_pairs,
        raw_means=raw_means,
        grand_mean=float(raw_means.mean()),
        skewness=skew,
        excess_kurtosis=kurt,
        n_pairs=n_pairs,
    )


def impostor_palm_difference_fields(
    bank: FilterBank,
    base_config: SynthConfig,
    n_identities: int,
    n_pairs: int,
    method: str = "fft",
) -> list[np.ndarray]:
    """Difference fields of distinct rendered identities (first n_pairs of all pairs)."""
    if n_identities < 2:
        raise InvalidParameterError("need at least two identities")
    codes = []
    for i in range(n_identities):
        sample = generate_palm(impostor_config(base_config, i))
        codes.append(competitive_code(sample.image, bank, method=method))
    diffs = []
    for i in range(n_identities):
        for j in range(i + 1, n_identities):
            if len(diffs) >= n_pairs:
                return diffs
            diffs.append(angular_difference(codes[i], codes[j]).delta)
    if len(diffs) < n_pairs:
        raise InvalidParameterError(
            f"{n_identities} identities yield only {len(diffs)} pairs, need {n_pairs}"
        )
    return diffs


def genuine_palm_difference_fields(
    bank: FilterBank,
    config: SynthConfig,
    n_samples: int,
    max_translate: int = 1,
    noise_std: float | None = None,
    method: str = "fft",
) -> tuple[list[np.ndarray], np.ndarray]:
    """All within-identity difference fields plus the identity's line mask."""
    samples = generate_sample_set(config, n_samples,
                                  max_translate=max_translate,
                                  noise_std=noise_std)
    codes = [competitive_code(s.image, bank, method=method) for s in samples]
    diffs = []
    for i in range(len(codes)):
        for j in range(i + 1, len(codes)):
            diffs.append(angular_difference(codes[i], codes[j]).delta)
    return diffs, samples[0].line_mask_gt


def stationary_reference_statistics(
    patch: int = 16,
    n_samples: int = 4000,
    mean: float = 1.0,
    scale: float = 0.5,
    smooth_sigma: float = 1.0,
    seed: int = 0,
) -> FieldStatistics:
    """Statistics of exactly stationary, constant-mean random fields.

    Fields are iid Gaussian noise smoothed circularly (on the torus), so
    the covariance depends on displacement only, boundary included.
    """
    rng = np.random.default_rng(seed)
    ii = np.arange(patch)
    dist = np.minimum(ii, patch - ii).astype(np.float64)
    d2 = dist[:, None] ** 2 + dist[None, :] ** 2
    kernel = np.exp(-d2 / (2.0 * smooth_sigma**2))
    kernel /= np.sqrt((kernel**2).sum())
    kernel_f = np.fft.rfft2(kernel)
    acc = RunningFieldStats(patch * patch)
    for start in range(0, n_samples, 256):
        m = min(256, n_samples - start)
        noise = rng.standard_normal((m, patch, patch))
        smoothed = np.fft.irfft2(np.fft.rfft2(noise, axes=(1, 2)) * kernel_f,
                                 s=(patch, patch), axes=(1, 2))
        fields = mean + scale * smoothed
        acc.add(fields.reshape(m, patch * patch))
    return FieldStatistics(
        mean_field=acc.mean().reshape(patch, patch),
        covariance=acc.covariance(),
        sample_count=n_samples,
        low_confidence=n_samples < 10 * patch,
    )


def synth_benchmark_templates(
    bank: FilterBank,
    base_config: SynthConfig,
    n_subjects: int,
    n_samples: int,
    max_translate: int = 2,
    noise_std: float | None = None,
    keep_fraction: float = 0.70,
    method: str = "fft",
) -> list[Template]:
    """Encoded templates of a synthetic identification benchmark."""
    templates = []
    for s in range(n_subjects):
        config = impostor_config(base_config, s)
        samples = generate_sample_set(config, n_samples,
                                      max_translate=max_translate,
                                      noise_std=noise_std)
        for a, sample in enumerate(samples):
            templates.append(encode_template(
                sample.image, bank, keep_fraction=keep_fraction,
                subject_id=f"s{s:03d}", sample_id=f"a{a:02d}",
                method=method,
            ))
    return templates


def template_difference_fields(
    templates: list[Template],
    pairs,
) -> list[np.ndarray]:
    """Difference fields for explicit (ref, ref) pairs over stored templates."""
    index = {(t.subject_id, t.sample_id): t for t in templates}
    return [
        angular_difference(index[a].code, index[b].code).delta
        for a, b in pairs
    ]
