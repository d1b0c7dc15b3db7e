"""All-pairs benchmark: pair planning, ROC/EER/FRR metrics, method reports.

Scores are dissimilarities throughout (lower = more similar); the matching
layer already normalizes every method to [0, 1], so this module is
metric-agnostic.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coding import Template
from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    PalmccError,
)
from .matching import DEFAULT_MAPPING_K, DEFAULT_WINDOW, METHODS, MIN_VALID_FRACTION, aligned_distance
from .stats import decidability
from .store import Manifest

logger = logging.getLogger(__name__)

SCHEMA = "eval/1"
SampleRef = tuple[str, str]

# above this many candidate cross pairs, impostor sampling switches from
# enumeration to rejection sampling to bound memory
_ENUMERATION_LIMIT = 30_000_000


@dataclass(frozen=True)
class PairPlan:
    """Deterministic genuine/impostor comparison lists over sample refs."""

    genuine_pairs: tuple[tuple[SampleRef, SampleRef], ...]
    impostor_pairs: tuple[tuple[SampleRef, SampleRef], ...]
    sampling_seed: int


def _as_refs(dataset) -> list[SampleRef]:
    if isinstance(dataset, Manifest):
        return [(e.subject_id, e.sample_id) for e in dataset.active_entries()]
    return [(str(s), str(a)) for s, a in dataset]


def plan_pairs(dataset, max_impostor: int, seed: int = 0) -> PairPlan:
    """All genuine pairs plus up to ``max_impostor`` sampled cross pairs.

    ``dataset`` is a manifest or a sequence of (subject_id, sample_id)
    refs.  Impostor pairs are drawn uniformly without replacement from the
    unordered cross-subject pairs, deterministically in ``seed``.
    """
    refs = _as_refs(dataset)
    if len(set(refs)) != len(refs):
        raise InsufficientDataError("duplicate (subject, sample) refs in dataset")
    if max_impostor < 1:
        raise InvalidParameterError("max_impostor must be >= 1")
    subjects: dict[str, list[SampleRef]] = {}
    for ref in refs:
        subjects.setdefault(ref[0], []).append(ref)
    if len(subjects) < 2:
        raise InsufficientDataError("need at least two subjects")
    for subject, samples in subjects.items():
        if len(samples) < 2:
            raise InsufficientDataError(
                f"subject {subject!r} has fewer than two samples"
            )
    genuine = []
    for subject in subjects:
        samples = subjects[subject]
        for i in range(len(samples)):
            for j in range(i + 1, len(samples)):
                genuine.append((samples[i], samples[j]))

    n = len(refs)
    labels = {subject: i for i, subject in enumerate(subjects)}
    subject_arr = np.array([labels[ref[0]] for ref in refs])
    subject_ids = [ref[0] for ref in refs]
    total_pairs = n * (n - 1) // 2
    rng = np.random.default_rng(seed)
    impostor: list[tuple[SampleRef, SampleRef]]
    if total_pairs <= _ENUMERATION_LIMIT:
        ii, jj = np.triu_indices(n, k=1)
        cross_pos = np.nonzero(subject_arr[ii] != subject_arr[jj])[0]
        if len(cross_pos) > max_impostor:
            chosen = rng.choice(len(cross_pos), size=max_impostor, replace=False)
            cross_pos = cross_pos[np.sort(chosen)]
        impostor = [(refs[ii[pos]], refs[jj[pos]]) for pos in cross_pos]
    else:
        picked: dict[tuple[int, int], None] = {}
        while len(picked) < max_impostor:
            a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
            if a == b or subject_ids[a] == subject_ids[b]:
                continue
            key = (a, b) if a < b else (b, a)
            picked.setdefault(key, None)
        impostor = [(refs[a], refs[b]) for a, b in picked]
    if not impostor:
        raise InsufficientDataError("no impostor pairs available")
    return PairPlan(genuine_pairs=tuple(genuine),
                    impostor_pairs=tuple(impostor),
                    sampling_seed=seed)


# ---------------------------------------------------------------------------
# ROC / EER / FRR


@dataclass(frozen=True, eq=False)
class ROCCurve:
    """FAR/GAR over swept thresholds (both nondecreasing in threshold)."""

    thresholds: np.ndarray
    far: np.ndarray
    gar: np.ndarray
    n_genuine: int
    n_impostor: int

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.far, self.gar])


def roc(genuine_scores, impostor_scores) -> ROCCurve:
    """Curve over all distinct score values plus the two infinite sentinels.

    At threshold t: FAR = fraction of impostor scores < t, GAR = fraction
    of genuine scores < t.
    """
    gen = np.asarray(genuine_scores, dtype=np.float64)
    imp = np.asarray(impostor_scores, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise InvalidParameterError("both score sets must be nonempty")
    thresholds = np.concatenate([
        [-np.inf], np.unique(np.concatenate([gen, imp])), [np.inf]
    ])
    gen_sorted = np.sort(gen)
    imp_sorted = np.sort(imp)
    far = np.searchsorted(imp_sorted, thresholds, side="left") / imp.size
    gar = np.searchsorted(gen_sorted, thresholds, side="left") / gen.size
    return ROCCurve(thresholds=thresholds, far=far, gar=gar,
                    n_genuine=int(gen.size), n_impostor=int(imp.size))


def eer(curve: ROCCurve) -> float:
    """Linear interpolation of the crossing FAR = 1 - GAR."""
    frr = 1.0 - curve.gar
    diff = curve.far - frr
    idx = int(np.argmax(diff >= 0.0))
    if diff[idx] == 0.0 or idx == 0:
        return float(curve.far[idx])
    d0, d1 = diff[idx - 1], diff[idx]
    alpha = -d0 / (d1 - d0)
    return float(curve.far[idx - 1] + alpha * (curve.far[idx] - curve.far[idx - 1]))


@dataclass(frozen=True)
class FrrAtFar:
    far_target: float
    value: float
    extrapolated: bool


def frr_at_far(curve: ROCCurve, far_target: float) -> FrrAtFar:
    """FRR read from the curve at a fixed FAR, interpolating between points.

    For each achievable FAR the best (largest-threshold) FRR is used.  The
    result is flagged extrapolated when the impostor count is below
    10 / far_target, i.e. when the curve cannot resolve the target.
    """
    if not (0.0 < far_target <= 1.0):
        raise InvalidParameterError("far_target must be in (0, 1]")
    frr = 1.0 - curve.gar
    # last occurrence per distinct FAR == minimal FRR there (FRR nonincreasing)
    far_u, last_idx = np.unique(curve.far[::-1], return_index=True)
    frr_u = frr[::-1][last_idx]
    value = float(np.interp(far_target, far_u, frr_u))
    extrapolated = curve.n_impostor < 10.0 / far_target
    return FrrAtFar(far_target=far_target, value=value, extrapolated=extrapolated)


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class BenchmarkConfig:
    window: int = DEFAULT_WINDOW
    mapping_k: float = DEFAULT_MAPPING_K
    far_targets: tuple[float, ...] = (1e-3, 1e-2)
    max_impostor: int = 10_000
    seed: int = 0
    threads: int = 1
    min_valid_fraction: float = MIN_VALID_FRACTION


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-method benchmark outcome over one shared pair plan."""

    method: str
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray
    curve: ROCCurve
    eer: float
    frr: tuple[FrrAtFar, ...]
    d_prime: float | None
    seconds_per_match: float
    n_failed: int

    def to_json_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "schema": SCHEMA,
            "method": self.method,
            "n_genuine": int(self.genuine_scores.size),
            "n_impostor": int(self.impostor_scores.size),
            "n_failed": self.n_failed,
            "eer": self.eer,
            "frr": [
                {"far_target": f.far_target, "value": f.value,
                 "extrapolated": f.extrapolated}
                for f in self.frr
            ],
            "d_prime": self.d_prime,
            "genuine_scores": [float(s) for s in self.genuine_scores],
            "impostor_scores": [float(s) for s in self.impostor_scores],
            "roc": {
                "thresholds": _json_floats(self.curve.thresholds),
                "far": _json_floats(self.curve.far),
                "gar": _json_floats(self.curve.gar),
            },
        }
        if include_timing:
            doc["timing"] = {"seconds_per_match": self.seconds_per_match}
        return doc


def _json_floats(arr: np.ndarray) -> list:
    # JSON has no Infinity literal; the CSV/JSON writers use string sentinels
    out = []
    for v in arr:
        if math.isinf(v):
            out.append("-inf" if v < 0 else "inf")
        else:
            out.append(float(v))
    return out


def _index_templates(templates: Sequence[Template]) -> dict[SampleRef, Template]:
    index: dict[SampleRef, Template] = {}
    for t in templates:
        key = (t.subject_id, t.sample_id)
        if key in index:
            raise InsufficientDataError(f"duplicate template for {key}")
        index[key] = t
    return index


def score_plan(
    index: dict[SampleRef, Template],
    pairs: Sequence[tuple[SampleRef, SampleRef]],
    method: str,
    config: BenchmarkConfig,
) -> tuple[np.ndarray, int]:
    """Scores for one pair list; failed pairs are logged and dropped."""

    def one(pair):
        a, b = pair
        try:
            return aligned_distance(
                index[a], index[b],
                window=config.window, method=method,
                mapping_k=config.mapping_k,
                min_valid_fraction=config.min_valid_fraction,
            ).value
        except PalmccError as exc:
            logger.warning("pair %s vs %s failed: %s", a, b, exc)
            return None

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    kept = [r for r in results if r is not None]
    return np.asarray(kept, dtype=np.float64), len(results) - len(kept)


def run_benchmark(
    templates: Sequence[Template],
    methods: Sequence[str],
    config: BenchmarkConfig | None = None,
) -> list[EvalReport]:
    """One report per method over an identical deterministic pair plan."""
    config = config or BenchmarkConfig()
    for m in methods:
        if m not in METHODS:
            raise InvalidParameterError(f"unknown method {m!r}; expected one of {METHODS}")
    index = _index_templates(templates)
    plan = plan_pairs(list(index), config.max_impostor, seed=config.seed)
    n_pairs = len(plan.genuine_pairs) + len(plan.impostor_pairs)
    reports = []
    for method in methods:
        start = time.perf_counter()
        gen_scores, gen_failed = score_plan(index, plan.genuine_pairs, method, config)
        imp_scores, imp_failed = score_plan(index, plan.impostor_pairs, method, config)
        elapsed = time.perf_counter() - start
        curve = roc(gen_scores, imp_scores)
        try:
            d_prime = decidability(gen_scores, imp_scores).d_prime
        except InvalidParameterError:
            d_prime = None
        reports.append(EvalReport(
            method=method,
            genuine_scores=gen_scores,
            impostor_scores=imp_scores,
            curve=curve,
            eer=eer(curve),
            frr=tuple(frr_at_far(curve, t) for t in config.far_targets),
            d_prime=d_prime,
            seconds_per_match=elapsed / max(1, n_pairs),
            n_failed=gen_failed + imp_failed,
        ))
    return reports


# ---------------------------------------------------------------------------
# report output


def write_report_json(report: EvalReport, path, include_timing: bool = True) -> None:
    doc = report.to_json_dict(include_timing=include_timing)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def write_roc_csv(report: EvalReport, path) -> None:
    lines = ["threshold,far,gar"]
    curve = report.curve
    for t, f, g in zip(curve.thresholds, curve.far, curve.gar):
        lines.append(f"{t!r},{f!r},{g!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_roc_svg(reports: Sequence[EvalReport], path) -> None:
    """Deterministic SVG plot of GAR over FAR (log x) for each method."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "palmcc"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        for report in reports:
            curve = report.curve
            finite = np.isfinite(curve.thresholds)
            far = np.clip(curve.far[finite], 1e-7, None)
            ax.plot(far, curve.gar[finite], label=report.method, linewidth=1.4)
        ax.set_xscale("log")
        ax.set_xlabel("false accept rate")
        ax.set_ylabel("genuine accept rate")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(Path(path), format="svg", metadata={"Date": None})
        plt.close(fig)
