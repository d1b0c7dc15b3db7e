"""Command-line entry point.

Subcommands: synth, extract, match, eval, stats.  Settings resolve with
the precedence flags > config file > defaults; the config file is a flat
``key = value`` text file (``#`` comments allowed) over the keys listed in
``CONFIG_KEYS``.  All randomness derives from one --seed value.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error,
4 filter-bank fingerprint mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import evaluation, stats, store, synth, workbench
from .coding import encode_template
from .errors import (
    DataError,
    FingerprintMismatchError,
    InsufficientDataError,
    InvalidParameterError,
    NoOverlapError,
    PalmccError,
)
from .filterbank import make_bank
from .matching import METHODS, aligned_distance

logger = logging.getLogger("palmcc")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3
EXIT_FINGERPRINT = 4


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(f"{self.prog}: {message}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_methods(text: str) -> tuple[str, ...]:
    if text.strip().lower() == "all":
        return METHODS
    methods = tuple(part.strip() for part in text.split(",") if part.strip())
    for m in methods:
        if m not in METHODS:
            raise _UsageError(f"unknown method {m!r}; expected one of {METHODS}")
    return methods


def _parse_ridge(text: str):
    return None if text.strip().lower() == "auto" else float(text)


# config-file keys, their parsers, and their defaults
CONFIG_KEYS = {
    "orientations": (int, 6),
    "u": (float, 0.0916),
    "sigma": (float, 5.6179),
    "half_size": (int, 17),
    "keep_fraction": (float, 0.70),
    "mapping_k": (float, 1.0),
    "window": (int, 2),
    "patch": (int, 32),
    "ridge": (_parse_ridge, None),
    "seed": (int, 0),
    "threads": (int, 1),
    "max_impostor": (int, 10_000),
    "far_targets": (_parse_float_list, (1e-3, 1e-2)),
    "methods": (_parse_methods, METHODS),
    "statistic": (str, "max_abs"),
}


def _load_config_file(path: Path) -> dict:
    values = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    for idx, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise _UsageError(f"{path}: line {idx}: expected key = value")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in CONFIG_KEYS:
            raise _UsageError(f"{path}: line {idx}: unknown key {key!r}")
        parser, _ = CONFIG_KEYS[key]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise _UsageError(f"{path}: line {idx}: bad value for {key}: {exc}") from exc
    return values


def _resolve(args: argparse.Namespace) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    resolved = {key: default for key, (_, default) in CONFIG_KEYS.items()}
    if getattr(args, "config", None):
        resolved.update(_load_config_file(Path(args.config)))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _bank(cfg: dict):
    return make_bank(n_orientations=cfg["orientations"], u=cfg["u"],
                     sigma=cfg["sigma"], half_size=cfg["half_size"])


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "+", text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = synth.SynthConfig(image_size=args.size, noise_std=args.noise_std,
                             seed=cfg["seed"])
    rows = []
    n_images = 0
    for s in range(args.subjects):
        subject_id = f"s{s:03d}"
        config = synth.impostor_config(base, s)
        samples = synth.generate_sample_set(config, args.samples,
                                            max_translate=args.max_translate)
        for a, sample in enumerate(samples):
            sample_id = f"a{a:02d}"
            stem = f"{subject_id}_{sample_id}"
            store.save_image(out / f"{stem}.png", sample.image)
            synth.write_ground_truth(out / f"{stem}.pgth", sample.orientation_gt)
            session = "1" if a < (args.samples + 1) // 2 else "2"
            rows.append((subject_id, sample_id, f"{stem}.png", session, False))
            n_images += 1
    manifest_path = out / "manifest.csv"
    store.write_manifest(manifest_path, rows)
    print(f"wrote {n_images} images and {manifest_path}")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    manifest = store.parse_manifest(args.manifest)
    bank = _bank(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = failed = 0
    skipped = sum(1 for e in manifest.entries if e.excluded)
    for i, entry in enumerate(manifest.active_entries()):
        try:
            image = store.load_image(manifest.resolve_path(entry))
            template = encode_template(
                image, bank, keep_fraction=cfg["keep_fraction"],
                subject_id=entry.subject_id, sample_id=entry.sample_id,
                statistic=cfg["statistic"],
            )
            name = f"{i:05d}_{_safe_name(entry.subject_id)}_{_safe_name(entry.sample_id)}.pcc"
            store.save_template(template, out / name)
            written += 1
        except (PalmccError, OSError) as exc:
            logger.error("extract %s/%s: %s", entry.subject_id, entry.sample_id, exc)
            failed += 1
    print(f"written={written} skipped_excluded={skipped} failed={failed}")
    return EXIT_DATA if failed else EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    gallery = store.load_template(args.gallery)
    probe = store.load_template(args.probe)
    score = aligned_distance(gallery, probe, window=cfg["window"],
                             method=args.method, mapping_k=cfg["mapping_k"])
    print(f"method={score.method} value={score.value!r} raw_mean={score.raw_mean!r} "
          f"n_valid={score.n_valid} offset={score.offset[0]},{score.offset[1]}")
    return EXIT_OK


def _load_template_dir(path: Path) -> list:
    files = sorted(path.glob("*.pcc"))
    if not files:
        raise DataError(f"{path}: no .pcc template files found")
    return [store.load_template(f) for f in files]


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    templates = _load_template_dir(Path(args.templates))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = evaluation.BenchmarkConfig(
        window=cfg["window"], mapping_k=cfg["mapping_k"],
        far_targets=tuple(cfg["far_targets"]), max_impostor=cfg["max_impostor"],
        seed=cfg["seed"], threads=cfg["threads"],
    )
    reports = evaluation.run_benchmark(templates, cfg["methods"], bench)
    for report in reports:
        evaluation.write_report_json(report, out / f"eval_{report.method}.json")
        evaluation.write_roc_csv(report, out / f"roc_{report.method}.csv")
        d = "nan" if report.d_prime is None else f"{report.d_prime:.4f}"
        print(f"method={report.method} eer={report.eer!r} d_prime={d} "
              f"n_genuine={report.genuine_scores.size} "
              f"n_impostor={report.impostor_scores.size} failed={report.n_failed}")
    evaluation.write_roc_svg(reports, out / "roc.svg")
    return EXIT_OK


def _stats_from_synth(args: argparse.Namespace, cfg: dict) -> dict:
    bank = _bank(cfg)
    patch = cfg["patch"]
    size = args.size
    if patch > size:
        raise InvalidParameterError(f"patch {patch} exceeds image size {size}")
    origin = ((size - patch) // 2, (size - patch) // 2, patch)
    random_study = workbench.random_code_impostor_study(
        n_pairs=args.samples, size=size, seed=cfg["seed"])

    n_identities = int(np.ceil((1 + np.sqrt(1 + 8 * args.samples)) / 2))
    base = synth.SynthConfig(image_size=size, noise_std=args.noise_std,
                             seed=cfg["seed"] + 1)
    impostor_diffs = workbench.impostor_palm_difference_fields(
        bank, base, n_identities, args.samples)
    impostor_stats = stats.empirical_covariance(impostor_diffs, patch=origin)
    impostor_station = stats.stationarity_score(impostor_stats)

    genuine_cfg = synth.SynthConfig(image_size=size, noise_std=args.noise_std,
                                    seed=cfg["seed"] + 2)
    genuine_diffs, line_mask = workbench.genuine_palm_difference_fields(
        bank, genuine_cfg, args.genuine_samples, max_translate=1)
    genuine_stats = stats.empirical_covariance(genuine_diffs, patch=origin)
    genuine_station = stats.stationarity_score(genuine_stats)

    r0, c0, p = origin
    indicator = line_mask[r0:r0 + p, c0:c0 + p].astype(float)
    fisher = stats.fisher_weight(genuine_stats, impostor_stats,
                                 ridge=cfg["ridge"], indicator=indicator)
    return {
        "schema": "stats/1",
        "source": "synth",
        "random_code": random_study.to_json_dict(),
        "impostor": {
            "fields": impostor_stats.to_json_dict(),
            "stationarity": impostor_station.to_json_dict(),
        },
        "genuine": {
            "fields": genuine_stats.to_json_dict(),
            "stationarity": genuine_station.to_json_dict(),
        },
        "fisher": fisher.to_json_dict(),
        "group_cv_ratio": genuine_station.group_cv / impostor_station.group_cv,
    }


def _stats_from_templates(args: argparse.Namespace, cfg: dict) -> dict:
    templates = _load_template_dir(Path(args.templates))
    refs = [(t.subject_id, t.sample_id) for t in templates]
    plan = evaluation.plan_pairs(refs, max_impostor=args.samples, seed=cfg["seed"])
    impostor_diffs = workbench.template_difference_fields(templates, plan.impostor_pairs)
    genuine_diffs = workbench.template_difference_fields(templates, plan.genuine_pairs)
    size = impostor_diffs[0].shape[0]
    patch = min(cfg["patch"], size)
    origin = ((size - patch) // 2, (size - patch) // 2, patch)
    impostor_stats = stats.empirical_covariance(impostor_diffs, patch=origin)
    genuine_stats = stats.empirical_covariance(genuine_diffs, patch=origin)
    impostor_station = stats.stationarity_score(impostor_stats)
    genuine_station = stats.stationarity_score(genuine_stats)
    fisher = stats.fisher_weight(genuine_stats, impostor_stats, ridge=cfg["ridge"])
    pmf = stats.impostor_difference_pmf(impostor_diffs)
    return {
        "schema": "stats/1",
        "source": "templates",
        "impostor_pmf": [float(p) for p in pmf],
        "impostor": {
            "fields": impostor_stats.to_json_dict(),
            "stationarity": impostor_station.to_json_dict(),
        },
        "genuine": {
            "fields": genuine_stats.to_json_dict(),
            "stationarity": genuine_station.to_json_dict(),
        },
        "fisher": fisher.to_json_dict(),
        "group_cv_ratio": genuine_station.group_cv / impostor_station.group_cv,
    }


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    doc = (_stats_from_templates(args, cfg) if args.templates
           else _stats_from_synth(args, cfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                   encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")


def _add_bank_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--orientations", type=int, default=None)
    parser.add_argument("--u", type=float, default=None, help="sinusoid frequency")
    parser.add_argument("--sigma", type=float, default=None, help="envelope std")
    parser.add_argument("--half-size", dest="half_size", type=int, default=None)


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="palmcc",
                             description="palmprint competitive-coding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--samples", type=int, default=4, help="samples per subject")
    p.add_argument("--size", type=int, default=128, help="image side length")
    p.add_argument("--noise-std", dest="noise_std", type=float, default=6.0)
    p.add_argument("--max-translate", dest="max_translate", type=int, default=2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="encode templates from a manifest")
    _add_common(p)
    _add_bank_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="template output directory")
    p.add_argument("--keep-fraction", dest="keep_fraction", type=float, default=None)
    p.add_argument("--statistic", choices=("max_abs", "min_response"), default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("match", help="score one template pair")
    _add_common(p)
    p.add_argument("gallery", help="enrolled template file")
    p.add_argument("probe", help="probe template file")
    p.add_argument("--method", choices=METHODS, default="cscc")
    p.add_argument("--window", type=int, default=None, help="alignment window")
    p.add_argument("--mapping-k", dest="mapping_k", type=float, default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="run the benchmark over stored templates")
    _add_common(p)
    p.add_argument("--templates", required=True, help="directory of .pcc files")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--methods", type=_parse_methods, default=None)
    p.add_argument("--far-targets", dest="far_targets", type=_parse_float_list,
                   default=None)
    p.add_argument("--max-impostor", dest="max_impostor", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--mapping-k", dest="mapping_k", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="statistics workbench")
    _add_common(p)
    _add_bank_flags(p)
    p.add_argument("--out", default="stats.json", help="output JSON path")
    p.add_argument("--templates", help="template directory (default: synthetic study)")
    p.add_argument("--patch", type=int, default=None, help="covariance patch size")
    p.add_argument("--ridge", type=_parse_ridge, default=None)
    p.add_argument("--samples", type=int, default=10_000,
                   help="impostor experiment count")
    p.add_argument("--genuine-samples", dest="genuine_samples", type=int, default=21,
                   help="samples of the single genuine identity")
    p.add_argument("--size", type=int, default=64, help="synthetic image side")
    p.add_argument("--noise-std", dest="noise_std", type=float, default=6.0)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FingerprintMismatchError as exc:
        logger.error("%s", exc)
        return EXIT_FINGERPRINT
    except InvalidParameterError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (DataError, NoOverlapError, InsufficientDataError, FileNotFoundError,
            OSError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except PalmccError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except Exception:  # pragma: no cover - last-resort guard
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
