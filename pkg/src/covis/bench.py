"""Benchmark report assembly: directory comparisons, ablation arms,
cross-dataset rows, and the end-to-end describe flow.

Reports carry wall-clock timings for operators, but rendered outputs
(JSON/CSV/Markdown) exclude them so identical inputs produce byte-identical
documents.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .cascade import PipelineConfig, run_pipeline
from .errors import CovisError, EmptyReportListError, MissingFileError, NoMatchedPairsError
from .features import Provenance, encode
from .io import (
    DatasetManifest,
    load_binary_mask,
    load_image,
    load_pair,
    save_gray_mask,
    write_json,
    write_text,
)
from .metrics import METRIC_FIELDS, MetricReport, aggregate, evaluate_pair
from .promptgen import (
    LLMEndpointConfig,
    PromptProfile,
    build_prompt,
    default_profile,
    generate_description,
    pilot_evaluate,
)

log = logging.getLogger("covis.bench")

_LOWER_BETTER = frozenset({"mae"})
_COLUMN_TITLES = {
    "f_max": "F_max", "f_weighted": "F_w", "mae": "MAE",
    "s_measure": "S", "e_measure": "E",
}
ABLATION_ARMS = (("no_coarse", "No SAM"), ("no_fine", "No U-Net"), ("full", "Ours"))
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
FORMATS = ("json", "csv", "md")


@dataclass(frozen=True)
class BenchRow:
    label: str
    report: MetricReport
    skipped: int = 0
    wall_s: float = 0.0


@dataclass(frozen=True)
class BenchReport:
    dataset: str
    config_digest: str
    rows: tuple[BenchRow, ...]
    errors: tuple[tuple[str, str], ...] = ()

    def best_flags(self) -> dict:
        """Per metric column, the set of row indices holding the best value."""
        flags = {}
        for col in METRIC_FIELDS:
            vals = [getattr(r.report, col) for r in self.rows]
            if not vals:
                flags[col] = set()
                continue
            target = min(vals) if col in _LOWER_BETTER else max(vals)
            flags[col] = {i for i, v in enumerate(vals) if v == target}
        return flags

    def to_json_doc(self) -> dict:
        flags = self.best_flags()
        rows = []
        for i, r in enumerate(self.rows):
            row = {"label": r.label}
            for col in METRIC_FIELDS:
                row[col] = getattr(r.report, col)
            row["n_images"] = r.report.n_images
            row["skipped"] = r.skipped
            row["best"] = [col for col in METRIC_FIELDS if i in flags[col]]
            rows.append(row)
        return {
            "dataset": self.dataset,
            "config_digest": self.config_digest,
            "rows": rows,
            "errors": [{"label": l, "message": m} for l, m in self.errors],
        }


def render(report: BenchReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_json_doc(), indent=2) + "\n"
    if fmt == "csv":
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", *METRIC_FIELDS])
        for r in report.rows:
            writer.writerow([r.label] + [f"{getattr(r.report, c):.3f}" for c in METRIC_FIELDS])
        return buf.getvalue()
    if fmt == "md":
        flags = report.best_flags()
        lines = [
            "| Method | " + " | ".join(_COLUMN_TITLES[c] for c in METRIC_FIELDS) + " |",
            "|" + "---|" * (len(METRIC_FIELDS) + 1),
        ]
        for i, r in enumerate(report.rows):
            cells = []
            for col in METRIC_FIELDS:
                cell = f"{getattr(r.report, col):.3f}"
                if i in flags[col]:
                    cell = f"**{cell}**"
                cells.append(cell)
            lines.append("| " + " | ".join([r.label, *cells]) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _config_digest(config: PipelineConfig | None) -> str:
    doc = config.as_dict() if config is not None else {}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _stem_map(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise MissingFileError(f"no such directory: {d}")
    out = {}
    for p in sorted(d.iterdir()):
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES:
            out.setdefault(p.stem, p)
    return out


def _n_jobs(jobs) -> int:
    return jobs if jobs and jobs > 0 else (os.cpu_count() or 1)


def _evaluate_pairs(pairs, jobs=None):
    """Score (pred_path, gt_path) pairs in input order; per-pair errors are
    logged and counted rather than fatal."""
    def one(pair):
        try:
            return evaluate_pair(*load_pair(*pair)), None
        except CovisError as exc:
            return None, f"{pair[0]}: {exc}"

    with ThreadPoolExecutor(max_workers=_n_jobs(jobs)) as pool:
        results = list(pool.map(one, pairs))
    reports = [r for r, _ in results if r is not None]
    failures = [e for _, e in results if e is not None]
    for msg in failures:
        log.warning("skipping pair: %s", msg)
    if not reports:
        raise NoMatchedPairsError("no evaluable pairs")
    return aggregate(reports), len(failures)


def cmd_eval(pred_dirs, gt_dir, dataset=None, jobs=None) -> BenchReport:
    """One row per labeled prediction directory, filename-stem matched to GT."""
    gt_map = _stem_map(gt_dir)
    rows = []
    for label, pred_dir in pred_dirs:
        pred_map = _stem_map(pred_dir)
        stems = sorted(set(pred_map) & set(gt_map))
        if not stems:
            raise NoMatchedPairsError(
                f"{label}: no filename stems in {pred_dir} match {gt_dir}")
        unmatched = len(pred_map) - len(stems)
        t0 = time.perf_counter()
        report, failed = _evaluate_pairs(
            [(pred_map[s], gt_map[s]) for s in stems], jobs)
        rows.append(BenchRow(label=label, report=report,
                             skipped=unmatched + failed,
                             wall_s=time.perf_counter() - t0))
    return BenchReport(dataset=dataset or Path(gt_dir).name,
                       config_digest=_config_digest(None), rows=tuple(rows))


def cmd_ablation(manifest: DatasetManifest, config: PipelineConfig | None = None,
                 gt_dir=None, jobs=None) -> BenchReport:
    """Three-arm ablation over the manifest images.

    Manifest entries name the input image under 'pred'; ground truth comes
    from the entry's 'gt' path unless a gt_dir overrides it by filename stem.
    """
    config = config or PipelineConfig()
    gt_map = _stem_map(gt_dir) if gt_dir is not None else None
    pairs = []
    for entry in manifest.entries:
        gt = entry.gt
        if gt_map is not None:
            stem = Path(entry.pred).stem
            if stem not in gt_map:
                raise NoMatchedPairsError(f"no ground truth for {entry.pred} in {gt_dir}")
            gt = gt_map[stem]
        pairs.append((entry.pred, gt))

    rows = []
    for ablation, label in ABLATION_ARMS:
        cfg = config.with_ablation(ablation)

        def one(pair):
            image = load_image(pair[0])
            gt = load_binary_mask(pair[1])
            res = run_pipeline(image, cfg)
            return evaluate_pair(res.fine.mask, gt)

        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=_n_jobs(jobs)) as pool:
            reports = list(pool.map(one, pairs))
        rows.append(BenchRow(label=label, report=aggregate(reports),
                             wall_s=time.perf_counter() - t0))
    return BenchReport(dataset=manifest.name, config_digest=_config_digest(config),
                       rows=tuple(rows))


def cmd_generalize(manifests, jobs=None) -> BenchReport:
    """One row per dataset manifest; a failing dataset isolates to an error entry."""
    manifests = list(manifests)
    if not manifests:
        raise EmptyReportListError("no manifests given")
    rows, errors = [], []
    for m in manifests:
        t0 = time.perf_counter()
        try:
            report, failed = _evaluate_pairs(
                [(e.pred, e.gt) for e in m.entries], jobs)
        except CovisError as exc:
            errors.append((m.name, str(exc)))
            continue
        rows.append(BenchRow(label=m.name, report=report, skipped=failed,
                             wall_s=time.perf_counter() - t0))
    return BenchReport(dataset="generalization", config_digest=_config_digest(None),
                       rows=tuple(rows), errors=tuple(errors))


def cmd_describe(image_path, out_dir, config: PipelineConfig | None = None,
                 profile: PromptProfile | None = None,
                 endpoint: LLMEndpointConfig | None = None) -> dict:
    """Segment, measure, prompt, describe, score; persist every intermediate.

    Output files carry no timestamps: repeated stub runs are byte-identical.
    """
    config = config or PipelineConfig()
    profile = profile or default_profile()
    endpoint = endpoint or LLMEndpointConfig(stub=True)

    image = load_image(image_path)
    result = run_pipeline(image, config)
    bundle = encode(image, result.fine, result.coarse,
                    provenance=Provenance(ablation=config.ablation,
                                          coarse_backend=config.coarse_backend,
                                          fine_backend=config.fine_backend))
    prompt = build_prompt(bundle, profile)
    description = generate_description(prompt, endpoint)
    pilot = pilot_evaluate(description, bundle, profile)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "coarse.json", {
        "proposals": [
            {"box": list(p.box), "score": p.score, "area": p.area}
            for p in result.coarse.proposals
        ],
    })
    save_gray_mask(result.fine.mask, out / "fine.png")
    write_json(out / "features.json", bundle.to_json_dict())
    write_text(out / "prompt.txt", prompt.text)
    write_text(out / "description.txt", description.text + "\n")
    pilot_doc = {
        "coverage": pilot.coverage,
        "consistency": pilot.consistency,
        "violations": list(pilot.violations),
    }
    write_json(out / "pilot.json", pilot_doc)
    return {
        "image": str(image_path),
        "out_dir": str(out),
        "description": description.text,
        "generator": description.generator,
        "prompt_hash": description.prompt_hash,
        "features": bundle.to_json_dict(),
        "pilot": pilot_doc,
    }
