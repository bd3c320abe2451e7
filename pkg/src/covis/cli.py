"""Command-line front end.

Fatal errors leave on exit code 1 with a one-line JSON document on stderr;
malformed invocations exit 2 via the usual usage errors.
"""
from __future__ import annotations

import functools
import json
import logging
import sys

import click

from . import bench
from .cascade import PipelineConfig
from .errors import CovisError
from .io import load_manifest
from .promptgen import LLMEndpointConfig, PromptProfile, default_profile


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CovisError as exc:
            doc = {"error": type(exc).__name__, "message": str(exc)}
            click.echo(json.dumps(doc), err=True)
            sys.exit(1)
    return wrapper


def _emit(text: str, out) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_pred(_ctx, _param, values):
    pairs = []
    for value in values:
        label, sep, directory = value.partition("=")
        if not sep or not label or not directory:
            raise click.BadParameter(f"expected LABEL=DIR, got {value!r}")
        pairs.append((label, directory))
    return tuple(pairs)


_format_option = click.option(
    "--format", "fmt", type=click.Choice(bench.FORMATS), default="json",
    show_default=True, help="Report rendering.")
_out_option = click.option(
    "--out", type=click.Path(dir_okay=False), default=None,
    help="Write the report here instead of stdout.")
_jobs_option = click.option(
    "--jobs", type=int, default=None, help="Worker threads (default: CPU count).")


@click.group()
def main():
    """Segmentation benchmarking, description generation, and rating studies."""
    logging.basicConfig(level=logging.WARNING)


@main.command("eval")
@click.option("--pred", "preds", multiple=True, required=True, callback=_parse_pred,
              metavar="LABEL=DIR", help="Labeled prediction directory (repeatable).")
@click.option("--gt", required=True, type=click.Path(file_okay=False),
              help="Ground-truth mask directory.")
@click.option("--dataset", default=None, help="Dataset name for the report header.")
@_out_option
@_format_option
@_jobs_option
@_guarded
def cmd_eval(preds, gt, dataset, out, fmt, jobs):
    """Score prediction directories against ground truth, one row per label."""
    report = bench.cmd_eval(preds, gt, dataset=dataset, jobs=jobs)
    _emit(bench.render(report, fmt), out)


@main.command("ablate")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False),
              help="Dataset manifest of input images and their ground truth.")
@click.option("--gt", default=None, type=click.Path(file_okay=False),
              help="Override ground-truth directory, matched by filename stem.")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="Pipeline config JSON.")
@_out_option
@_format_option
@_jobs_option
@_guarded
def cmd_ablate(manifest, gt, config_path, out, fmt, jobs):
    """Run the three pipeline arms on a manifest and report each one."""
    config = PipelineConfig.from_json(config_path) if config_path else PipelineConfig()
    report = bench.cmd_ablation(load_manifest(manifest), config=config,
                                gt_dir=gt, jobs=jobs)
    _emit(bench.render(report, fmt), out)


@main.command("generalize")
@click.option("--manifest", "manifests", multiple=True, required=True,
              type=click.Path(dir_okay=False), help="Dataset manifest (repeatable).")
@_out_option
@_format_option
@_jobs_option
@_guarded
def cmd_generalize(manifests, out, fmt, jobs):
    """Evaluate prediction/GT manifests, one row per dataset."""
    report = bench.cmd_generalize([load_manifest(p) for p in manifests], jobs=jobs)
    _emit(bench.render(report, fmt), out)


@main.command("describe")
@click.option("--image", required=True, type=click.Path(dir_okay=False),
              help="Input image.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for all intermediates and the description.")
@click.option("--stub", is_flag=True, help="Deterministic offline text generator.")
@click.option("--endpoint", default=None, help="Chat-completions URL.")
@click.option("--model", default="default", show_default=True,
              help="Model name sent to the endpoint.")
@click.option("--profile", "profile_path", default=None, type=click.Path(dir_okay=False),
              help="Prompt profile JSON (default: built-in profile).")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="Pipeline config JSON.")
@_guarded
def cmd_describe(image, out_dir, stub, endpoint, model, profile_path, config_path):
    """Segment an image, describe it, and score the description."""
    if stub and endpoint:
        raise click.UsageError("--stub and --endpoint are mutually exclusive")
    config = PipelineConfig.from_json(config_path) if config_path else PipelineConfig()
    profile = PromptProfile.from_json(profile_path) if profile_path else default_profile()
    llm = LLMEndpointConfig(stub=stub, url=endpoint, model=model)
    doc = bench.cmd_describe(image, out_dir, config=config, profile=profile, endpoint=llm)
    click.echo(json.dumps(doc, indent=2))


@main.group("study")
def study_group():
    """Human rating study service."""


@study_group.command("serve")
@click.option("--study", "study_path", required=True, type=click.Path(dir_okay=False),
              help="Study definition JSON.")
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False),
              help="Append-only ratings log (JSONL), replayed on restart.")
@click.option("--ui", "ui_dir", default=None, type=click.Path(file_okay=False),
              help="Directory with the built rater UI, served at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@_guarded
def cmd_study_serve(study_path, log_path, ui_dir, host, port):
    """Serve the rating study API and UI."""
    import uvicorn

    from .study import build_app, load_study

    app = build_app(load_study(study_path), log_path, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
