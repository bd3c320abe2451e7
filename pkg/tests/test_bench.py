import json

import numpy as np
import pytest

from covis import bench
from covis.bench import ABLATION_ARMS, BenchReport, BenchRow, cmd_ablation, cmd_describe, cmd_eval, cmd_generalize, render
from covis.cascade import PipelineConfig
from covis.errors import EmptyReportListError, MissingFileError, NoMatchedPairsError
from covis.io import GrayMask, load_manifest, save_gray_mask, save_image
from covis.metrics import MetricReport

from synth import boundary_noise_suite, disk_image


def _write_mask(arr, path):
    save_gray_mask(GrayMask(np.asarray(arr, dtype=np.float64)), path)


def _gt_shapes():
    disk = np.zeros((32, 32)); disk[8:24, 8:24] = 1.0
    bar = np.zeros((32, 32)); bar[:, 14:20] = 1.0
    blob = np.zeros((32, 32)); blob[20:30, 2:12] = 1.0
    return {"a": disk, "b": bar, "c": blob}


@pytest.fixture
def gt_dir(tmp_path):
    d = tmp_path / "gt"
    d.mkdir()
    for stem, arr in _gt_shapes().items():
        _write_mask(arr, d / f"{stem}.png")
    return d


def test_identical_dirs_give_perfect_row(gt_dir):
    report = cmd_eval([("self", gt_dir)], gt_dir)
    (row,) = report.rows
    assert row.label == "self"
    assert (row.report.f_max, row.report.f_weighted, row.report.mae,
            row.report.s_measure, row.report.e_measure) == (1.0, 1.0, 0.0, 1.0, 1.0)
    assert row.report.n_images == 3
    assert row.skipped == 0


def test_dominating_dir_carries_all_best_flags(tmp_path, gt_dir):
    worse = tmp_path / "worse"
    worse.mkdir()
    rng = np.random.default_rng(5)
    for stem, arr in _gt_shapes().items():
        flipped = np.where(rng.random(arr.shape) < 0.1, 1.0 - arr, arr)
        _write_mask(flipped * 0.9 + 0.05, worse / f"{stem}.png")
    report = cmd_eval([("noisy", worse), ("exact", gt_dir)], gt_dir)
    assert [r.label for r in report.rows] == ["noisy", "exact"]
    flags = report.best_flags()
    assert all(flags[col] == {1} for col in flags)


def test_unmatched_and_failing_pairs_are_counted(tmp_path, gt_dir):
    pred = tmp_path / "pred"
    pred.mkdir()
    for stem, arr in _gt_shapes().items():
        _write_mask(arr, pred / f"{stem}.png")
    _write_mask(np.ones((4, 4)), pred / "orphan.png")     # no gt counterpart
    _write_mask(np.ones((8, 8)), gt_dir / "tiny.png")     # stem matches below
    _write_mask(np.ones((9, 9)), pred / "tiny.png")       # wrong dimensions
    (pred / "notes.txt").write_text("ignored")
    report = cmd_eval([("p", pred)], gt_dir)
    (row,) = report.rows
    assert row.report.n_images == 3
    assert row.skipped == 2  # one unmatched stem + one dimension mismatch


def test_no_matched_stems_raises(tmp_path, gt_dir):
    pred = tmp_path / "pred"
    pred.mkdir()
    _write_mask(np.ones((4, 4)), pred / "zzz.png")
    with pytest.raises(NoMatchedPairsError):
        cmd_eval([("p", pred)], gt_dir)


def test_missing_directory_raises(tmp_path, gt_dir):
    with pytest.raises(MissingFileError):
        cmd_eval([("p", tmp_path / "nope")], gt_dir)


def _report_from_rows(rows):
    return BenchReport(dataset="fixtures", config_digest="0" * 16, rows=tuple(rows))


def _row(label, f_max, f_w, mae, s, e, n=1):
    return BenchRow(label=label, report=MetricReport(f_max, f_w, mae, s, e, n_images=n))


_TABLE_ROWS = (
    ("U2Net", 0.748, 0.656, 0.090, 0.781, 0.823),
    ("U2Net-Tiny", 0.707, 0.614, 0.095, 0.727, 0.012),
    ("HySM", 0.734, 0.640, 0.096, 0.773, 0.814),
    ("BASNet", 0.731, 0.641, 0.094, 0.768, 0.816),
    ("MBV3", 0.714, 0.641, 0.092, 0.758, 0.841),
    ("STDC", 0.696, 0.580, 0.103, 0.740, 0.817),
    ("UNet", 0.692, 0.586, 0.113, 0.745, 0.785),
    ("PFNet", 0.691, 0.604, 0.106, 0.740, 0.811),
    ("CoVis", 0.757, 0.687, 0.082, 0.794, 0.831),
)


def test_markdown_nine_row_layout():
    report = _report_from_rows(_row(*spec) for spec in _TABLE_ROWS)
    lines = render(report, "md").splitlines()
    assert lines[0] == "| Method | F_max | F_w | MAE | S | E |"
    assert lines[1] == "|---|---|---|---|---|---|"
    assert len(lines) == 2 + 9
    covis = lines[-1]
    assert covis == "| CoVis | **0.757** | **0.687** | **0.082** | **0.794** | 0.831 |"
    # E column leader is elsewhere, so its flag must not land on the last row
    mbv3 = [ln for ln in lines if ln.startswith("| MBV3 ")][0]
    assert "**0.841**" in mbv3
    flags = report.best_flags()
    assert flags["e_measure"] == {4}
    assert flags["mae"] == {8}  # lower is better


def test_best_flag_ties_flag_every_row():
    report = _report_from_rows([
        _row("x", 0.5, 0.5, 0.1, 0.5, 0.5),
        _row("y", 0.5, 0.4, 0.1, 0.6, 0.5),
    ])
    flags = report.best_flags()
    assert flags["f_max"] == {0, 1}
    assert flags["mae"] == {0, 1}
    assert flags["f_weighted"] == {0}
    assert flags["s_measure"] == {1}


def test_per_image_fixtures_average_to_lead_row():
    lead = (0.757, 0.687, 0.082, 0.794, 0.831)
    spread = (0.02, 0.013, 0.011, 0.004, 0.02)
    low = MetricReport(*(v - d for v, d in zip(lead, spread)))
    high = MetricReport(*(v + d for v, d in zip(lead, spread)))
    from covis.metrics import aggregate
    report = _report_from_rows([
        _row("U2Net", 0.748, 0.656, 0.090, 0.781, 0.823, n=2),
        BenchRow(label="CoVis", report=aggregate([low, high])),
    ])
    line = render(report, "md").splitlines()[-1]
    assert line == "| CoVis | **0.757** | **0.687** | **0.082** | **0.794** | **0.831** |"


def test_render_json_shape_and_determinism():
    report = _report_from_rows([_row(*spec) for spec in _TABLE_ROWS[:2]])
    text = render(report, "json")
    assert text == render(report, "json")
    assert text.endswith("\n")
    doc = json.loads(text)
    assert doc["dataset"] == "fixtures"
    assert [r["label"] for r in doc["rows"]] == ["U2Net", "U2Net-Tiny"]
    assert doc["rows"][0]["f_max"] == 0.748
    assert doc["rows"][0]["best"] == ["f_max", "f_weighted", "mae", "s_measure", "e_measure"]
    assert doc["rows"][1]["best"] == []
    assert doc["errors"] == []
    assert "wall" not in text


def test_render_csv_exact():
    report = _report_from_rows([_row("m", 0.5, 0.25, 0.125, 1.0, 0.0)])
    assert render(report, "csv") == (
        "label,f_max,f_weighted,mae,s_measure,e_measure\n"
        "m,0.500,0.250,0.125,1.000,0.000\n"
    )


def test_render_unknown_format():
    report = _report_from_rows([_row("m", 0.5, 0.25, 0.125, 1.0, 0.0)])
    with pytest.raises(ValueError, match="format"):
        render(report, "yaml")


def _write_suite(tmp_path, n):
    img_dir = tmp_path / "img"
    gt_dir = tmp_path / "suitegt"
    img_dir.mkdir()
    gt_dir.mkdir()
    entries = []
    for i, (image, gt) in enumerate(boundary_noise_suite(n=n)):
        img_path = img_dir / f"case{i:02d}.png"
        gt_path = gt_dir / f"case{i:02d}.png"
        save_image(image, img_path)
        _write_mask(gt.astype(np.float64), gt_path)
        entries.append({"pred": str(img_path), "gt": str(gt_path)})
    manifest_path = tmp_path / "suite.json"
    manifest_path.write_text(json.dumps({"name": "boundary-noise", "entries": entries}))
    return manifest_path, gt_dir


def test_ablation_labels_and_direction(tmp_path):
    manifest_path, _ = _write_suite(tmp_path, n=10)
    report = cmd_ablation(load_manifest(manifest_path), jobs=2)
    assert [r.label for r in report.rows] == ["No SAM", "No U-Net", "Ours"]
    assert report.dataset == "boundary-noise"
    by_label = {r.label: r.report for r in report.rows}
    assert by_label["Ours"].mae <= by_label["No U-Net"].mae
    assert all(r.report.n_images == 10 for r in report.rows)


def test_ablation_gt_dir_override(tmp_path):
    manifest_path, gt_dir = _write_suite(tmp_path, n=2)
    doc = json.loads(manifest_path.read_text())
    for entry in doc["entries"]:
        entry["gt"] = str(tmp_path / "bogus.png")  # override must win before load
    rewired = tmp_path / "rewired.json"
    rewired.write_text(json.dumps(doc))
    report = cmd_ablation(load_manifest(rewired), gt_dir=gt_dir)
    assert len(report.rows) == 3
    unrelated = tmp_path / "unrelated"
    unrelated.mkdir()
    _write_mask(np.ones((4, 4)), unrelated / "other.png")
    with pytest.raises(NoMatchedPairsError):
        cmd_ablation(load_manifest(rewired), gt_dir=unrelated)


def test_ablation_matches_direct_pipeline(tmp_path):
    from covis.cascade import run_pipeline
    from covis.io import load_binary_mask, load_image
    from covis.metrics import evaluate_pair
    manifest_path, _ = _write_suite(tmp_path, n=1)
    manifest = load_manifest(manifest_path)
    report = cmd_ablation(manifest)
    entry = manifest.entries[0]
    for (ablation, label), row in zip(ABLATION_ARMS, report.rows):
        res = run_pipeline(load_image(entry.pred), PipelineConfig(ablation=ablation))
        direct = evaluate_pair(res.fine.mask, load_binary_mask(entry.gt))
        assert row.label == label
        assert row.report.mae == direct.mae
        assert row.report.f_max == direct.f_max


def _pred_gt_manifest(tmp_path, name, shift=0):
    d = tmp_path / name
    d.mkdir()
    entries = []
    for stem, arr in _gt_shapes().items():
        gt_path = d / f"{stem}_gt.png"
        pred_path = d / f"{stem}_pred.png"
        _write_mask(arr, gt_path)
        _write_mask(np.roll(arr, shift, axis=1), pred_path)
        entries.append({"pred": str(pred_path), "gt": str(gt_path)})
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps({"name": name, "entries": entries}))
    return path


def test_generalize_rows_and_isolation(tmp_path):
    good = _pred_gt_manifest(tmp_path, "alpha")
    shifted = _pred_gt_manifest(tmp_path, "beta", shift=3)
    broken_dir = tmp_path / "broken"
    broken_dir.mkdir()
    _write_mask(np.ones((4, 4)), broken_dir / "p.png")
    _write_mask(np.ones((5, 5)), broken_dir / "g.png")
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({
        "name": "broken",
        "entries": [{"pred": str(broken_dir / "p.png"), "gt": str(broken_dir / "g.png")}],
    }))
    report = cmd_generalize([load_manifest(p) for p in (good, shifted, broken)])
    assert [r.label for r in report.rows] == ["alpha", "beta"]
    assert report.rows[0].report.mae == 0.0
    assert report.rows[1].report.mae > 0.0
    assert len(report.errors) == 1 and report.errors[0][0] == "broken"


def test_generalize_empty_list():
    with pytest.raises(EmptyReportListError):
        cmd_generalize([])


def test_config_digest_tracks_config():
    base = bench._config_digest(PipelineConfig())
    assert len(base) == 16 and int(base, 16) >= 0
    assert base == bench._config_digest(PipelineConfig())
    assert base != bench._config_digest(PipelineConfig(ablation="no_fine"))


_DESCRIBE_FILES = ("coarse.json", "fine.png", "features.json",
                   "prompt.txt", "description.txt", "pilot.json")


def test_describe_file_contract(tmp_path):
    image, _ = disk_image()
    img_path = tmp_path / "disk.png"
    save_image(image, img_path)
    out = tmp_path / "out"
    doc = cmd_describe(img_path, out)
    for name in _DESCRIBE_FILES:
        assert (out / name).is_file(), name
    coarse = json.loads((out / "coarse.json").read_text())
    assert len(coarse["proposals"]) >= 1
    assert set(coarse["proposals"][0]) == {"box", "score", "area"}
    features = json.loads((out / "features.json").read_text())
    assert features["provenance"] == {
        "ablation": "full", "coarse_backend": "classical", "fine_backend": "classical",
    }
    pilot = json.loads((out / "pilot.json").read_text())
    assert pilot == {"coverage": 1.0, "consistency": 1.0, "violations": []}
    text = (out / "description.txt").read_text()
    assert text == doc["description"] + "\n"
    prompt = (out / "prompt.txt").read_text()
    assert "Use vocabulary from these dimensions" in prompt
    assert doc["generator"] == "stub"
    assert doc["out_dir"] == str(out)


def test_describe_reruns_byte_identical(tmp_path):
    image, _ = disk_image()
    img_path = tmp_path / "disk.png"
    save_image(image, img_path)
    cmd_describe(img_path, tmp_path / "one")
    cmd_describe(img_path, tmp_path / "two")
    for name in _DESCRIBE_FILES:
        a = (tmp_path / "one" / name).read_bytes()
        b = (tmp_path / "two" / name).read_bytes()
        assert a == b, name


def test_describe_uniform_image(tmp_path):
    from covis.io import RasterImage
    flat = RasterImage(np.full((24, 24, 3), 128, dtype=np.uint8))
    img_path = tmp_path / "flat.png"
    save_image(flat, img_path)
    out = tmp_path / "out"
    doc = cmd_describe(img_path, out)
    coarse = json.loads((out / "coarse.json").read_text())
    assert coarse["proposals"] == []
    features = json.loads((out / "features.json").read_text())
    assert features["composition"]["area_ratio"] == 0.0
    assert features["composition"]["region_count"] == 0
    assert doc["description"]
