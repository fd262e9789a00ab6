"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as the
criteria execute.
"""

from __future__ import annotations

import functools
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from froc_oracle import brute_curve, brute_score
from tilkit.annotation_io import emit_yolo, parse_coco, coco_dict, CocoImage
from tilkit.cli import main as cli_main
from tilkit.froc import FrocConfig, froc_curve, froc_score
from tilkit.postprocess import adjust_partial_centers, size_filter
from tilkit.rng import RngStream
from tilkit.stretcher import DonorPool, stretch_compose
from tilkit.synth import gen_detections, gen_patch, patch_area_mm2
from tilkit.tiler import plan_windows, tile
from tilkit.types import BBox, Detection

DATA = Path(__file__).parent / "data"


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL  {name}")
                raise
            print(f"PASS  {name}")
            return result

        return wrapper

    return decorate


def _random_froc_instance(rng: np.random.Generator):
    n_images = int(rng.integers(1, 11))
    per_image = []
    for i in range(n_images):
        n_gt = int(rng.integers(1 if i == 0 else 0, 21))
        gt = [(float(rng.uniform(0, 120)), float(rng.uniform(0, 120))) for _ in range(n_gt)]
        n_det = int(rng.integers(0, 21))
        dets = []
        for _ in range(n_det):
            conf = float(rng.uniform(0.01, 0.99))
            if rng.uniform() < 0.5:
                conf = round(conf, 1)  # provoke confidence ties
            near_gt = gt and rng.uniform() < 0.5
            if near_gt:
                gx, gy = gt[int(rng.integers(0, len(gt)))]
                cx, cy = gx + float(rng.uniform(-10, 10)), gy + float(rng.uniform(-10, 10))
            else:
                cx, cy = float(rng.uniform(0, 120)), float(rng.uniform(0, 120))
            dets.append(Detection(cx=cx, cy=cy, width=10, height=10, confidence=conf))
        per_image.append((gt, dets, float(rng.uniform(0.5, 2.0))))
    return per_image


@criterion("FROC oracle equivalence (200 random instances, exact, < 10 s)")
def test_froc_oracle_equivalence():
    rng = np.random.default_rng(20240917)
    ops = (10.0, 20.0, 50.0, 100.0, 200.0, 300.0)
    started = time.perf_counter()
    for _ in range(200):
        per_image = _random_froc_instance(rng)
        curve = froc_curve(per_image, FrocConfig(hit_radius=8.0))
        thresholds, points = brute_curve(per_image, radius=8.0)
        assert curve.thresholds == thresholds
        assert len(curve.points) == len(points)
        for (fp_a, s_a), (fp_b, s_b) in zip(curve.points, points):
            assert abs(fp_a - fp_b) <= 1e-12
            assert abs(s_a - s_b) <= 1e-12
        assert abs(froc_score(curve, ops) - brute_score(points, list(ops))) <= 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"oracle comparison took {elapsed:.1f} s"


@criterion("tiling conservation and integer-exact round-trip (100 patches, 256-1024 px)")
def test_tiling_conservation():
    rng = np.random.default_rng(7)
    for i in range(100):
        w = int(rng.integers(256, 1025))
        h = int(rng.integers(256, 1025))
        n_cells = int(rng.integers(0, 13))
        patch = gen_patch(RngStream(100, f"tile-{i}"), w, h, n_cells, source_id=f"tile-{i}")
        tiles = tile(patch, 256)
        windows = plan_windows(w, h, 256)
        for box in patch.boxes:
            containing = sum(
                1
                for win in windows
                if box.x_min >= win.x0
                and box.y_min >= win.y0
                and box.x_max <= win.x0 + 256
                and box.y_max <= win.y0 + 256
            )
            listed = 0
            for t in tiles:
                for kept in t.patch.boxes:
                    restored = kept.translate(t.patch.origin[0], t.patch.origin[1])
                    if restored == box:  # exact float equality: integer-exact round-trip
                        listed += 1
            assert listed == containing, f"box {box} in {listed} tiles, {containing} windows"
        for t in tiles:
            assert t.patch.patch.pixels.shape == (256, 256, 3)


@criterion("stretch invariants: size, verbatim transplants, IoU cap, mirror recovery (100 patches)")
def test_stretch_invariants():
    rng = np.random.default_rng(21)
    patches = []
    for i in range(100):
        w = int(rng.integers(32, 256))
        h = int(rng.integers(32, 256))
        n_cells = int(rng.integers(0, 5))
        patches.append(
            gen_patch(RngStream(300, f"stretch-{i}"), w, h, n_cells, source_id=f"stretch-{i}")
        )
    pool = DonorPool.from_patches(patches)
    total_transplants = 0
    for ann in patches:
        outcome = stretch_compose(ann, pool, RngStream(301, ann.source_id))
        out = outcome.patch
        assert out.patch.pixels.shape == (256, 256, 3)
        for box in out.boxes:
            assert box.fits_in(256, 256)

        mirror_w = min(2 * ann.width - 1, 256)
        mirror_h = min(2 * ann.height - 1, 256)
        reflected = np.pad(
            ann.patch.pixels,
            ((0, 256 - ann.height), (0, 256 - ann.width), (0, 0)),
            mode="symmetric",
        )
        assert np.array_equal(out.patch.pixels[:mirror_h, :mirror_w], reflected[:mirror_h, :mirror_w])

        transplant_boxes = []
        for t in outcome.transplants:
            region = out.patch.pixels[t.dest_y : t.dest_y + t.height, t.dest_x : t.dest_x + t.width]
            assert np.array_equal(region, t.donor_pixels), "transplant not bit-identical"
            transplant_boxes.append(BBox(t.dest_x, t.dest_y, t.width, t.height))
        for i, a in enumerate(transplant_boxes):
            for b in transplant_boxes[i + 1 :]:
                assert a.iou(b) <= 0.1
            for other in out.boxes:
                if other not in transplant_boxes:
                    assert a.iou(other) <= 0.1
        total_transplants += len(outcome.transplants)
    assert total_transplants > 0, "no transplant happened; invariant checks were vacuous"


@criterion("postprocess: size band exact, size_filter and center adjustment idempotent")
def test_postprocess_properties():
    dets_strategy = st.lists(
        st.builds(
            Detection,
            cx=st.floats(min_value=-5, max_value=261),
            cy=st.floats(min_value=-5, max_value=261),
            width=st.floats(min_value=0.5, max_value=40),
            height=st.floats(min_value=0.5, max_value=40),
            confidence=st.floats(min_value=0, max_value=1),
        ),
        max_size=40,
    )

    @settings(max_examples=200, deadline=None)
    @given(dets_strategy)
    def check(dets):
        kept = size_filter(dets)
        assert kept == [d for d in dets if 8 <= d.width <= 20 and 8 <= d.height <= 20]
        assert size_filter(kept) == kept
        adjusted = adjust_partial_centers(dets, 256, 256)
        assert adjust_partial_centers(adjusted, 256, 256) == adjusted

    check()


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


@criterion("end-to-end determinism: same seed twice, and --jobs 1 == --jobs 8")
def test_end_to_end_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    rc = cli_main(
        ["synth", "--out", str(corpus), "--n-patches", "30", "--seed", "5", "--large-frac", "0.2"]
    )
    assert rc == 0
    trees = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / name
        rc = cli_main(
            ["curate", "--coco", str(corpus / "annotations.json"), "--images",
             str(corpus / "images"), "--out", str(out), "--variant", "optimized",
             "--seed", "7", "--jobs", str(jobs)]
        )
        assert rc == 0
        trees.append(_tree_bytes(out))
    assert trees[0] == trees[1], "same seed, same jobs: trees differ"
    assert trees[0] == trees[2], "jobs 1 vs jobs 8: trees differ"


@criterion("synthetic closed loop: tp_rate 1 scores exactly 1.0, tp_rate 0 scores 0.0")
def test_synthetic_closed_loop():
    per_image_full = []
    per_image_none = []
    for i in range(8):
        patch = gen_patch(RngStream(42, f"loop-{i}"), 256, 256, n_cells=10, source_id=f"l{i}")
        area = patch_area_mm2(patch)
        centers = [b.center for b in patch.boxes]
        full = gen_detections(patch.boxes, 1.0, 0.0, area, 3.0, RngStream(43, f"full-{i}"))
        none = gen_detections(patch.boxes, 0.0, 0.0, area, 3.0, RngStream(43, f"none-{i}"))
        assert none == []
        per_image_full.append((centers, full, area))
        per_image_none.append((centers, none, area))
    config = FrocConfig(hit_radius=8.0)
    score_full = froc_score(froc_curve(per_image_full, config))
    assert score_full == 1.0
    score_none = froc_score(froc_curve(per_image_none, config))
    assert score_none == 0.0


@criterion("format golden files: YOLO byte-exact, COCO round-trip exact")
def test_format_goldens(tmp_path):
    from conftest import make_patch

    cases = [
        ([BBox(64, 64, 32, 32)], "yolo_single_box.txt"),
        ([], "yolo_empty.txt"),
        ([BBox(0, 0, 256, 256)], "yolo_full_frame.txt"),
        ([BBox(64, 64, 32, 32), BBox(197.5, 43.5, 15, 23)], "yolo_two_boxes.txt"),
    ]
    for boxes, golden in cases:
        patch = make_patch(256, 256, boxes)
        assert emit_yolo(patch).encode() == (DATA / golden).read_bytes(), golden

    images = [CocoImage(id=7, width=311, height=177, file_name="roi_7.png")]
    boxes = [[BBox(12.25, 31.5, 8.75, 19.0), BBox(0.0, 0.5, 1.25, 2.75)]]
    import json

    doc = json.dumps(coco_dict(images, boxes)).encode()
    (image, parsed), = parse_coco(doc)
    assert image == images[0]
    assert parsed == boxes[0]


@criterion("throughput: 2000-patch corpus curated in under 120 s on 4 workers")
def test_throughput(tmp_path):
    corpus = tmp_path / "corpus2000"
    rc = cli_main(
        ["synth", "--out", str(corpus), "--n-patches", "2000", "--seed", "99",
         "--large-frac", "0.15"]
    )
    assert rc == 0
    out = tmp_path / "curated"
    started = time.perf_counter()
    rc = cli_main(
        ["curate", "--coco", str(corpus / "annotations.json"), "--images",
         str(corpus / "images"), "--out", str(out), "--variant", "optimized",
         "--seed", "1", "--jobs", "4"]
    )
    elapsed = time.perf_counter() - started
    assert rc == 0
    n_outputs = len(list(out.glob("*.png")))
    assert n_outputs >= 2000
    assert elapsed < 120.0, f"curation took {elapsed:.1f} s"
    print(f"      curated {n_outputs} outputs in {elapsed:.1f} s")
