from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_patch
from tilkit.annotation_io import (
    CocoImage,
    DatasetManifest,
    ManifestRecord,
    coco_dict,
    emit_yolo,
    load_image,
    parse_coco,
    parse_yolo,
    read_manifest,
    save_image,
    write_manifest,
)
from tilkit.errors import (
    CocoParseError,
    ContractError,
    InputError,
    ReferentialError,
    SchemaError,
    UnsupportedImageError,
)
from tilkit.types import BBox, PixelPatch

DATA = Path(__file__).parent / "data"


def coco_text(images, annotations, categories=None):
    if categories is None:
        categories = [{"id": 1, "name": "lymphocyte"}]
    return json.dumps(
        {"images": images, "annotations": annotations, "categories": categories}
    ).encode()


class TestParseCoco:
    def test_single_image_single_box(self):
        text = coco_text(
            [{"id": 1, "width": 256, "height": 256, "file_name": "a.png"}],
            [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [64, 64, 32, 32]}],
        )
        records = parse_coco(text)
        assert len(records) == 1
        image, boxes = records[0]
        assert image == CocoImage(id=1, width=256, height=256, file_name="a.png")
        assert boxes == [BBox(64, 64, 32, 32, class_id=0)]

    def test_empty_dataset(self):
        assert parse_coco(coco_text([], [])) == []

    def test_paper_scale_image_count(self):
        n = 1879
        images = [{"id": i, "width": 100 + i % 400, "height": 100} for i in range(n)]
        records = parse_coco(coco_text(images, []))
        assert len(records) == n

    def test_annotations_attach_by_image_id(self):
        text = coco_text(
            [
                {"id": 10, "width": 64, "height": 64},
                {"id": 20, "width": 64, "height": 64},
            ],
            [
                {"id": 1, "image_id": 20, "category_id": 1, "bbox": [1, 2, 3, 4]},
                {"id": 2, "image_id": 20, "category_id": 1, "bbox": [5, 6, 7, 8]},
            ],
        )
        records = parse_coco(text)
        assert [len(b) for _, b in records] == [0, 2]

    def test_malformed_json_reports_byte_offset(self):
        with pytest.raises(CocoParseError, match=r"byte offset \d+"):
            parse_coco(b'{"images": [,]}')

    def test_missing_field_named(self):
        with pytest.raises(SchemaError, match="categories"):
            parse_coco(b'{"images": [], "annotations": []}')
        with pytest.raises(SchemaError, match=r"images\[0\]\.width"):
            parse_coco(coco_text([{"id": 1, "height": 2}], []))

    def test_dangling_image_id(self):
        text = coco_text(
            [{"id": 1, "width": 10, "height": 10}],
            [{"id": 1, "image_id": 99, "category_id": 1, "bbox": [1, 1, 2, 2]}],
        )
        with pytest.raises(ReferentialError, match="99"):
            parse_coco(text)

    def test_multiclass_rejected_by_default(self):
        cats = [{"id": 1, "name": "lymphocyte"}, {"id": 2, "name": "plasma"}]
        with pytest.raises(InputError, match="single-class"):
            parse_coco(coco_text([], [], cats))

    def test_multiclass_mapped_densely_when_allowed(self):
        cats = [{"id": 5, "name": "b"}, {"id": 3, "name": "a"}]
        text = coco_text(
            [{"id": 1, "width": 50, "height": 50}],
            [
                {"id": 1, "image_id": 1, "category_id": 5, "bbox": [1, 1, 2, 2]},
                {"id": 2, "image_id": 1, "category_id": 3, "bbox": [4, 4, 2, 2]},
            ],
            cats,
        )
        _, boxes = parse_coco(text, allow_multiclass=True)[0]
        assert [b.class_id for b in boxes] == [1, 0]

    @given(st.integers(min_value=0, max_value=30))
    def test_total_over_schema(self, n):
        images = [{"id": i, "width": 32, "height": 32} for i in range(n)]
        assert len(parse_coco(coco_text(images, []))) == n


class TestCocoRoundTrip:
    def test_boxes_round_trip_exactly(self):
        images = [CocoImage(id=1, width=200, height=100, file_name="p.png")]
        boxes = [[BBox(12.25, 31.5, 8.75, 19.0)]]
        doc = json.dumps(coco_dict(images, boxes)).encode()
        (image, parsed), = parse_coco(doc)
        assert image == images[0]
        assert parsed == boxes[0]


class TestEmitYolo:
    def test_single_box_golden(self):
        patch = make_patch(256, 256, [BBox(64, 64, 32, 32)])
        assert emit_yolo(patch) == (DATA / "yolo_single_box.txt").read_text()

    def test_empty_golden(self):
        patch = make_patch(256, 256)
        assert emit_yolo(patch) == (DATA / "yolo_empty.txt").read_text() == ""

    def test_full_frame_golden(self):
        patch = make_patch(256, 256, [BBox(0, 0, 256, 256)])
        assert emit_yolo(patch) == (DATA / "yolo_full_frame.txt").read_text()

    def test_two_boxes_golden(self):
        patch = make_patch(256, 256, [BBox(64, 64, 32, 32), BBox(197.5, 43.5, 15, 23)])
        assert emit_yolo(patch) == (DATA / "yolo_two_boxes.txt").read_text()

    def test_out_of_bounds_raises_instead_of_clamping(self):
        patch = make_patch(128, 128)
        patch.boxes.append(BBox(120, 10, 20, 20))
        with pytest.raises(ContractError):
            emit_yolo(patch)

    @given(
        st.integers(min_value=16, max_value=1024),
        st.integers(min_value=16, max_value=1024),
        st.data(),
    )
    def test_invertible_within_quantization(self, w, h, data):
        x = data.draw(st.floats(min_value=0, max_value=w - 1, allow_nan=False))
        y = data.draw(st.floats(min_value=0, max_value=h - 1, allow_nan=False))
        bw = data.draw(st.floats(min_value=0.01, max_value=w - x, exclude_min=True))
        bh = data.draw(st.floats(min_value=0.01, max_value=h - y, exclude_min=True))
        box = BBox(x, y, bw, bh)
        patch = make_patch(min(w, 64), min(h, 64))  # pixels irrelevant, keep small
        patch.patch = PixelPatch(np.zeros((h, w, 3), dtype=np.uint8))
        patch.boxes = [box]
        (recovered,) = parse_yolo(emit_yolo(patch), w, h)
        assert abs(recovered.x_min - box.x_min) <= 1e-6 * w
        assert abs(recovered.y_min - box.y_min) <= 1e-6 * h
        assert abs(recovered.width - box.width) <= 1e-6 * w
        assert abs(recovered.height - box.height) <= 1e-6 * h


class TestImageIO:
    def test_round_trip_identity(self, tmp_path):
        patch = make_patch(37, 23).patch
        p1 = tmp_path / "a.png"
        p2 = tmp_path / "b.png"
        save_image(patch, p1)
        loaded = load_image(p1)
        save_image(loaded, p2)
        assert load_image(p2).same_pixels(loaded)
        assert loaded.same_pixels(patch)

    def test_two_pixel_round_trip(self, tmp_path):
        pixels = np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
        path = tmp_path / "two.png"
        save_image(PixelPatch(pixels), path)
        assert np.array_equal(load_image(path).pixels, pixels)

    def test_rgba_alpha_dropped(self, tmp_path):
        from PIL import Image

        rgba = np.zeros((4, 4, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 128
        path = tmp_path / "rgba.png"
        Image.fromarray(rgba, "RGBA").save(path)
        loaded = load_image(path)
        assert loaded.pixels.shape == (4, 4, 3)
        assert loaded.pixels[0, 0, 0] == 200

    def test_16_bit_png_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "deep.png"
        Image.new("I;16", (4, 4), 1000).save(path)
        with pytest.raises(UnsupportedImageError, match="mode"):
            load_image(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_image(tmp_path / "nope.png")


class TestManifest:
    def _manifest(self):
        return DatasetManifest(
            records=[
                ManifestRecord("a_x0_y0.png", "a_x0_y0.txt", "a", (0, 0), "stretch", 0),
                ManifestRecord("b_x256_y0.png", "b_x256_y0.txt", "b", (256, 0), "tile", 3),
            ],
            global_seed=1234,
            config={"variant": "optimized"},
        )

    def test_round_trip(self, tmp_path):
        manifest = self._manifest()
        path = tmp_path / "manifest.json"
        write_manifest(manifest, path)
        loaded = read_manifest(path)
        assert loaded == manifest

    def test_empty_manifest_valid(self, tmp_path):
        path = tmp_path / "m.json"
        write_manifest(DatasetManifest(), path)
        assert read_manifest(path).records == []

    def test_dropped_count_preserved(self, tmp_path):
        path = tmp_path / "m.json"
        write_manifest(self._manifest(), path)
        assert read_manifest(path).records[1].dropped_box_count == 3

    def test_version_mismatch_warns_not_fails(self, tmp_path, caplog):
        path = tmp_path / "m.json"
        write_manifest(self._manifest(), path)
        doc = json.loads(path.read_text())
        doc["version"] = "0.0.0-other"
        path.write_text(json.dumps(doc))
        with caplog.at_level("WARNING"):
            loaded = read_manifest(path)
        assert loaded.version == "0.0.0-other"
        assert any("version" in message for message in caplog.messages)

    def test_duplicate_paths_rejected(self):
        rec = ManifestRecord("same.png", "same.txt", "a", (0, 0), "pad", 0)
        with pytest.raises(ContractError):
            DatasetManifest(records=[rec, rec])
