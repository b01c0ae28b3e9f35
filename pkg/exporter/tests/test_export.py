"""Structural checks on exported matrices, ordering, and the CLI.

Exact feature values are weight-dependent, so every assertion here is
structural: shapes, ordering, finiteness, duplicate-row equality,
determinism under a fixed seed, and byte-level format validity.
Backbones run with seeded random weights to stay offline.
"""

import json
import shutil
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from leafexport import cli
from leafexport.backbones import Darknet53, SetupError, build
from leafexport.runner import InputError, collect_images, export

BACKBONES = ("darknet53-gap", "alexnet-fc7", "vgg19-fc7")
GOOD_IMAGES = 5  # four unique plus one byte-for-byte duplicate


def read_featmat(path):
    """Independent byte-level reader used as the format oracle."""
    raw = Path(path).read_bytes()
    assert raw[:8] == b"FEATMAT1"
    rows, cols, tag_len = struct.unpack_from("<III", raw, 8)
    tag = raw[20 : 20 + tag_len].decode("utf-8")
    values = np.frombuffer(raw, dtype="<f4", offset=20 + tag_len)
    assert values.size == rows * cols
    return rows, cols, tag, values.reshape(rows, cols)


def build_tree(root):
    rng = np.random.default_rng(77)
    for cls, names in (
        ("late_blight", ("img0", "img1")),
        ("healthy", ("img2", "img3")),
    ):
        folder = root / cls
        folder.mkdir(parents=True)
        for name in names:
            pixels = rng.integers(0, 255, size=(60, 70, 3), dtype=np.uint8)
            Image.fromarray(pixels, "RGB").save(folder / f"{name}.png")
    shutil.copyfile(
        root / "late_blight" / "img0.png",
        root / "late_blight" / "dup_of_img0.png",
    )
    (root / "late_blight" / "broken.png").write_bytes(b"this is not a png")


@pytest.fixture(scope="module")
def exports(tmp_path_factory):
    work = tmp_path_factory.mktemp("export")
    images = work / "images"
    build_tree(images)
    results = {}
    for name in BACKBONES:
        out = work / f"{name}.featmat"
        labels = work / f"{name}.labels.csv"
        result = export(
            images,
            name,
            out,
            labels,
            weights="random",
            batch_size=3,  # the duplicate pair spans a batch boundary
            seed=0,
        )
        results[name] = {"out": out, "labels": labels, "result": result}
    return {"images": images, "work": work, **results}


class TestExportStructure:
    def test_shapes_match_backbone_dimensions(self, exports):
        expected = {"darknet53-gap": 1024, "alexnet-fc7": 4096, "vgg19-fc7": 4096}
        for name in BACKBONES:
            rows, cols, tag, _ = read_featmat(exports[name]["out"])
            assert rows == GOOD_IMAGES
            assert cols == expected[name]
            assert tag == name
            assert exports[name]["result"].rows == GOOD_IMAGES

    def test_all_values_finite(self, exports):
        for name in BACKBONES:
            _, _, _, values = read_featmat(exports[name]["out"])
            assert np.isfinite(values).all()

    def test_row_ordering_identical_across_backbones(self, exports):
        first = exports[BACKBONES[0]]["labels"].read_bytes()
        for name in BACKBONES[1:]:
            assert exports[name]["labels"].read_bytes() == first

    def test_labels_are_sorted_ids_with_parent_directory(self, exports):
        lines = exports["alexnet-fc7"]["labels"].read_text("utf-8").splitlines()
        assert lines[0] == "sample_id,label"
        rows = [line.split(",") for line in lines[1:]]
        ids = [r[0] for r in rows]
        assert ids == sorted(ids)
        assert ids == [
            "healthy/img2",
            "healthy/img3",
            "late_blight/dup_of_img0",
            "late_blight/img0",
            "late_blight/img1",
        ]
        assert [r[1] for r in rows] == [
            "healthy",
            "healthy",
            "late_blight",
            "late_blight",
            "late_blight",
        ]

    def test_duplicate_image_rows_identical(self, exports):
        # rows 2 and 3 are the same file bytes under two names, and sit
        # in different inference batches at batch_size = 3
        for name in BACKBONES:
            _, _, _, values = read_featmat(exports[name]["out"])
            assert np.array_equal(values[2], values[3])
            assert not np.array_equal(values[2], values[4])

    def test_corrupt_image_recorded_in_manifest(self, exports):
        for name in BACKBONES:
            manifest = json.loads(
                (Path(str(exports[name]["out"]) + ".manifest.json")).read_text("utf-8")
            )
            assert manifest["backbone"] == name
            assert manifest["rows"] == GOOD_IMAGES
            assert manifest["skipped"] == ["late_blight/broken.png"]
            assert exports[name]["result"].skipped == ("late_blight/broken.png",)

    def test_deterministic_given_seed_and_batching(self, exports):
        # bitwise reproducibility holds for a fixed seed AND batch size;
        # BLAS kernel choice varies with batch shape, so batching is
        # part of the determinism contract
        work = exports["work"]
        again = work / "again.featmat"
        export(
            exports["images"], "alexnet-fc7", again, work / "again.csv",
            weights="random", batch_size=3, seed=0,
        )
        assert again.read_bytes() == exports["alexnet-fc7"]["out"].read_bytes()
        other = work / "other.featmat"
        export(
            exports["images"], "alexnet-fc7", other, work / "other.csv",
            weights="random", batch_size=3, seed=1,
        )
        assert other.read_bytes() != again.read_bytes()

    def test_loadable_by_primary_component(self, exports):
        pytest.importorskip("blightpipe")
        from blightpipe.featstore import load_dataset, load_featmat

        matrix = load_featmat(exports["darknet53-gap"]["out"])
        assert (matrix.rows, matrix.cols) == (GOOD_IMAGES, 1024)
        assert matrix.source_tag == "darknet53-gap"
        ds = load_dataset(
            exports["darknet53-gap"]["out"], exports["darknet53-gap"]["labels"]
        )
        assert ds.rows == GOOD_IMAGES
        assert ds.labels.tolist() == [-1, -1, 1, 1, 1]
        assert ds.sample_ids[0] == "healthy/img2"


class TestCollection:
    def test_missing_tree(self, tmp_path):
        with pytest.raises(InputError):
            collect_images(tmp_path / "nope")

    def test_empty_tree(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(InputError):
            collect_images(tmp_path / "empty")

    def test_extension_collision(self, tmp_path):
        folder = tmp_path / "c"
        folder.mkdir()
        img = np.zeros((8, 8, 3), dtype=np.uint8)
        Image.fromarray(img, "RGB").save(folder / "a.png")
        Image.fromarray(img, "RGB").save(folder / "a.jpg")
        with pytest.raises(InputError):
            collect_images(tmp_path)

    def test_non_image_files_ignored(self, tmp_path):
        folder = tmp_path / "c"
        folder.mkdir()
        Image.fromarray(np.zeros((8, 8, 3), np.uint8), "RGB").save(folder / "a.png")
        (folder / "notes.txt").write_text("ignored")
        entries = collect_images(tmp_path)
        assert [e[0] for e in entries] == ["c/a"]


class TestBackboneConstruction:
    def test_darknet_output_width(self):
        model = Darknet53().eval()
        import torch

        with torch.no_grad():
            out = model(torch.zeros(1, 3, 256, 256))
        assert tuple(out.shape) == (1, 1024)

    def test_unknown_backbone(self):
        with pytest.raises(SetupError):
            build("resnet50", "random")

    def test_pretrained_darknet_needs_weights_file(self):
        with pytest.raises(SetupError):
            build("darknet53-gap", "pretrained")

    def test_invalid_weights_mode(self):
        with pytest.raises(SetupError):
            build("alexnet-fc7", "kaiming")


class TestCli:
    def test_missing_images_dir(self, tmp_path, capsys):
        rc = cli.main(
            [
                "--backbone", "alexnet-fc7",
                "--images", str(tmp_path / "none"),
                "--out", str(tmp_path / "o.featmat"),
                "--labels", str(tmp_path / "l.csv"),
                "--weights", "random",
            ]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_backbone_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(
                [
                    "--backbone", "lenet",
                    "--images", str(tmp_path),
                    "--out", "o",
                    "--labels", "l",
                ]
            )
        assert exc.value.code == 2

    def test_launcher_script_runs_an_export(self, tmp_path):
        images = tmp_path / "images"
        build_tree(images)
        script = Path(__file__).resolve().parents[1] / "export.py"
        out = tmp_path / "alex.featmat"
        proc = subprocess.run(
            [
                sys.executable, str(script),
                "--backbone", "alexnet-fc7",
                "--images", str(images),
                "--out", str(out),
                "--labels", str(tmp_path / "labels.csv"),
                "--weights", "random",
                "--seed", "0",
            ],
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        assert f"wrote {GOOD_IMAGES}x4096 features" in proc.stdout
        assert "skipping unreadable image late_blight/broken.png" in proc.stderr
        rows, cols, tag, _ = read_featmat(out)
        assert (rows, cols, tag) == (GOOD_IMAGES, 4096, "alexnet-fc7")
