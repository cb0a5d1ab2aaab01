"""Exporter tests, including the cross-package round-trip: files written by
this package must decode in the embedding toolkit with matching shape,
classes, and labels."""

import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from embexport.cli import main
from embexport.dataset import index_from_csv, index_from_folder
from embexport.encoders import EncoderError, ToyRandomProjection, build_encoder
from embexport.export import ExportJob, export

from vpet.emb_io import read_embedding_file, read_manifest


def paint(path, color, size=(20, 16)):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path)


@pytest.fixture
def image_tree(tmp_path):
    root = tmp_path / "images"
    paint(root / "cat" / "b.png", (200, 30, 30))
    paint(root / "cat" / "a.png", (180, 40, 40))
    paint(root / "dog" / "x.png", (30, 30, 200))
    paint(root / "dog" / "y.png", (40, 40, 180))
    return root


class TestIndexing:
    def test_folder_layout_sorted(self, image_tree):
        index = index_from_folder(image_tree)
        assert index.class_names == ("cat", "dog")
        assert [p.name for p in index.paths] == ["a.png", "b.png", "x.png",
                                                 "y.png"]
        assert index.labels == (0, 0, 1, 1)

    def test_csv_index(self, tmp_path, image_tree):
        csv_path = tmp_path / "index.csv"
        csv_path.write_text(
            "path,label\n"
            f"{image_tree}/dog/x.png,canine\n"
            f"{image_tree}/cat/a.png,feline\n"
        )
        index = index_from_csv(csv_path)
        assert index.class_names == ("canine", "feline")
        assert [p.name for p in index.paths] == ["a.png", "x.png"]
        assert index.labels == (1, 0)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            index_from_folder(tmp_path / "nope")


class TestEncoders:
    def test_toy_encoder_deterministic(self):
        enc_a = build_encoder("toy:rp-16-5")
        enc_b = build_encoder("toy:rp-16-5")
        img = Image.new("RGB", (33, 21), (10, 200, 50))
        out_a = enc_a.encode_batch([img])
        out_b = enc_b.encode_batch([img])
        assert out_a.shape == (1, 16)
        assert np.array_equal(out_a, out_b)

    def test_toy_default_seed_from_name(self):
        assert isinstance(build_encoder("toy:rp-8"), ToyRandomProjection)

    def test_unknown_model(self):
        with pytest.raises(EncoderError):
            build_encoder("magic:foo")

    def test_bad_toy_spec(self):
        with pytest.raises(EncoderError):
            build_encoder("toy:whatever")


class TestExport:
    def test_round_trip_into_primary_toolkit(self, tmp_path, image_tree):
        """Acceptance: exported file decodes with matching (n, d, C, labels)."""
        out = tmp_path / "feats.emb"
        export(ExportJob(model_name="toy:rp-24-3", input_path=str(image_tree),
                         output_path=str(out), batch_size=3))
        ds = read_embedding_file(out)
        assert ds.n == 4
        assert ds.d == 24
        assert ds.class_count == 2
        assert ds.labels.tolist() == [0, 0, 1, 1]
        assert ds.ids.tolist() == [0, 1, 2, 3]
        manifest = read_manifest(out)
        assert manifest["class_names"] == ["cat", "dog"]
        assert manifest["source_model"] == "toy:rp-24-3"
        assert manifest["skipped"] == []

    def test_re_export_is_byte_identical(self, tmp_path, image_tree):
        """Acceptance: deterministic inference makes re-export reproducible."""
        out_a = tmp_path / "a.emb"
        out_b = tmp_path / "b.emb"
        for out in (out_a, out_b):
            export(ExportJob(model_name="toy:rp-24-3",
                             input_path=str(image_tree),
                             output_path=str(out), batch_size=2))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_batch_size_does_not_change_rows(self, tmp_path, image_tree):
        outs = []
        for batch in (1, 3, 64):
            out = tmp_path / f"b{batch}.emb"
            export(ExportJob(model_name="toy:rp-16-1",
                             input_path=str(image_tree),
                             output_path=str(out), batch_size=batch))
            outs.append(read_embedding_file(out).features)
        assert np.array_equal(outs[0], outs[1])
        assert np.array_equal(outs[0], outs[2])

    def test_undecodable_image_skipped_and_recorded(self, tmp_path, image_tree):
        bad = image_tree / "cat" / "broken.png"
        bad.write_bytes(b"this is not a png")
        out = tmp_path / "skip.emb"
        with pytest.warns(UserWarning, match="skipping undecodable"):
            export(ExportJob(model_name="toy:rp-8-1",
                             input_path=str(image_tree),
                             output_path=str(out)))
        ds = read_embedding_file(out)
        assert ds.n == 4  # the broken file contributed no row
        manifest = read_manifest(out)
        assert len(manifest["skipped"]) == 1
        assert manifest["skipped"][0].endswith("broken.png")

    def test_labels_usable_by_primary_split(self, tmp_path, image_tree):
        from vpet.data import SplitSpec, make_split

        out = tmp_path / "feats.emb"
        export(ExportJob(model_name="toy:rp-8-2", input_path=str(image_tree),
                         output_path=str(out)))
        split = make_split(read_embedding_file(out),
                           SplitSpec(shots_per_class=1, seed=4))
        assert split.labeled.n == 2
        assert split.unlabeled.n == 2


class TestCli:
    def test_cli_export(self, tmp_path, image_tree, capsys):
        out = tmp_path / "cli.emb"
        code = main(["--model", "toy:rp-8-9", "--images", str(image_tree),
                     "--out", str(out), "--batch", "2"])
        assert code == 0
        assert read_embedding_file(out).n == 4
        assert capsys.readouterr().out.strip() == str(out)

    def test_cli_unknown_flag_usage_error(self, capsys):
        assert main(["--model", "toy:rp-8", "--nope", "x"]) == 1

    def test_cli_unknown_model_data_error(self, tmp_path, image_tree, capsys):
        code = main(["--model", "nonsense:z", "--images", str(image_tree),
                     "--out", str(tmp_path / "x.emb")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_module_invocation(self, tmp_path, image_tree):
        out = tmp_path / "mod.emb"
        proc = subprocess.run(
            [sys.executable, "-m", "embexport.cli", "--model", "toy:rp-8-9",
             "--images", str(image_tree), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
