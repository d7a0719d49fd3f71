"""Exports validate against the primary toolkit and are deterministic."""

import json

import numpy as np
import pytest

from conftest import ADAPTER, PRIMARY, run_cli

from semsplat_adapters import AdapterError, AdapterJob, ColorStatsEncoder, export_features, make_backend


class TestFeatureExport:
    def test_sgfm_passes_primary_validate(self, sample_images, tmp_path):
        out = tmp_path / "features"
        run_cli(ADAPTER, ["export-features", "--outdir", str(out)]
                + [arg for p in sample_images for arg in ("--image", str(p))])
        files = sorted(out.glob("*.sgfm"))
        assert [f.name for f in files] == ["0000.sgfm", "0001.sgfm", "0002.sgfm"]
        for f in files:
            result = run_cli(PRIMARY, ["validate", "--featuremap", str(f)])
            assert "feature_map" in result.output if hasattr(result, "output") \
                else "feature_map" in result.stdout

    def test_header_shape_matches_image(self, sample_images, tmp_path):
        out = tmp_path / "features"
        job = AdapterJob(images=(sample_images[0],), kind="pixel", out_dir=out,
                         channels=16)
        written = export_features(job)
        import struct
        raw = written[0].read_bytes()
        assert raw[:4] == b"SGFM"
        version, h, w, c = struct.unpack("<IIII", raw[4:20])
        assert (h, w, c) == (40, 48, 16)

    def test_deterministic_bytes(self, sample_images, tmp_path):
        blobs = []
        for d in ("a", "b"):
            out = tmp_path / d
            job = AdapterJob(images=tuple(sample_images), kind="pixel", out_dir=out)
            export_features(job)
            blobs.append((out / "0001.sgfm").read_bytes())
        assert blobs[0] == blobs[1]

    def test_features_are_unit_norm(self, sample_images):
        enc = ColorStatsEncoder(channels=16)
        from semsplat_adapters.jobs import load_rgb
        feats = enc.encode_image(load_rgb(sample_images[0])).astype(np.float64)
        norms = np.linalg.norm(feats, axis=2)
        assert np.abs(norms - 1.0).max() < 1e-5


class TestTextExport:
    def test_sgte_passes_primary_validate(self, tmp_path):
        out = tmp_path / "q.sgte"
        run_cli(ADAPTER, ["export-text", "--labels", "red,blue,green",
                          "--out", str(out)])
        result = run_cli(PRIMARY, ["validate", "--queries", str(out)])
        assert "text_queries" in result.stdout

    def test_rows_unit_norm_and_aligned_with_images(self, tmp_path):
        enc = ColorStatsEncoder(channels=16)
        rows = enc.encode_labels(["red", "blue"]).astype(np.float64)
        np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-5)
        # a solid red patch scores higher against "red" than against "blue"
        patch = np.tile(np.array([0.9, 0.1, 0.1]), (12, 12, 1))
        emb = enc.encode_patch(patch).astype(np.float64)
        assert emb @ rows[0] > emb @ rows[1]

    def test_unknown_word_rejected(self, tmp_path):
        result = run_cli(ADAPTER, ["export-text", "--labels", "florb",
                                   "--out", str(tmp_path / "q.sgte")], check=False)
        assert result.returncode != 0
        assert "florb" in result.stderr + result.stdout


class TestMaskExport:
    def test_masksets_pass_primary_validate(self, sample_images, tmp_path):
        out = tmp_path / "masks"
        run_cli(ADAPTER, ["export-masks", "--level", "instance",
                          "--outdir", str(out)]
                + [arg for p in sample_images for arg in ("--image", str(p))])
        files = sorted(out.glob("*.masks.json"))
        assert len(files) == 3
        for f in files:
            result = run_cli(PRIMARY, ["validate", "--maskset", str(f)])
            assert "masks" in result.stdout
        doc = json.loads(files[0].read_text())
        assert all("embedding" in m for m in doc["masks"])

    def test_image_level_embeddings_present(self, sample_images, tmp_path):
        out = tmp_path / "masks"
        job = AdapterJob(images=(sample_images[0],), kind="image", out_dir=out)
        written = export_features(job)
        doc = json.loads(written[0].read_text())
        emb = np.array(doc["masks"][0]["embedding"])
        assert emb.shape == (16,)
        assert abs(np.linalg.norm(emb) - 1.0) < 1e-4

    def test_idmap_export_usable_by_unify(self, sample_images, tmp_path):
        out = tmp_path / "ids"
        run_cli(ADAPTER, ["export-idmap", "--outdir", str(out),
                          "--image", str(sample_images[0])])
        ids = out / "0000.png"
        assert ids.exists()
        onehot = tmp_path / "onehot.sgfm"
        from PIL import Image
        num_ids = int(np.asarray(Image.open(ids)).max())
        run_cli(PRIMARY, ["unify", "--mode", "onehot", "--ids", str(ids),
                          "--num-ids", str(num_ids), "--out", str(onehot)])
        result = run_cli(PRIMARY, ["validate", "--featuremap", str(onehot)])
        assert "feature_map" in result.stdout


class TestBackends:
    def test_unknown_backend_rejected(self):
        with pytest.raises(AdapterError, match="bogus"):
            make_backend("bogus")

    def test_clip_load_failure_names_model(self, monkeypatch):
        monkeypatch.setenv("HF_HUB_OFFLINE", "1")
        monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
        with pytest.raises(AdapterError, match="clip-vit-base-patch32"):
            make_backend("clip")

    def test_fixed_width_backend_channel_mismatch_rejected(self, sample_images,
                                                           tmp_path, monkeypatch):
        # fixed-width models (e.g. CLIP's 512) must match the declared C
        import semsplat_adapters.jobs as jobs_mod

        class FixedWidth(ColorStatsEncoder):
            def __init__(self):
                super().__init__(channels=512)

        monkeypatch.setattr(jobs_mod, "make_backend",
                            lambda name, channels=16, seed=0: FixedWidth())
        job = AdapterJob(images=(sample_images[0],), kind="pixel",
                         out_dir=tmp_path, channels=16)
        with pytest.raises(AdapterError, match="512"):
            export_features(job)
