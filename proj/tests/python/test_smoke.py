"""Python smoke tests for the vitscope extension module."""

import json
import math

import numpy as np
import pytest

import vitscope as vs


def test_feature_names_order():
    names = vs.feature_names()
    assert len(names) == 16
    assert names[0] == "circle"
    assert names[5] == "red"
    assert names[11] == "top-left"
    assert vs.feature_index("pink") == 8
    assert vs.feature_index("mauve") == -1


def test_dataset_generation_is_deterministic():
    cfg = {"image_count": 12, "canvas": 16, "probe_reps": 1}
    a = vs.generate_dataset(cfg, seed=5)
    b = vs.generate_dataset(cfg, seed=5)
    assert a.image_count == 12
    assert a.probe_count == 150
    assert a.to_json() == b.to_json()
    img_a = a.render(0)
    img_b = b.render(0)
    assert img_a.shape == (16, 16, 3)
    assert np.array_equal(img_a, img_b)
    ann = a.annotation(0)
    assert 1 <= len(ann["objects"]) <= 5
    assert sum(ann["feature_counts"][:5]) == len(ann["objects"])


def test_model_forward_and_taps():
    model = vs.Model(
        {"image_size": 16, "patch_size": 8, "layers": 2, "d_model": 16,
         "heads": 2, "mlp_hidden": 32, "embed_dim": 8},
        seed=3,
    )
    assert model.monitored_neurons == 32
    cfg = {"image_count": 1, "canvas": 16}
    manifest = vs.generate_dataset(cfg, seed=9)
    image = manifest.render(0)
    logits, embedding = model.forward(image)
    assert logits.shape == (16,)
    assert embedding.shape == (8,)
    assert np.all(np.isfinite(logits))
    acts = model.activations(image)
    assert acts.shape == (2, 16, 5)  # layers x d_model x tokens


def test_gradcam_heatmap_properties():
    model = vs.Model(
        {"image_size": 16, "patch_size": 8, "layers": 2, "d_model": 16,
         "heads": 2, "mlp_hidden": 32, "embed_dim": 8},
        seed=4,
    )
    manifest = vs.generate_dataset({"image_count": 1, "canvas": 16}, seed=10)
    out = model.gradcam(manifest.render(0), ["green", "square"])
    assert out["heatmap"].shape == (2, 2)
    assert np.all(out["heatmap"] >= 0.0)
    assert np.all(out["normalized"] <= 1.0 + 1e-12)
    with pytest.raises(vs.VitscopeError):
        model.gradcam(manifest.render(0), ["chartreuse"])


def test_entropy_and_correlations():
    assert abs(vs.shannon_entropy_bits([1 / 16.0] * 16) - 4.0) < 1e-12
    one_hot = [0.0] * 16
    one_hot[3] = 1.0
    assert vs.shannon_entropy_bits(one_hot) == 0.0
    h = vs.shannon_entropy_bits([0.3, 0.3, 0.2, 0.2])
    assert abs(h - 1.9710) < 1e-3

    s = [1.0, 2.0, 3.0, 4.0]
    d = [9.0, 7.0, 5.0, 1.0]
    assert abs(vs.spearman(s, d) + 1.0) < 1e-12
    assert vs.pearson(s, s) == pytest.approx(1.0)


def test_training_moves_the_loss():
    model = vs.Model(
        {"image_size": 16, "patch_size": 8, "layers": 1, "d_model": 16,
         "heads": 2, "mlp_hidden": 32, "embed_dim": 8},
        seed=6,
    )
    manifest = vs.generate_dataset({"image_count": 16, "canvas": 16}, seed=12)
    log = model.train(manifest, {"epochs": 3, "batch": 4, "val_fraction": 0.25})
    assert len(log) == 3
    assert log[-1].train_loss < log[0].train_loss
    assert 0.0 <= log[-1].val_macro_f1 <= 1.0


def test_pipeline_emits_artifacts(tmp_path):
    config = json.loads(vs.default_config_json())
    config["seed"] = 21
    config["workspace"] = str(tmp_path / "run")
    config["dataset"].update({"image_count": 20, "canvas": 16, "probe_reps": 1})
    config["model"].update(
        {"image_size": 16, "patch_size": 8, "layers": 2, "d_model": 16,
         "heads": 2, "mlp_hidden": 32, "embed_dim": 8}
    )
    config["train"].update({"epochs": 2, "batch": 5, "val_fraction": 0.25})
    config["analysis"].update({"top_k": 5, "report_neurons": 2})
    config["gradcam"]["panels"] = [{"image_id": 0, "features": ["red", "circle"]}]
    vs.run_pipeline(json.dumps(config))

    root = tmp_path / "run"
    for rel in [
        "dataset/manifest.json",
        "model/weights.bin",
        "model/train_log.csv",
        "analysis/profiles.csv",
        "analysis/entropy_hist.csv",
        "gradcam/0_red+circle.overlay.ppm",
        "metrics/pairs.csv",
        "metrics/correlations.json",
        "report/report.md",
    ]:
        assert (root / rel).exists(), rel

    # pairs.csv has all 120 pairs
    lines = (root / "metrics" / "pairs.csv").read_text().strip().splitlines()
    assert len(lines) == 121

    # gen is idempotent on rerun
    assert vs.run_stage("gen", json.dumps(config)) is True


def test_model_roundtrip(tmp_path):
    cfg = {"image_size": 16, "patch_size": 8, "layers": 1, "d_model": 16,
           "heads": 2, "mlp_hidden": 32, "embed_dim": 8}
    model = vs.Model(cfg, seed=8)
    manifest = vs.generate_dataset({"image_count": 1, "canvas": 16}, seed=2)
    image = manifest.render(0)
    logits_before, _ = model.forward(image)
    path = str(tmp_path / "w.bin")
    model.save(path)
    back = vs.Model.load(path)
    logits_after, _ = back.forward(image)
    assert np.array_equal(logits_before, logits_after)
