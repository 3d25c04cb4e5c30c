import math

import numpy as np
import pytest

import relaff


def tiny_config():
    cfg = relaff.default_config()
    cfg["encoder"].update(T=4, H=8, W=8, D=16, D_f=16, transformer_layers=1, attention_heads=2,
                          feedforward_width=16, patch_grid=2, backbone_width=16)
    cfg["head"].update(C=2, penultimate_width=8, dropout_rate=0.0)
    cfg["sampling"].update(T=4, K=1)
    cfg["synth"].update(subjects=3, videos_per_subject=2, L=16, H=8, W=8)
    cfg["training"].update(B=2, K=1, epochs=1, batches_per_epoch=2, augment=False, alignment_batches=2,
                           contrastive_epochs=1)
    return cfg


def test_relational_loss_values():
    m = relaff.cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert relaff.relational_loss(m, m) == 0.0
    ones = np.ones((2, 2))
    assert relaff.relational_loss(m, ones) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    loss, grad = relaff.relational_loss_from_features(np.array([[1.0, 0.2], [0.1, 1.0]]), ones)
    assert loss > 0 and grad.shape == (2, 2)


def test_losses_and_metrics():
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert relaff.rmse_loss(y + 2.0, y) == pytest.approx(2.0)
    assert relaff.total_loss(1.0, 0.5, 2.0) == pytest.approx(2.0)
    assert relaff.ccc([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
    with pytest.raises(relaff.UndefinedMetricError):
        relaff.ccc([2.0, 2.0], [2.0, 2.0])
    report = relaff.metrics_report(y, y)
    assert report["mean"]["CCC"] == pytest.approx(1.0)
    assert relaff.pearson([1.0, 1.0], [1.0, 2.0]) is None


def test_sampling_contracts():
    assert relaff.clip_frame_indices(10, 4, 8) == [8, 9, 0, 1]
    assert relaff.context_starts(12, 4, 10, 1) == [6, 10, 2]
    assert relaff.lr_schedule(5) == pytest.approx(1e-5)
    assert relaff.scale_label(0.5, "unit_affect") == pytest.approx(0.0)


def test_config_validation():
    cfg = tiny_config()
    assert relaff.validate_config(cfg)["head"]["C"] == 2
    cfg["head"]["C"] = 0
    with pytest.raises(relaff.ConfigError, match="head.C"):
        relaff.validate_config(cfg)


def test_corpus_round_trip(tmp_path):
    cfg = tiny_config()
    videos = relaff.generate_corpus(cfg)
    assert len(videos) == 6
    assert videos[0].frames.shape == (16, 8, 8, 3)
    relaff.write_corpus(tmp_path, videos)
    back = relaff.read_corpus(tmp_path)
    assert [v.video_id for v in back] == [v.video_id for v in videos]
    np.testing.assert_array_equal(back[0].frames, videos[0].frames)


def test_model_training_and_weights(tmp_path):
    cfg = tiny_config()
    videos = relaff.generate_corpus(cfg)
    model, epochs = relaff.train_model(videos, cfg, ["s00", "s01"], ["s02"])
    assert len(epochs) == 1
    per_label, total = model.predict(videos[-1])
    assert len(per_label) == 2 and total is None
    assert model.encode(videos[0]).shape == (16,)
    model.save(tmp_path / "w.rafw")
    other = relaff.Model(cfg, 99)
    other.load(tmp_path / "w.rafw")
    np.testing.assert_array_equal(other.parameter("head.fc.weight"), model.parameter("head.fc.weight"))


def test_cross_validation_and_ablation():
    cfg = tiny_config()
    videos = relaff.generate_corpus(cfg)
    record = relaff.cross_validate(videos, cfg)
    assert len(record["folds"]) == 3
    assert "alignment_score" in record
    rows = relaff.ablate(videos, cfg)
    assert [r["variant"]["name"] for r in rows] == ["Proposed", "w/o L_rel", "w/o L_rel w/o K", "Contrastive"]
