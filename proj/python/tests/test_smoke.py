import json
import math

import numpy as np
import pytest

import triaan_vc as tv


def tone(hz, seconds=1.0):
    t = np.arange(int(seconds * tv.SAMPLE_RATE)) / tv.SAMPLE_RATE
    return 0.4 * np.sin(2 * np.pi * hz * t)


def test_mel_shape():
    mel = tv.extract_mel(tone(440.0))
    assert mel.shape == (80, 101)
    assert np.isfinite(mel).all()


def test_pitch():
    p = tv.extract_f0(tone(220.0))
    voiced = np.asarray(p["voiced"])
    assert voiced.sum() > 80
    assert abs(np.median(np.asarray(p["f0_hz"])[voiced]) - 220.0) < 3.0


def test_normalization():
    x = np.random.default_rng(0).normal(3.0, 2.0, size=(4, 30))
    y = tv.instance_normalize(x)
    assert np.allclose(y.mean(axis=1), 0.0, atol=1e-9)
    assert np.allclose(y.std(axis=1), 1.0, atol=1e-3)
    z = tv.time_normalize(x)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)


def test_attention_hand_example():
    out, w = tv.scaled_dot_attention(np.array([[1.0, 0.0]]), np.eye(2), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert w[0] == pytest.approx([0.6698, 0.3302], abs=1e-3)
    assert out[0] == pytest.approx([1.6604, 2.6604], abs=1e-3)


def test_model_forward_shapes(tmp_path):
    model = tv.Model(seed=1)
    rng = np.random.default_rng(1)
    content = rng.normal(size=(80, 40))
    f0 = rng.normal(size=40)
    one = model.forward(content, f0, [rng.normal(size=(80, 25))])
    assert one.shape == (80, 40)
    three = model.forward(content, f0, [rng.normal(size=(80, n)) for n in (25, 30, 12)])
    assert np.abs(three - one).sum() > 0
    path = tmp_path / "m.ckpt"
    model.save(path)
    assert np.array_equal(tv.Model.load(path).forward(content, f0, [content]), model.forward(content, f0, [content]))
    assert json.loads(model.config_json)["channels"] == 32


def test_losses_and_metrics():
    assert tv.combined_loss(np.zeros((1, 1)), np.ones((1, 1)), np.full((1, 1), 3.0))["total"] == pytest.approx(4.0)
    assert tv.l1_loss(np.zeros((2, 2)), np.ones((2, 2))) == pytest.approx(2.0)
    assert tv.wer("the cat", "the bat") == pytest.approx(0.5)
    assert tv.cer("the cat", "the bat") == pytest.approx(1 / 6)
    assert tv.cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(1 / math.sqrt(2))
    _, eer = tv.eer_threshold([0.8, 0.9], [0.1, 0.2])
    assert eer == 0.0
    assert tv.sv_accept_rate([0.2, 0.6, 0.9], 0.5) == pytest.approx(2 / 3)


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        tv.wer("", "x")
    with pytest.raises(ValueError):
        tv.default_config("huge")


def test_pipeline(tmp_path):
    tv.synth_corpus(tmp_path / "corpus", speakers=8, utterances=5, seed=2)
    cfg = json.loads(tv.default_config("desk"))
    cfg["train"].update(max_steps=2, batch_size=2)
    cfg["seed"] = 2
    text = json.dumps(cfg)
    assert tv.prepare(tmp_path / "corpus", tmp_path / "prep", text) == 40
    records = tv.train(tmp_path / "prep", tmp_path / "m.ckpt", text)
    assert [r["step"] for r in records] == [1, 2]
    wavs = sorted((tmp_path / "corpus").rglob("*.wav"))
    mel = tv.convert(wavs[0], [wavs[-1]], tmp_path / "m.ckpt", tmp_path / "out" / "c", griffin_lim_iterations=4)
    assert mel.shape[0] == 80
    assert (tmp_path / "out" / "c.wav").exists()
