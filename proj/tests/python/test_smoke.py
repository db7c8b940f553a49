import json

import numpy as np
import pytest

import rffi


def test_upchirp_is_unit_modulus():
    c = rffi.LoraConfig()
    x = rffi.upchirp(c)
    assert x.shape == (c.samples_per_symbol(),) == (16384,)
    assert np.allclose(np.abs(x), 1.0)
    assert rffi.build_preamble(c).shape == (c.preamble_samples(),)


def test_frame_count():
    assert rffi.frame_count(rffi.LoraConfig(), 1024, 512) == 319
    with pytest.raises(ValueError):
        rffi.frame_count(rffi.LoraConfig(), 1024, 0)


def test_invalid_config_raises_value_error():
    c = rffi.LoraConfig()
    c.spreading_factor = 13
    with pytest.raises(rffi.ValidationError):
        c.validate()


def test_saleh_reference_values():
    p = rffi.SalehParams()
    assert rffi.saleh_am_am(1.0, p) == pytest.approx(1.00325, abs=1e-5)
    assert rffi.saleh_am_pm(1.0, p) == pytest.approx(0.39621, abs=1e-5)


def test_parameter_counts():
    assert rffi.layer_parameter_counts(256, 20) == [80, 16, 1168, 32, 4640, 64, 2304020]
    assert rffi.feature_map_size(256) == 60


def test_quotient_cancels_a_common_gain():
    rng = np.random.default_rng(1)
    low = rng.normal(size=(8, 5)) + 1j * rng.normal(size=(8, 5))
    g = 0.3 - 1.1j
    q = rffi.quotient_db(g * 2.0 * low, g * low)
    assert np.allclose(q, 20 * np.log10(2.0), atol=1e-9)


def test_stft_shape_and_render():
    c = rffi.LoraConfig()
    s = rffi.stft(rffi.build_preamble(c))
    assert s.shape == (1024, 319)
    img = rffi.render_image(np.linspace(-10, 10, 64).reshape(8, 8), 4, 4, -10.0, 10.0)
    assert img.dtype == np.uint8 and img.shape == (4, 4)
    assert np.all(np.diff(img.ravel().astype(int)) > 0)
    assert np.all(rffi.render_image(np.full((8, 8), 20.0), 4, 4, -10.0, 10.0) == 255)
    assert np.all(rffi.render_image(np.full((8, 8), -20.0), 4, 4, -10.0, 10.0) == 0)


def test_roc_auc_examples():
    auc, points = rffi.roc_auc([0.9, 0.6, 0.7, 0.1], [True, True, False, False])
    assert auc == pytest.approx(0.75)
    tprs = [p[1] for p in points]
    assert tprs == sorted(tprs)
    with pytest.raises(ValueError):
        rffi.roc_auc([0.5, 0.4], [True, True])


def test_small_pipeline(tmp_path):
    m = json.loads(rffi.default_manifest())
    m["seed"] = 11
    m["lora"]["spreading_factor"] = 7
    m["stft"]["window_len"] = 256
    m["stft"]["hop"] = 128
    m["population"]["legit"] = 2
    m["population"]["rogue"] = 1
    m["phases"] = [
        {"name": "train", "preset": "chamber", "packets_per_device": 20},
        {"name": "rogue", "preset": "chamber", "packets_per_device": 5, "packet_offset": 20, "devices": "rogue"},
    ]
    rows = rffi.gen_dataset(json.dumps(m), tmp_path / "ds")
    assert rows == [("train", 40, 0), ("rogue", 5, 0)]
    losses = rffi.train(tmp_path / "ds" / "train", tmp_path / "m.bin", epochs=15, seed=3)
    assert len(losses) == 15 and all(np.isfinite(losses))
    assert rffi.evaluate(tmp_path / "m.bin", tmp_path / "ds" / "train") == 1.0
    tuned = rffi.transfer(tmp_path / "m.bin", tmp_path / "ds" / "train", tmp_path / "t.bin", 5, epochs=3)
    assert len(tuned) == 3
    auc = rffi.detect_rogue(tmp_path / "t.bin", tmp_path / "ds" / "train", tmp_path / "ds" / "rogue")
    assert 0.0 <= auc <= 1.0
    with pytest.raises(OSError):
        rffi.evaluate(tmp_path / "missing.bin", tmp_path / "ds" / "train")


def test_bad_manifest_is_rejected(tmp_path):
    with pytest.raises(ValueError):
        rffi.gen_dataset('{"lora": {"preamble_symbols": 4}}', tmp_path)
