import numpy as np
import pytest

import sert


def test_version():
    assert isinstance(sert.__version__, str)


def test_identity_at_init():
    cfg = sert.ModelConfig.toy()
    model = sert.Model(cfg, seed=3)
    y = np.random.default_rng(0).random((8, 8, cfg.bands))
    assert np.array_equal(model.forward(y), y)


def test_same_seed_same_weights():
    cfg = sert.ModelConfig.toy()
    assert sert.Model(cfg, 5).checksum() == sert.Model(cfg, 5).checksum()
    assert sert.Model(cfg, 5).checksum() != sert.Model(cfg, 6).checksum()


def test_noise_psnr_anchor():
    x = np.full((128, 128, 4), 0.5)
    y = sert.gaussian_iid(x, 50.0, seed=1)
    assert abs(sert.psnr(y, x) - 20 * np.log10(255 / 50)) < 0.1


def test_metrics():
    x = sert.synth_texture(16, 16, 4, seed=2)
    assert sert.psnr(x, x) == 100.0
    assert sert.ssim(x, x) == 1.0
    assert sert.sam(x, x) == pytest.approx(0.0, abs=1e-6)
    a = np.zeros((1, 1, 2)); a[0, 0, 0] = 1
    b = np.zeros((1, 1, 2)); b[0, 0, 1] = 1
    assert sert.sam(a, b) == pytest.approx(90.0)


def test_shuffle_roundtrip():
    z = np.random.default_rng(1).random((1, 4, 4, 8))
    assert np.array_equal(sert.inverse_shuffle_spectral(sert.shuffle_spectral(z)), z)


def test_partition_merge_roundtrip():
    z = np.random.default_rng(2).random((2, 8, 6, 3))
    tiles = sert.partition_rect(z, 4, 2)
    assert tiles.shape == (2 * 2 * 3, 8, 3)
    assert np.array_equal(sert.merge_rect(tiles, 4, 2, 2, 8, 6), z)


def test_param_count_breakdown():
    info = sert.param_count(sert.ModelConfig())
    assert info["total"] == sum(info["items"].values())
    assert abs(info["total"] - 1.91e6) / 1.91e6 < 0.25
    assert "mlp" in info["assumed"]


def test_bad_band_count_raises():
    model = sert.Model(sert.ModelConfig.toy(), seed=0)
    with pytest.raises(sert.ConfigError):
        model.forward(np.zeros((8, 8, 3)))


def test_train_and_checkpoint(tmp_path):
    cfg = sert.ModelConfig.toy()
    model = sert.Model(cfg, seed=4)
    data = [sert.synth_texture(8, 8, cfg.bands, seed=i) for i in range(4)]
    loss = model.train_step(data, sigma=30.0, batch=2, lr=1e-3, seed=4)
    assert np.isfinite(loss) and model.step == 1
    path = str(tmp_path / "m.ck")
    model.save(path, seed=4)
    again = sert.Model.load(path)
    y = sert.gaussian_iid(data[0], 30.0, seed=9)
    assert np.array_equal(again.forward(y), model.forward(y))


def test_hsi_roundtrip(tmp_path):
    x = np.random.default_rng(3).random((4, 4, 3))
    path = str(tmp_path / "x.hsr")
    sert.save_hsi(x, path, seed=11)
    assert np.array_equal(sert.load_hsi(path), x)


def test_gradcheck_toy():
    errors = sert.gradcheck(sert.ModelConfig.toy(), seed=1, samples=3)
    assert max(errors.values()) < 1e-4
