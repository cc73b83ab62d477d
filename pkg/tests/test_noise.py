import numpy as np
import pytest

from radarsim.imaging import PolarImage
from radarsim.noise import NoiseConfig, NoiseModel, add_noise, perlin2


def test_perlin_lattice_zeros():
    assert perlin2(3.0, 7.0) == 0.0
    ix, iy = np.meshgrid(np.arange(-5, 6), np.arange(-5, 6))
    assert not np.any(perlin2(ix.astype(float), iy.astype(float), seed=9))


def test_perlin_bounded_and_deterministic(rng):
    x = rng.uniform(-500, 500, 1_000_000)
    y = rng.uniform(-500, 500, 1_000_000)
    p = perlin2(x, y, seed=4)
    assert np.all(np.abs(p) <= 1.0)
    assert p.std() > 0.1
    assert np.array_equal(p[:1000], perlin2(x[:1000], y[:1000], seed=4))
    assert not np.array_equal(p[:1000], perlin2(x[:1000], y[:1000], seed=5))


def test_perlin_frozen_values():
    # pinned so outputs stay identical across releases and platforms
    pts = [(0.5, 0.5), (1.25, -3.75), (10.1, 20.7)]
    vals = [perlin2(x, y, seed=1) for x, y in pts]
    assert vals == pytest.approx(FROZEN, abs=1e-15)


def test_perlin_continuous():
    x = np.linspace(0, 5, 20001)
    p = perlin2(x, np.full_like(x, 0.37), seed=2)
    assert np.max(np.abs(np.diff(p))) < 1e-3


def test_zero_parameters_are_identity(rng):
    img = PolarImage(rng.random((80, 20)))
    cfg = NoiseConfig(0.0, NoiseModel("uniform", 0.0), NoiseModel("perlin", 0.0))
    assert np.array_equal(add_noise(img, cfg, 3).data, img.data)
    cfg = NoiseConfig(0.0, NoiseModel("none", 5.0), NoiseModel("none", 5.0))
    assert np.array_equal(add_noise(img, cfg, 3).data, img.data)


def test_uniform_noise_bounds():
    img = PolarImage(np.zeros((1000, 400)))
    out = add_noise(img, NoiseConfig(0.0, NoiseModel("uniform", 0.3)), 1).data
    assert out.min() >= 0.0 and out.max() < 0.3
    assert out.mean() == pytest.approx(0.15, rel=0.01)


def test_perlin_noise_mean():
    img = PolarImage(np.zeros((1000, 400)))
    cfg = NoiseConfig(0.0, ambient_noise=NoiseModel("perlin", 2.0, 0.05, 0.02))
    out = add_noise(img, cfg, 17).data
    assert out.mean() == pytest.approx(1.0, rel=0.05)
    # spatially correlated: neighbouring cells are close
    assert np.abs(np.diff(out, axis=0)).mean() < 0.1 * out.std()


def test_noise_is_seeded_and_staged():
    img = PolarImage(np.zeros((50, 30)))
    cfg = NoiseConfig(1.0, NoiseModel("uniform", 1.0), NoiseModel("perlin", 1.0, 0.2, 0.2))
    a = add_noise(img, cfg, 5).data
    assert np.array_equal(a, add_noise(img, cfg, 5).data)
    assert not np.array_equal(a, add_noise(img, cfg, 6).data)
    sys_only = add_noise(img, NoiseConfig(1.0, NoiseModel("uniform", 1.0)), 5).data
    amb_only = add_noise(img, NoiseConfig(1.0, ambient_noise=NoiseModel("perlin", 1.0, 0.2, 0.2)), 5).data
    np.testing.assert_allclose(a, sys_only + amb_only, atol=1e-15)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("pink", 1.0)
    with pytest.raises(ValueError):
        NoiseModel("uniform", -1.0)
    with pytest.raises(ValueError):
        NoiseConfig(-1.0)


FROZEN = [-0.25, -0.023200035095214844, 0.4646551929600005]
