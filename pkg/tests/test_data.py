import numpy as np
import pytest

import sdlab as S
from sdlab.data import MixtureSpec


def test_generate_deterministic():
    spec = S.ring_mixture_spec()
    a = S.generate_dataset(spec, 1000, 7)
    b = S.generate_dataset(spec, 1000, 7)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_class_balance_within_one():
    spec = S.ring_mixture_spec(num_classes=3)
    ds = S.generate_dataset(spec, 1000, 0)
    counts = np.bincount(ds.labels, minlength=3)
    assert counts.max() - counts.min() <= 1


def test_zero_variance_degenerate():
    spec = MixtureSpec(np.array([[2.0, -1.0]]), 0.0)
    ds = S.generate_dataset(spec, 10, 3)
    np.testing.assert_array_equal(ds.X, np.tile([2.0, -1.0], (10, 1)))


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), -1.0)
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 4)), 0.1, shape=(3, 3))
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), 0.1, labels=np.array([0]))
    with pytest.raises(ValueError):
        S.generate_dataset(S.ring_mixture_spec(), 0, 0)


def test_ring_logpdf_peaks_at_mean():
    spec = S.ring_mixture_spec()
    at_mean = spec.logpdf(spec.means[2], 2)
    off = spec.logpdf(spec.means[2] + 1.0, 2)
    assert np.isfinite(at_mean) and at_mean > off


def test_bimodal_ring_components():
    spec = S.bimodal_ring_spec()
    assert spec.num_classes == 4
    assert spec.num_components == 8
    # both modes of a class have the same peak density
    assert abs(spec.logpdf(spec.means[0], 0) - spec.logpdf(spec.means[4], 0)) < 1e-12
    np.testing.assert_array_equal(spec.class_components(1), [1, 5])


def test_bimodal_logpdf_matches_manual_mixture():
    spec = S.bimodal_ring_spec()
    x = np.array([1.0, 0.5])
    comps = spec.class_components(0)
    var = spec.variance
    terms = [
        -0.5 * (2 * np.log(2 * np.pi * var) + (x - spec.means[c]) @ (x - spec.means[c]) / var)
        for c in comps
    ]
    manual = np.log(np.mean(np.exp(terms)))
    assert abs(spec.logpdf(x, 0) - manual) < 1e-12


def test_grid_specs_shapes():
    for spec in (S.grid_shape_spec(), S.bimodal_grid_spec()):
        assert spec.shape == (8, 8)
        assert spec.dim == 64
        assert np.all(np.abs(spec.means) <= 1.0 + 1e-12)


def test_train_denoiser_zero_steps_is_init(sched):
    ds = S.generate_dataset(S.ring_mixture_spec(), 100, 0)
    d = S.train_denoiser(ds, S.TrainConfig(steps=0, seed=5), sched)
    d2 = S.MlpDenoiser(2, 4, sched.T, hidden=(128, 128, 128, 128),
                       schedule_family=sched.family)
    d2.init_params(np.random.default_rng(5))
    np.testing.assert_array_equal(d.params, d2.params)


def test_train_denoiser_reproducible(sched):
    ds = S.generate_dataset(S.ring_mixture_spec(), 200, 0)
    cfg = S.TrainConfig(steps=50, seed=9)
    a = S.train_denoiser(ds, cfg, sched)
    b = S.train_denoiser(ds, cfg, sched)
    np.testing.assert_array_equal(a.params, b.params)


def test_train_denoiser_loss_decreases(ring_denoiser):
    losses = ring_denoiser.train_losses
    assert np.mean(losses[-100:]) < np.mean(losses[:100])


def test_adapter_update_freezes_base(tiny_denoiser, sched):
    a = S.AdapterDenoiser(tiny_denoiser)
    base_before = tiny_denoiser.params.copy()
    rng = np.random.default_rng(0)
    for _ in range(3):
        S.adapter_update(a, [rng.standard_normal(2)], S.class_condition(0, 4),
                         1e-3, rng, sched)
    np.testing.assert_array_equal(tiny_denoiser.params, base_before)


def test_adapter_update_lr_zero_is_noop(tiny_denoiser, sched):
    a = S.AdapterDenoiser(tiny_denoiser)
    before = a.res_params.copy()
    S.adapter_update(a, [np.ones(2)], S.class_condition(1, 4),
                     0.0, np.random.default_rng(1), sched)
    np.testing.assert_array_equal(a.res_params, before)


def test_adapter_update_requires_renders(tiny_denoiser, sched):
    a = S.AdapterDenoiser(tiny_denoiser)
    with pytest.raises(ValueError):
        S.adapter_update(a, [], S.class_condition(0, 4), 1e-3,
                         np.random.default_rng(0), sched)
