import numpy as np
import pytest

from dlcfm import autodiff as ad
from dlcfm import encoder as enc
from dlcfm.rng import stream


def test_zero_weights_give_zero_outputs():
    params = {k: np.zeros_like(v) for k, v in enc.init_encoder(stream(0, "e"), 16, 8).items()}
    mu, logvar = enc.encode(params, np.random.default_rng(0).standard_normal((5, 16)))
    assert np.all(mu == 0) and np.all(logvar == 0)
    assert mu.shape == (5, 8) and logvar.shape == (5, 8)


def test_identical_images_identical_rows():
    params = enc.init_encoder(stream(1, "e"), 16, 8)
    x = np.tile(np.random.default_rng(1).standard_normal(16), (4, 1))
    mu, logvar = enc.encode(params, x)
    assert np.all(mu == mu[0]) and np.all(logvar == logvar[0])


def test_random_init_finite_and_clamped():
    params = enc.init_encoder(stream(2, "e"), 256, 8)
    mu, logvar = enc.encode(params, 10 * np.random.default_rng(2).standard_normal((64, 256)))
    assert np.all(np.isfinite(mu))
    assert logvar.min() >= enc.LOGVAR_MIN and logvar.max() <= enc.LOGVAR_MAX


def test_non_finite_input_raises():
    params = enc.init_encoder(stream(3, "e"), 4, 3)
    with pytest.raises(enc.NonFiniteError):
        enc.encode(params, np.array([[np.inf, 0, 0, 0]]))


def test_reparameterize_zero_noise_limit():
    mu = np.array([[0.3, -1.0]])
    z = enc.reparameterize(mu, np.full((1, 2), enc.LOGVAR_MIN), stream(4, "e"))
    np.testing.assert_allclose(z, mu, atol=3 * np.exp(0.5 * enc.LOGVAR_MIN) * 5)


def test_reparameterize_moments():
    n = 100_000
    z = enc.reparameterize(np.zeros((n, 1)), np.zeros((n, 1)), stream(5, "e"))
    assert abs(z.mean()) <= 3 / np.sqrt(n)
    assert abs(z.var() - 1) <= 0.03


def test_reparameterize_gradient_wrt_mu_is_one():
    mu, lv, eps = ad.Input("mu"), ad.Input("lv"), ad.Input("eps")
    f = ad.sum(enc.reparameterize_graph(mu, lv, eps))
    rng = np.random.default_rng(6)
    ad.forward(f, {"mu": rng.standard_normal((3, 2)), "lv": rng.standard_normal((3, 2)),
                   "eps": rng.standard_normal((3, 2))})
    assert np.all(ad.backward(f)["mu"] == 1.0)


def test_reparameterize_gradients_match_finite_differences():
    mu, lv, eps = ad.Input("mu"), ad.Input("lv"), ad.Input("eps")
    f = ad.mean(ad.square(enc.reparameterize_graph(mu, lv, eps)))
    rng = np.random.default_rng(7)
    b = {"mu": rng.standard_normal((4, 3)), "lv": rng.standard_normal((4, 3)),
         "eps": rng.standard_normal((4, 3))}
    assert ad.grad_check(f, b, wrt={"mu", "lv"}) <= 1e-5


def test_reparameterize_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        enc.reparameterize(np.zeros((2, 3)), np.zeros((2, 2)), stream(0, "e"))


@pytest.mark.parametrize("d_Z,sizes", [(8, (2, 6)), (256, (2, 254))])
def test_partition_sizes(d_Z, sizes):
    z = np.arange(3 * d_Z, dtype=float).reshape(3, d_Z)
    a, r = enc.partition(z, 2)
    assert (a.shape[1], r.shape[1]) == sizes
    assert np.array_equal(np.concatenate([a, r], axis=1), z)


def test_partition_out_of_range():
    with pytest.raises(ValueError):
        enc.partition(np.zeros((2, 4)), 4)
    with pytest.raises(ValueError):
        enc.partition(np.zeros((2, 4)), 0)
