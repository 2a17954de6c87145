import numpy as np
import pytest

from partgen.errors import ContractError
from partgen.numcore import check_gradients, make_rng
from partgen.projection import (
    RasterImage,
    render_edgemap,
    render_part_maps,
    render_silhouette,
    standard_views,
)
from partgen.shapegen import ShapeSpec, make_shape
from partgen.sketchnet import (
    EncoderParams,
    SketchConfig,
    SketchEncoding,
    TrainConfig,
    aggregate_views,
    decode_part,
    encode,
    init_params,
    loss_graph,
    train_sketchnet,
)

TINY = SketchConfig(m=2, d_s=4, raster=32, trunk=8,
                    enc_channels=(2, 3, 4, 5), dec_channels=(4, 4, 3, 3))


def tiny_pairs(n_views=2, m=2, raster=32):
    z = make_shape(ShapeSpec(category="free", m=m, seed=4), 0)
    out = []
    for cam in standard_views(raster, raster)[:n_views]:
        sil = render_silhouette(z, cam)
        out.append((render_edgemap(sil), render_part_maps(z, cam)))
    return out


def test_encode_default_shape_is_16x64():
    cfg = SketchConfig()
    enc, _ = init_params(cfg, seed=0)
    eta = encode(RasterImage(np.zeros((128, 128))), enc)
    assert eta.rows.shape == (16, 64)
    assert np.all(np.isfinite(eta.rows))


def test_encode_deterministic():
    enc, _ = init_params(TINY, seed=1)
    img = RasterImage((make_rng(2).random((32, 32)) > 0.8).astype(float))
    a = encode(img, enc)
    b = encode(img, enc)
    np.testing.assert_array_equal(a.rows, b.rows)


def test_encode_size_contract():
    enc, _ = init_params(TINY, seed=1)
    with pytest.raises(ContractError):
        encode(RasterImage(np.zeros((64, 64))), enc)


def test_decode_part_open_interval_and_deterministic():
    _, dec = init_params(TINY, seed=3)
    row = make_rng(5).normal(size=4)
    mask = decode_part(row, dec)
    assert mask.shape == (32, 32)
    assert mask.min() > 0.0 and mask.max() < 1.0
    np.testing.assert_array_equal(mask, decode_part(row, dec))


def test_aggregate_views_properties():
    rng = make_rng(6)
    a = SketchEncoding(rng.normal(size=(3, 5)))
    b = SketchEncoding(rng.normal(size=(3, 5)))
    assert aggregate_views([a]) .rows is not None
    np.testing.assert_array_equal(aggregate_views([a]).rows, a.rows)
    np.testing.assert_array_equal(aggregate_views([a, a, a]).rows, a.rows)
    np.testing.assert_allclose(aggregate_views([a, b]).rows, (a.rows + b.rows) / 2)
    np.testing.assert_allclose(aggregate_views([b, a]).rows, aggregate_views([a, b]).rows)
    with pytest.raises(ContractError):
        aggregate_views([])


def test_train_defaults_match_stated_values():
    t = TrainConfig()
    assert t.lr == 2e-4 and t.batch == 64


def test_train_overfits_single_pair():
    pairs = tiny_pairs(n_views=1)
    _, dec, curve = train_sketchnet(pairs, TINY, TrainConfig(lr=3e-3, batch=1, steps=220,
                                                             seed=0, augment=False))[0:3]
    assert curve[-1] / TINY.m < 0.05  # mean per-part BCE


def test_train_descends():
    pairs = tiny_pairs(n_views=4)
    _, _, curve = train_sketchnet(pairs, TINY, TrainConfig(lr=1e-3, batch=4, steps=60,
                                                           seed=1, augment=True))
    assert np.mean(curve[-5:]) < curve[0]


def test_train_part_count_mismatch():
    pairs = tiny_pairs(m=3)
    with pytest.raises(ContractError):
        train_sketchnet(pairs, TINY, TrainConfig(steps=1))


def test_train_reproducible():
    pairs = tiny_pairs(n_views=2)
    cfg = TrainConfig(lr=1e-3, batch=2, steps=8, seed=7, augment=True)
    enc1, dec1, c1 = train_sketchnet(pairs, TINY, cfg)
    enc2, dec2, c2 = train_sketchnet(pairs, TINY, cfg)
    assert c1 == c2
    for k in enc1.weights:
        assert enc1.weights[k].tobytes() == enc2.weights[k].tobytes()


def test_gradients_match_finite_differences():
    # smooth inputs and a small step keep relu kinks out of the difference
    # stencil; the adjoints themselves are exact
    rng = make_rng(9)
    images = rng.random((2, 32, 32))
    targets = (rng.random((2, 2, 32, 32)) > 0.9).astype(float)
    enc, dec = init_params(TINY, seed=2)

    def loss_of(flat):
        ew = {k[4:]: v for k, v in flat.items() if k.startswith("enc/")}
        dw = {k[4:]: v for k, v in flat.items() if k.startswith("dec/")}
        g, loss, _ = loss_graph(ew, dw, images, targets, TINY)
        return float(g.value(loss))

    g, loss, ids = loss_graph(enc.weights, dec.weights, images, targets, TINY)
    grads = g.grad(loss)
    flat = {**{f"enc/{k}": v for k, v in enc.weights.items()},
            **{f"dec/{k}": v for k, v in dec.weights.items()}}
    analytic = {}
    for k, nid in ids.items():
        prefix = "enc/" if k in enc.weights else "dec/"
        analytic[prefix + k] = grads[nid]
    assert check_gradients(loss_of, flat, analytic, h=1e-6) < 1e-4
