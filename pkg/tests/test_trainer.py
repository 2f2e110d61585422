from dataclasses import replace

import numpy as np
import pytest

from wcl import encoder, losses, synthdata, trainer
from wcl.matkernel import l2_normalize_rows
from wcl.trainer import TrainConfig, compute_objective, evaluate, stream_rng, train, train_step

from conftest import rel_err

TINY = TrainConfig(epochs=4, batch_size=16, hidden_dim=12, proj_dim=6, crops_per_sample=2, seed=3)


def tiny_data(seed=0, n=64):
    return synthdata.gen_sphere_mixture(4, n, 8, 0.2, seed)


def flat(p):
    return np.concatenate([a.ravel() for a in p.arrays()])


def objective_fd(params, x1, x2, xc, cfg, weak, step=1e-5):
    out = []
    for arr in params.arrays():
        fl = arr.reshape(-1)
        for i in range(fl.size):
            orig = fl[i]
            fl[i] = orig + step
            hi = compute_objective(params, x1, x2, xc, cfg, weak).value
            fl[i] = orig - step
            lo = compute_objective(params, x1, x2, xc, cfg, weak).value
            fl[i] = orig
            out.append((hi - lo) / (2 * step))
    return np.array(out)


def random_problem(rng, crops):
    n = int(rng.integers(4, 9))
    d_in = int(rng.integers(3, 6))
    cfg = TrainConfig(hidden_dim=int(rng.integers(4, 8)), proj_dim=int(rng.integers(2, 5)),
                      tau=float(rng.uniform(0.1, 1.0)), crops_per_sample=crops,
                      supcon_mean_over_positives=bool(rng.integers(2)))
    params = encoder.init_params(d_in, cfg.hidden_dim, cfg.proj_dim, rng)
    params = params.map(lambda a: a + 0.1 * rng.standard_normal(a.shape))
    x = l2_normalize_rows(rng.standard_normal((n, d_in)))
    x1, x2 = (synthdata.augment(x, 0.3, rng) for _ in range(2))
    xc = synthdata.augment(np.tile(x, (crops, 1)), 0.5, rng) if crops else None
    return params, x1, x2, xc, cfg


def test_end_to_end_gradient_small():
    rng = np.random.default_rng(11)
    for crops in (0, 2, 1):
        params, x1, x2, xc, cfg = random_problem(rng, crops)
        obj = compute_objective(params, x1, x2, xc, cfg)
        weak = (obj.info["comp1"], obj.info["comp2"])
        assert rel_err(flat(obj.grads), objective_fd(params, x1, x2, xc, cfg, weak)) < 1e-3


def test_stream_rng_independent_labels():
    a = stream_rng(5, "views").random(3)
    assert np.array_equal(a, stream_rng(5, "views").random(3))
    assert not np.array_equal(a, stream_rng(5, "crops").random(3))
    assert not np.array_equal(a, stream_rng(6, "views").random(3))


def test_zero_epochs_returns_init():
    res = train(replace(TINY, epochs=0), tiny_data())
    assert res.metrics == []
    assert np.array_equal(flat(res.params), flat(trainer.init_model(TINY, 8)))


def test_training_is_bit_reproducible():
    a = train(TINY, tiny_data())
    b = train(TINY, tiny_data())
    assert np.array_equal(flat(a.params), flat(b.params))
    assert [m.loss_overall for m in a.metrics] == [m.loss_overall for m in b.metrics]


def test_metrics_finite_and_components_bounded():
    seen = []
    res = train(TINY, tiny_data(), hook=lambda obj: seen.append((obj.info["comp1"].count, obj.info["comp2"].count)))
    for m in res.metrics:
        rec = m.record(TINY)
        assert all(np.isfinite(v) for v in rec.values())
    assert all(1 <= c <= TINY.batch_size // 2 for pair in seen for c in pair)


def _nce_only_step(params, state, x, cfg, lr, rng):
    """Hand-rolled instance-discrimination step used as a reference."""
    x1 = synthdata.augment(x, cfg.view_strength, rng)
    x2 = synthdata.augment(x, cfg.view_strength, rng)
    t1, t2 = encoder.forward(params, x1), encoder.forward(params, x2)
    rep = losses.nce_loss(t1.z, t2.z, cfg.tau)
    g = encoder.add_grads(encoder.backward(params, t1, rep.grads[0]), encoder.backward(params, t2, rep.grads[1]))
    return encoder.sgd_step(params, g, state, lr)


def test_zero_weights_reduce_to_nce_step():
    cfg = replace(TINY, beta=0.0, lambda_c=0.0, gamma_c=0.0)
    ds = tiny_data()
    params = trainer.init_model(cfg, ds.dim)
    state = encoder.OptimizerState.zeros_like(params)
    idx = np.arange(16)
    res = train_step(params, state, ds.x[idx], idx, cfg, lr=0.05, rng_views=np.random.default_rng(1))
    ref_p, ref_s = _nce_only_step(params, state, ds.x[idx], cfg, 0.05, np.random.default_rng(1))
    assert np.array_equal(flat(res.params), flat(ref_p))
    assert np.array_equal(flat(res.opt_state.buffers), flat(ref_s.buffers))


def test_swap_wiring_via_hook():
    ds = tiny_data()
    params = trainer.init_model(TINY, ds.dim)
    state = encoder.OptimizerState.zeros_like(params)
    captured = {}
    idx = np.arange(16)
    train_step(params, state, ds.x[idx], idx, replace(TINY, crops_per_sample=0), lr=0.1,
               rng_views=np.random.default_rng(4), hook=lambda obj: captured.update(obj=obj))
    obj = captured["obj"]
    info = obj.info
    assert info["swap_pairs"] == (("v1", "y2"), ("v2", "y1"))
    v1, v2 = info["trace1"].v, info["trace2"].v
    crossed = losses.sup_con_loss(v1, info["y2"], TINY.tau).value + losses.sup_con_loss(v2, info["y1"], TINY.tau).value
    straight = losses.sup_con_loss(v1, info["y1"], TINY.tau).value + losses.sup_con_loss(v2, info["y2"], TINY.tau).value
    assert obj.parts.swap == pytest.approx(crossed, abs=1e-12)
    assert not np.array_equal(info["y1"].y, info["y2"].y)
    assert abs(obj.parts.swap - straight) > 1e-9


def test_lr_zero_step_keeps_params():
    ds = tiny_data()
    params = trainer.init_model(TINY, ds.dim)
    state = encoder.OptimizerState.zeros_like(params)
    idx = np.arange(16)
    crop_x = ds.x[np.tile(idx, (2, 1))]
    res = train_step(params, state, ds.x[idx], idx, TINY, crop_x, lr=0.0,
                     rng_views=np.random.default_rng(0), rng_crops=np.random.default_rng(1))
    assert np.array_equal(flat(res.params), flat(params))
    assert all(np.isfinite(v) for v in res.metrics.values())
    assert res.metrics["loss_cnce"] > 0 and res.metrics["loss_cswap"] >= 0


def test_identical_views_swap_identity():
    cfg = replace(TINY, view_strength=0.0, crops_per_sample=0)
    ds = tiny_data()
    params = trainer.init_model(cfg, ds.dim)
    captured = {}
    idx = np.arange(16)
    train_step(params, encoder.OptimizerState.zeros_like(params), ds.x[idx], idx, cfg, lr=0.1,
               rng_views=np.random.default_rng(0), hook=lambda obj: captured.update(obj=obj))
    obj = captured["obj"]
    sup = losses.sup_con_loss(obj.info["trace1"].v, obj.info["y1"], cfg.tau).value
    assert obj.parts.swap == pytest.approx(2 * sup, abs=1e-12)


def test_feature_store_records_view_one():
    ds = tiny_data()
    params = trainer.init_model(TINY, ds.dim)
    store = trainer.multicrop.FeatureStore(ds.n, TINY.hidden_dim)
    idx = np.arange(8, 24)
    res = train_step(params, encoder.OptimizerState.zeros_like(params), ds.x[idx], idx,
                     replace(TINY, crops_per_sample=0), lr=0.1, rng_views=np.random.default_rng(0), store=store)
    assert store.seen[idx].all() and store.seen.sum() == 16
    assert np.array_equal(store.features[idx], res.h1)


def test_remainder_and_zero_crop_warmup():
    # 70 samples with batch 16 leaves a remainder; warm-up fraction 0 needs a table at epoch 0
    cfg = replace(TINY, crop_warmup_fraction=0.0, epochs=2)
    res = train(cfg, tiny_data(n=70))
    assert res.knn is not None and res.knn.neighbors.shape == (70, cfg.knn_k)


def test_small_batch_rejected():
    ds = tiny_data()
    params = trainer.init_model(TINY, ds.dim)
    with pytest.raises(ValueError):
        train_step(params, encoder.OptimizerState.zeros_like(params), ds.x[:3], np.arange(3), TINY,
                   lr=0.1, rng_views=np.random.default_rng(0))


def test_evaluate_untrained_above_chance():
    accs = []
    for seed in range(5):
        ds = synthdata.gen_sphere_mixture(8, 256, 16, 0.3, seed)
        accs.append(evaluate(trainer.init_model(replace(TINY, seed=seed), ds.dim), ds, 0.5, seed))
    assert np.mean(accs) > 0.125


def test_evaluate_tight_clusters_and_determinism():
    ds = synthdata.gen_sphere_mixture(8, 256, 16, 0.001, 0)
    params = trainer.init_model(TrainConfig(), ds.dim)
    acc = evaluate(params, ds, 0.5, 1)
    assert acc >= 0.99
    assert evaluate(params, ds, 0.5, 1) == acc


@pytest.mark.slow
def test_default_run_learns():
    ds = synthdata.gen_sphere_mixture(8, 512, 16, 0.3, 0)
    res = train(TrainConfig(seed=0), ds)
    overall = [m.loss_overall for m in res.metrics]
    assert np.mean(overall[:5]) > np.mean(overall[-5:])
    assert evaluate(res.params, ds, 0.5, 0) > evaluate(res.initial_params, ds, 0.5, 0)
