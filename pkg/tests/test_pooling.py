import math

import numpy as np
import pytest

from spoofcm.pooling import (
    MhfaModel,
    StaleCacheError,
    ToyEncoder,
    TrainConfig,
    TrainingDivergedError,
    WaModel,
    crop_time,
    dumps_stack,
    l2_to_init,
    load_checkpoint,
    loads_stack,
    lr_schedule,
    save_checkpoint,
    score_inputs,
    train,
    weighted_cross_entropy,
)
from spoofcm.pooling.models import softmax

import oracles

L, D, T, H = 4, 32, 16, 4


def separable_stacks(rng, n=120, offset=0.4):
    y = rng.random(n) < 0.3
    x = rng.normal(size=(n, L + 1, T, D))
    direction = rng.normal(size=D)
    direction /= np.linalg.norm(direction)
    x += np.where(y, offset, -offset)[:, None, None, None] * direction
    return list(x), y


# -- forward passes ----------------------------------------------------------

def test_wa_one_hot_layer_reduction():
    rng = np.random.default_rng(0)
    stack = rng.normal(size=(L + 1, T, D))
    model = WaModel.init(L, D, rng)
    model.params["layer_weights"][:] = 0.0
    model.params["layer_weights"][3] = 1.0
    logits, _ = model.forward(stack)
    expected = stack[3].mean(axis=0) @ model.params["classifier_w"] + model.params["classifier_b"]
    np.testing.assert_allclose(logits, expected, rtol=1e-13)


def test_wa_single_frame():
    rng = np.random.default_rng(1)
    stack = rng.normal(size=(L + 1, 1, D))
    model = WaModel.init(L, D, rng)
    pooled = model.pooled(stack)
    np.testing.assert_allclose(pooled, model.params["layer_weights"] @ stack[:, 0, :], rtol=1e-13)


def naive_wa(stack, w, cw, cb):
    n_layers, n_frames, dim = stack.shape
    pooled = [0.0] * dim
    for t in range(n_frames):
        for d in range(dim):
            o = 0.0
            for l in range(n_layers):
                o += w[l] * stack[l, t, d]
            pooled[d] += o / n_frames
    return [sum(pooled[d] * cw[d, c] for d in range(dim)) + cb[c] for c in range(cw.shape[1])]


@pytest.mark.parametrize("use_softmax", [False, True])
def test_wa_matches_naive_loops(use_softmax):
    rng = np.random.default_rng(2)
    stack = rng.normal(size=(L + 1, 7, 5))
    model = WaModel.init(L, 5, rng, softmax_weights=use_softmax)
    model.params["layer_weights"] += rng.normal(size=L + 1)
    w = model.params["layer_weights"]
    w = np.exp(w) / np.exp(w).sum() if use_softmax else w
    expected = naive_wa(stack, w, model.params["classifier_w"], model.params["classifier_b"])
    np.testing.assert_allclose(model.forward(stack)[0], expected, rtol=1e-12, atol=1e-14)


def test_wa_linear_in_raw_weights():
    rng = np.random.default_rng(3)
    stack = rng.normal(size=(L + 1, T, D))
    model = WaModel.init(L, D, rng)
    base = model.pooled(stack)
    model.params["layer_weights"] *= 2.5
    np.testing.assert_allclose(model.pooled(stack), 2.5 * base, rtol=1e-12)


def naive_mhfa(stack, p):
    n_layers, n_frames, dim = stack.shape
    ak = [math.exp(v) for v in p["key_layer_weights"]]
    ak = [a / sum(ak) for a in ak]
    av = [math.exp(v) for v in p["value_layer_weights"]]
    av = [a / sum(av) for a in av]
    keys = sum(ak[l] * stack[l] for l in range(n_layers))
    values = sum(av[l] * stack[l] for l in range(n_layers))
    heads = []
    for q in p["head_queries"]:
        scores = [float(keys[t] @ q) for t in range(n_frames)]
        m = max(scores)
        e = [math.exp(s - m) for s in scores]
        a = [v / sum(e) for v in e]
        c = sum(a[t] * (values[t] @ p["value_projection"]) for t in range(n_frames))
        heads.append(c)
    flat = np.concatenate(heads)
    emb = flat @ p["embedding"]
    return emb @ p["classifier_w"] + p["classifier_b"]


def test_mhfa_matches_naive_loops():
    rng = np.random.default_rng(4)
    model = MhfaModel.init(L, 8, rng, heads=3, embed_dim=6)
    for v in model.params.values():
        v += rng.normal(0, 0.5, v.shape)
    stack = rng.normal(size=(L + 1, 9, 8))
    np.testing.assert_allclose(model.forward(stack)[0], naive_mhfa(stack, model.params),
                               rtol=1e-12, atol=1e-13)


def test_mhfa_zero_query_is_uniform_mean():
    rng = np.random.default_rng(5)
    model = MhfaModel.init(L, D, rng, heads=1)
    model.params["head_queries"][:] = 0.0
    stack = rng.normal(size=(L + 1, T, D))
    _, cache = model.forward(stack)
    np.testing.assert_allclose(cache["attn"], 1.0 / T)
    np.testing.assert_allclose(cache["flat"], cache["proj"].mean(axis=0), rtol=1e-12)


def test_mhfa_single_frame_attention_is_one():
    rng = np.random.default_rng(6)
    model = MhfaModel.init(L, D, rng, heads=H)
    attn = model.attention(rng.normal(size=(L + 1, 1, D)))
    np.testing.assert_array_equal(attn, np.ones((1, H)))


def test_mhfa_attention_normalized_and_permutation_invariant():
    rng = np.random.default_rng(7)
    model = MhfaModel.init(L, D, rng, heads=H)
    model.params["head_queries"] *= 5
    stack = rng.normal(size=(L + 1, T, D))
    logits, cache = model.forward(stack)
    np.testing.assert_allclose(cache["attn"].sum(axis=0), 1.0, atol=1e-12)
    perm = rng.permutation(T)
    logits_p, cache_p = model.forward(stack[:, perm, :])
    np.testing.assert_allclose(logits_p, logits, rtol=1e-12)
    np.testing.assert_allclose(cache_p["attn"], cache["attn"][perm], rtol=1e-12)


def test_empty_stack_and_zero_heads_rejected():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError):
        WaModel.init(L, D, rng).forward(np.zeros((L + 1, 0, D)))
    with pytest.raises(ValueError):
        MhfaModel.init(L, D, rng, heads=0)
    model = MhfaModel.init(L, D, rng, heads=1)
    model.params["head_queries"] = np.zeros((0, D))
    with pytest.raises(ValueError):
        model.forward(rng.normal(size=(L + 1, T, D)))


def test_parameter_counts():
    rng = np.random.default_rng(9)
    wa = WaModel.init(12, 768, rng)
    mhfa = MhfaModel.init(12, 768, rng, heads=32)
    # 13 layer weights + 768x2 classifier + 2 biases
    assert wa.n_params() == 1551
    assert wa.n_params(WaModel.pooling_blocks) == 13
    assert 0.3e6 <= mhfa.n_params() <= 3e6
    assert wa.n_params() * 100 < mhfa.n_params()


# -- loss and penalty ----------------------------------------------------------

def test_weighted_cross_entropy_values():
    v, _ = weighted_cross_entropy(np.zeros(2), False)
    assert v == pytest.approx(math.log(2), rel=1e-15)
    v, _ = weighted_cross_entropy(np.zeros(2), True)
    assert v == pytest.approx(9 * math.log(2), rel=1e-15)


def test_weighted_cross_entropy_gradient_scaling():
    logits = np.array([0.3, -1.2])
    _, g9 = weighted_cross_entropy(logits, True)
    _, g1 = weighted_cross_entropy(logits, True, {"bonafide": 1.0, "spoof": 1.0})
    np.testing.assert_allclose(g9, 9 * g1, rtol=1e-15)
    x = logits.copy()
    num = oracles.central_difference(lambda: weighted_cross_entropy(x, True)[0], x)
    np.testing.assert_allclose(g9, num, rtol=1e-7)


def test_l2_to_init():
    rng = np.random.default_rng(10)
    theta = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5)}
    pen, grads = l2_to_init(theta, {k: v.copy() for k, v in theta.items()}, 0.7)
    assert pen == 0 and all(np.all(g == 0) for g in grads.values())
    init = {k: v + rng.normal(size=v.shape) for k, v in theta.items()}
    pen0, g0 = l2_to_init(theta, init, 0.0)
    assert pen0 == 0 and all(np.all(g == 0) for g in g0.values())
    pen, grads = l2_to_init(theta, init, 0.7)
    direct = 0.7 * sum(float(((theta[k] - init[k]) ** 2).sum()) for k in theta)
    assert pen == pytest.approx(direct, rel=1e-12)
    np.testing.assert_allclose(grads["a"], 1.4 * (theta["a"] - init["a"]))
    with pytest.raises(ValueError):
        l2_to_init({"a": np.zeros(3)}, {"a": np.zeros(4)}, 1.0)


# -- gradients -----------------------------------------------------------------

def _loss_of(model, stack, label):
    return weighted_cross_entropy(model.forward(stack)[0], label)[0]


def _check_model_grads(model, stack, label, rtol):
    logits, cache = model.forward(stack)
    _, dl = weighted_cross_entropy(logits, label)
    grads, d_stack = model.backward(cache, dl, wrt_stack=True)
    for name, arr in model.params.items():
        num = oracles.central_difference(lambda: _loss_of(model, stack, label), arr, eps=1e-4)
        scale = max(np.abs(num).max(), 1e-8)
        assert np.abs(grads[name] - num).max() / scale < rtol, name
    s = stack.copy()
    num = oracles.central_difference(lambda: _loss_of(model, s, label), s, eps=1e-4)
    assert np.abs(d_stack - num).max() / np.abs(num).max() < rtol


@pytest.mark.parametrize("kind", ["wa", "wa_softmax", "mhfa"])
def test_backend_gradients_finite_differences(kind):
    rng = np.random.default_rng(11)
    for _ in range(2):
        if kind == "mhfa":
            model = MhfaModel.init(2, 6, rng, heads=2, embed_dim=5)
        else:
            model = WaModel.init(2, 6, rng, softmax_weights=kind == "wa_softmax")
        for v in model.params.values():
            v += rng.normal(0, 0.4, v.shape)
        _check_model_grads(model, rng.normal(size=(3, 5, 6)), bool(rng.random() < 0.5), 1e-4)


def test_encoder_gradients_finite_differences():
    rng = np.random.default_rng(12)
    enc = ToyEncoder.init(5, 6, 3, rng)
    x = rng.normal(size=(4, 5))
    proj = rng.normal(size=(4, 4, 6))
    stack, cache = enc.forward(x)
    grads = enc.backward(cache, proj)
    for name, arr in enc.params.items():
        num = oracles.central_difference(lambda: float(np.sum(enc.forward(x)[0] * proj)), arr, eps=1e-4)
        assert np.abs(grads[name] - num).max() / np.abs(num).max() < 1e-4, name


def test_float32_gradients_within_loose_tolerance():
    rng = np.random.default_rng(13)
    model = MhfaModel.init(2, 6, rng, heads=2, embed_dim=5, dtype=np.float32)
    stack = rng.normal(size=(3, 5, 6)).astype(np.float32)
    logits, cache = model.forward(stack)
    _, dl = weighted_cross_entropy(logits, True)
    grads, _ = model.backward(cache, dl)
    for name, arr in model.params.items():
        num = oracles.central_difference(lambda: _loss_of(model, stack, True), arr, eps=1e-2)
        assert np.abs(grads[name] - num).max() / max(np.abs(num).max(), 1e-6) < 1e-2, name


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(14)
    for model in (WaModel.init(L, D, rng), MhfaModel.init(L, D, rng, heads=H)):
        _, cache = model.forward(rng.normal(size=(L + 1, T, D)))
        grads, d_stack = model.backward(cache, np.zeros(2), wrt_stack=True)
        assert all(np.all(g == 0) for g in grads.values())
        assert np.all(d_stack == 0)


def test_wa_layer_weight_gradient_by_hand():
    z = np.array([[1.0, 2.0], [3.0, 4.0]])
    h1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    model = WaModel({"layer_weights": np.array([0.5, 2.0]), "classifier_w": np.eye(2),
                     "classifier_b": np.zeros(2)})
    logits, cache = model.forward(np.stack([z, h1]))
    # pooled = 0.5 * [2, 3] + 2 * [0.5, 0.5]
    np.testing.assert_array_equal(logits, [2.0, 2.5])
    grads, _ = model.backward(cache, np.array([1.0, -1.0]))
    # d/dw0 = mean(z) . g = 2 - 3, d/dw1 = mean(h1) . g = 0.5 - 0.5
    np.testing.assert_array_equal(grads["layer_weights"], [-1.0, 0.0])
    grads, _ = model.backward(cache, np.array([0.0, 1.0]))
    np.testing.assert_array_equal(grads["layer_weights"], [3.0, 0.5])


def test_stale_cache_rejected():
    rng = np.random.default_rng(15)
    model = WaModel.init(L, D, rng)
    _, cache = model.forward(rng.normal(size=(L + 1, T, D)))
    model.bump()
    with pytest.raises(StaleCacheError):
        model.backward(cache, np.ones(2))
    other = model.copy()
    _, cache = model.forward(rng.normal(size=(L + 1, T, D)))
    with pytest.raises(StaleCacheError):
        other.backward(cache, np.ones(2))


# -- schedule, crops, training --------------------------------------------------

def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_schedule(cfg, 0, layer=12, n_layers=12) == 2e-5
    assert lr_schedule(cfg, 1) == pytest.approx(4.75e-3, rel=1e-15)
    assert lr_schedule(cfg, 0, layer=1, n_layers=12) == pytest.approx(2e-5 * 0.9 ** 11, rel=1e-15)
    assert lr_schedule(cfg, 3, layer=4, n_layers=4) == pytest.approx(2e-5 * 0.95 ** 3, rel=1e-15)
    with pytest.raises(ValueError):
        lr_schedule(cfg, -1)


def test_crop_time_wraps_short_inputs():
    rng = np.random.default_rng(16)
    x = np.arange(5)
    np.testing.assert_array_equal(crop_time(x, 12, rng, 0), np.arange(12) % 5)
    y = np.arange(100)
    out = crop_time(y, 10, rng, 0)
    assert out.size == 10 and np.all(np.diff(out) == 1)


def test_training_reaches_zero_eer_and_is_deterministic():
    rng = np.random.default_rng(17)
    x, y = separable_stacks(rng, n=500)
    cfg = TrainConfig(epochs=30, patience=30, crop_frames=T)
    a = train(x, y, cfg, seed=3, backend="wa")
    b = train(x, y, cfg, seed=3, backend="wa")
    assert min(a.eer_trace) == 0.0
    assert a.eer_trace == b.eer_trace
    for k in a.model.params:
        np.testing.assert_array_equal(a.model.params[k], b.model.params[k])
    assert a.eer_trace[a.best_epoch] == min(a.eer_trace)


def test_early_stopping_returns_best_epoch():
    rng = np.random.default_rng(18)
    y = rng.random(80) < 0.4
    x = list(rng.normal(size=(80, L + 1, 8, 6)))  # no signal: the trace wanders
    score_x = list(rng.normal(size=(40, L + 1, 8, 6)))
    score_y = rng.random(40) < 0.5
    cfg = TrainConfig(epochs=15, patience=3, crop_frames=8, batch_size=16)
    res = train(x, y, cfg, seed=0, backend="mhfa", backend_kwargs={"heads": 2, "embed_dim": 8},
                scoring=(score_x, score_y))
    assert res.eer_trace[res.best_epoch] == min(res.eer_trace)
    assert res.epochs_run <= cfg.epochs
    if res.epochs_run < cfg.epochs:
        assert res.epochs_run - 1 - res.best_epoch == cfg.patience
    s = score_inputs(res.model, score_x)
    from spoofcm import metrics
    assert metrics.eer(s[score_y], s[~score_y])[0] == res.eer_trace[res.best_epoch]


def test_encoder_pinned_by_large_penalty():
    rng = np.random.default_rng(19)
    y = rng.random(60) < 0.4
    raw = rng.normal(size=(60, 10, 6))
    raw[:, :, 0] += np.where(y, 1.0, -1.0)[:, None]
    enc = ToyEncoder.init(6, 8, 2, rng)
    cfg = TrainConfig(epochs=5, crop_frames=10, batch_size=16, l2_to_init_lambda=1e6)
    res = train(list(raw), y, cfg, seed=0, encoder=enc)
    drift = math.sqrt(sum(float(((res.encoder.params[k] - res.encoder_init[k]) ** 2).sum())
                          for k in enc.params))
    assert drift < 1e-3
    free = train(list(raw), y, TrainConfig(epochs=5, crop_frames=10, batch_size=16,
                                           l2_to_init_lambda=0.0, lr_encoder=1e-3), seed=0, encoder=enc)
    free_drift = math.sqrt(sum(float(((free.encoder.params[k] - free.encoder_init[k]) ** 2).sum())
                               for k in enc.params))
    assert free_drift > 10 * drift


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    rng = np.random.default_rng(20)
    x, y = separable_stacks(rng, n=20)
    cfg = TrainConfig(epochs=3, crop_frames=T, lr_backend=1e300)
    with pytest.raises(TrainingDivergedError) as exc:
        train(x, y, cfg, seed=0)
    assert exc.value.epoch >= 0 and exc.value.batch >= 0


def test_train_config_rejects_unknown_options():
    with pytest.raises(ValueError, match="bogus"):
        TrainConfig.from_dict({"bogus": 1})


# -- files -------------------------------------------------------------------------

@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_stack_file_round_trip(dtype):
    stack = np.random.default_rng(21).normal(size=(3, 4, 5)).astype(dtype)
    buf = dumps_stack(stack)
    assert buf[:4] == b"FSTK"
    assert int.from_bytes(buf[8:12], "little") == 3
    again = loads_stack(buf)
    assert again.dtype == dtype
    np.testing.assert_array_equal(again, stack)
    with pytest.raises(ValueError):
        loads_stack(b"XXXX" + buf[4:])
    with pytest.raises(ValueError):
        loads_stack(buf[:-1])


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(22)
    model = MhfaModel.init(L, D, rng, heads=H)
    enc = ToyEncoder.init(6, D, L, rng)
    init = {k: v + 1 for k, v in enc.params.items()}
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, model, enc, init, meta={"seed": 4})
    m2, e2, i2, meta = load_checkpoint(path)
    assert isinstance(m2, MhfaModel) and meta["seed"] == 4
    for k in model.params:
        np.testing.assert_array_equal(m2.params[k], model.params[k])
    for k in enc.params:
        np.testing.assert_array_equal(e2.params[k], enc.params[k])
        np.testing.assert_array_equal(i2[k], init[k])


def test_softmax_helper():
    x = np.array([1000.0, 1000.0])
    np.testing.assert_array_equal(softmax(x), [0.5, 0.5])


def test_checkpoint_bytes_are_reproducible(tmp_path):
    rng = np.random.default_rng(23)
    model = WaModel.init(L, D, rng)
    save_checkpoint(tmp_path / "a.npz", model, meta={"seed": 1})
    save_checkpoint(tmp_path / "b.npz", model, meta={"seed": 1})
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
