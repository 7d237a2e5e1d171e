import math

import numpy as np
import pytest
from scipy import stats

from drivecog.learners import (RankError, SgdmConfig, SingleClassError, elm_predict, elm_scores,
                               elm_train, gradcheck, loss_and_grads, lstm_forward, lstm_init,
                               lstm_predict, lstm_train, pca_fit, pca_inverse, pca_transform,
                               tribas)
from drivecog.learners.lstm import lstm_final_state

from oracles import ridge_normal_equations, scalar_lstm_two_steps, sigmoid

XOR_X = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


# --------------------------------------------------------------------- PCA

def test_pca_orthonormal_and_ordered():
    x = np.random.default_rng(0).normal(size=(80, 40)) @ np.diag(np.linspace(3, 0.1, 40))
    m = pca_fit(x, 30)
    assert np.max(np.abs(m.components @ m.components.T - np.eye(30))) <= 1e-9
    assert np.all(np.diff(m.explained_variance) <= 1e-12)
    assert np.allclose(pca_transform(m, m.mean), 0.0, atol=1e-12)


def test_pca_exact_low_rank():
    rng = np.random.default_rng(1)
    basis = np.linalg.qr(rng.normal(size=(20, 2)))[0].T
    x = rng.normal(size=(50, 2)) @ basis + rng.normal(size=20)
    m = pca_fit(x, 2)
    assert np.max(np.abs(pca_inverse(m, pca_transform(m, x)) - x)) <= 1e-9
    with pytest.raises(RankError, match="rank is 2"):
        pca_fit(x, 3)


def test_pca_residual_equals_discarded_variance():
    x = np.random.default_rng(2).normal(size=(60, 12)) * np.arange(1, 13)
    m = pca_fit(x, 5)
    resid = np.sum((x - pca_inverse(m, pca_transform(m, x))) ** 2) / (len(x) - 1)
    s = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
    assert resid == pytest.approx(np.sum(s[5:] ** 2) / (len(x) - 1), rel=1e-10)
    assert resid == pytest.approx(m.total_variance - m.explained_variance.sum(), rel=1e-9)


def test_pca_isotropic_noise_ratios_even():
    x = np.random.default_rng(3).normal(size=(20000, 5))
    r = pca_fit(x, 5).explained_variance_ratio
    assert np.all(np.abs(r - 0.2) < 0.01)


def test_pca_full_rank_is_isometry():
    x = np.random.default_rng(4).normal(size=(30, 6))
    z = pca_transform(pca_fit(x, 6), x)
    d_x = np.linalg.norm(x[:, None] - x[None], axis=2)
    d_z = np.linalg.norm(z[:, None] - z[None], axis=2)
    assert np.max(np.abs(d_x - d_z)) <= 1e-9


def test_pca_affine_and_checks():
    rng = np.random.default_rng(5)
    m = pca_fit(rng.normal(size=(20, 8)), 3)
    a, b = rng.normal(size=8), rng.normal(size=8)
    lhs = pca_transform(m, 0.3 * a + 0.7 * b)
    assert np.max(np.abs(lhs - (0.3 * pca_transform(m, a) + 0.7 * pca_transform(m, b)))) <= 1e-12
    with pytest.raises(ValueError):
        pca_transform(m, np.ones(7))
    with pytest.raises(ValueError):
        pca_fit(np.ones((1, 4)), 1)
    assert pca_fit(rng.normal(size=(20, 8)), 3).fitted_on != m.fitted_on


# --------------------------------------------------------------------- ELM

def test_tribas_definition():
    assert tribas(np.array([0.0, 1.0, -1.0, 2.0, 0.25])).tolist() == [1.0, 0.0, 0.0, 0.0, 0.75]


def test_elm_xor_exact_fit_over_seeds():
    fits = sum(np.array_equal(elm_predict(elm_train(XOR_X, XOR_Y, 50, seed=s), XOR_X)[0], XOR_Y)
               for s in range(100))
    assert fits >= 99


def test_elm_blobs_generalize():
    rng = np.random.default_rng(6)

    def blobs(n):
        y = rng.integers(0, 2, n)
        x = rng.normal(0, 0.15, (n, 4)) + np.where(y[:, None] == 1, 0.5, -0.5)
        return np.clip(x, -1, 1), y
    xtr, ytr = blobs(200)
    xte, yte = blobs(1000)
    model = elm_train(xtr, ytr, 500, seed=1)
    assert np.mean(elm_predict(model, xte)[0] == yte) >= 0.99


def test_elm_matches_normal_equations():
    rng = np.random.default_rng(7)
    x, y = rng.uniform(-1, 1, (40, 5)), rng.integers(0, 2, 40)
    for ridge in (1e-6, 1e-2):
        m = elm_train(x, y, 30, seed=3, ridge=ridge)
        h = m.hidden(x)
        t = np.eye(2)[y]
        ref = ridge_normal_equations(h, t, ridge)
        assert np.max(np.abs(m.output_weights - ref)) <= 1e-8 * max(1.0, np.abs(ref).max())


def test_elm_determinism_and_scaling():
    rng = np.random.default_rng(8)
    x, y = rng.uniform(-1, 1, (30, 4)), rng.integers(0, 2, 30)
    a, b = elm_train(x, y, 40, seed=9), elm_train(x, y, 40, seed=9)
    assert a.output_weights.tobytes() == b.output_weights.tobytes()
    from dataclasses import replace
    scaled = replace(a, output_weights=3.5 * a.output_weights)
    np.testing.assert_allclose(elm_scores(scaled, x), 3.5 * elm_scores(a, x), rtol=1e-12,
                               atol=1e-12)
    assert np.array_equal(elm_predict(scaled, x)[0], elm_predict(a, x)[0])


def test_elm_ties_and_errors():
    m = elm_train(XOR_X, XOR_Y, 20, seed=0)
    from dataclasses import replace
    tied = replace(m, output_weights=np.zeros_like(m.output_weights))
    assert elm_predict(tied, XOR_X)[0].tolist() == [0, 0, 0, 0]
    with pytest.raises(SingleClassError):
        elm_train(XOR_X, np.zeros(4, int))
    with pytest.raises(ValueError):
        elm_predict(m, np.ones((2, 3)))


# --------------------------------------------------------------------- LSTM

def test_lstm_shapes_and_softmax():
    m = lstm_init()
    assert m.params["W0"].shape == (800, 260) and m.params["W1"].shape == (400, 300)
    assert m.params["Wy"].shape == (2, 100)
    p = lstm_forward(m, np.random.default_rng(0).normal(size=(4, 60)))
    assert p.shape == (2,) and np.all((p > 0) & (p < 1)) and abs(p.sum() - 1) <= 1e-9
    with pytest.raises(ValueError):
        lstm_forward(m, np.ones((4, 59)))


def test_zero_weights_give_half_and_zero_cell():
    m = lstm_init(5, (3, 2))
    zero = m.with_params({k: np.zeros_like(v) for k, v in m.params.items()})
    np.testing.assert_allclose(lstm_forward(zero, np.ones((4, 5))), [0.5, 0.5])
    for h, c in lstm_final_state(m, np.zeros((3, 5))):
        assert np.all(c == 0) and np.all(h == 0)


def test_single_step_is_one_cell():
    m = lstm_init(3, (4,), seed=2)
    x = np.random.default_rng(1).normal(size=3)
    z = m.params["W0"][:, :3] @ x + m.params["b0"]
    i, f, o, g = sigmoid_v(z[:4]), sigmoid_v(z[4:8]), sigmoid_v(z[8:12]), np.tanh(z[12:])
    c = i * g
    h = o * np.tanh(c)
    (hh, cc), = lstm_final_state(m, x[None])
    np.testing.assert_allclose(hh[0], h, atol=1e-14)
    np.testing.assert_allclose(cc[0], c, atol=1e-14)
    logits = m.params["Wy"] @ h + m.params["by"]
    ref = np.exp(logits - logits.max()) / np.exp(logits - logits.max()).sum()
    np.testing.assert_allclose(lstm_forward(m, x[None]), ref, atol=1e-14)


def sigmoid_v(z):
    return np.array([sigmoid(v) for v in z])


def test_scalar_lstm_hand_arithmetic():
    w = [[0.5, -0.3], [0.2, 0.4], [-0.7, 0.1], [0.9, -0.6]]
    b = [0.1, 1.0, -0.2, 0.05]
    m = lstm_init(1, (1,))
    m = m.with_params({**m.params, "W0": np.array(w), "b0": np.array(b)})
    xs = [0.8, -1.3]
    (h, c), = lstm_final_state(m, np.array(xs)[:, None])
    hr, cr = scalar_lstm_two_steps(w, b, xs)
    assert abs(h[0, 0] - hr) <= 1e-12 and abs(c[0, 0] - cr) <= 1e-12


def test_gradcheck_four_unit_model():
    m = lstm_init(3, (4, 4), seed=1)
    seq = np.random.default_rng(2).normal(size=(5, 3))
    assert gradcheck(m, (seq, 1)) < 1e-4
    assert gradcheck(m, (seq, 0)) < 1e-4


def test_zero_parameter_gradients():
    m = lstm_init(3, (2, 2))
    zero = m.with_params({k: np.zeros_like(v) for k, v in m.params.items()})
    _, g = loss_and_grads(zero, np.zeros((1, 4, 3)), [1])
    for k, v in g.items():
        if k != "by":
            assert np.all(v == 0), k
    # the readout bias still sees softmax(0) - onehot(y)
    np.testing.assert_allclose(g["by"], [0.5, -0.5])


def _central(model, x, y, key, idx, h):
    p = {k: v.copy() for k, v in model.params.items()}
    p[key][idx] += h
    lp, _ = loss_and_grads(model.with_params(p), x, y)
    p[key][idx] -= 2 * h
    lm, _ = loss_and_grads(model.with_params(p), x, y)
    return (lp - lm) / (2 * h)


def test_central_difference_error_is_second_order():
    m = lstm_init(3, (4,), seed=4)
    x = np.random.default_rng(3).normal(size=(1, 6, 3))
    y = np.array([1])
    _, g = loss_and_grads(m, x, y)
    key, idx = "W0", (5, 1)
    errs = [abs(_central(m, x, y, key, idx, h) - g[key][idx]) for h in (1e-1, 1e-2, 1e-5)]
    assert errs[0] > errs[1] > errs[2]
    assert 30 <= errs[0] / errs[1] <= 300  # ~100x for a 10x smaller step
    assert gradcheck(m, (x[0], 1), step=1e-2) > gradcheck(m, (x[0], 1), step=1e-5)


def _toy(n=8, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.normal(0, 0.5, (n, 4, 3)) + np.where(y[:, None, None] == 1, 0.5, -0.5)
    return x, y


def test_overfits_tiny_set():
    x, y = _toy()
    hist = []
    m = lstm_train(lstm_init(3, (8, 4), seed=0), x, y,
                   SgdmConfig(learning_rate=0.1, epochs=500, batch_size=8), history=hist)
    assert hist[-1] < 0.01
    assert lstm_predict(m, x)[0].tolist() == y.tolist()


def test_momentum_zero_full_batch_is_gradient_descent():
    x, y = _toy()
    m0 = lstm_init(3, (4, 3), seed=1)
    cfg = SgdmConfig(learning_rate=0.05, momentum=0.0, epochs=5, batch_size=8, clip_norm=None)
    trained = lstm_train(m0, x, y, cfg)
    params = {k: v.copy() for k, v in m0.params.items()}
    for _ in range(5):
        _, g = loss_and_grads(m0.with_params(params), x, y)
        params = {k: v - 0.05 * g[k] for k, v in params.items()}
    for k in params:
        np.testing.assert_allclose(trained.params[k], params[k], rtol=1e-12, atol=1e-14)


def test_training_is_deterministic():
    x, y = _toy()
    cfg = SgdmConfig(epochs=3, batch_size=3, seed=4)
    a = lstm_train(lstm_init(3, (4,), seed=2), x, y, cfg)
    b = lstm_train(lstm_init(3, (4,), seed=2), x, y, cfg)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_shuffled_labels_do_not_generalize():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(200, 4, 3))
    y = rng.integers(0, 2, 200)
    m = lstm_train(lstm_init(3, (8, 4), seed=0), x[:100], y[:100],
                   SgdmConfig(learning_rate=0.05, epochs=20))
    loss, _ = loss_and_grads(m, x[100:], y[100:])
    assert loss >= math.log(2) - 0.05
    acc = np.mean(lstm_predict(m, x[100:])[0] == y[100:])
    lo, hi = stats.binom.interval(0.99, 100, 0.5)
    assert lo / 100 <= acc <= hi / 100


def test_training_validation():
    m = lstm_init(3, (4,))
    with pytest.raises(ValueError):
        lstm_train(m, [np.ones((3, 3)), np.ones((4, 3))], [0, 1])
    with pytest.raises(ValueError):
        SgdmConfig(momentum=1.0)
    with pytest.raises(ValueError):
        SgdmConfig(learning_rate=0.0)


def test_model_files_round_trip(tmp_path):
    from drivecog.learners.io import load_model, read_model_file, save_model
    rng = np.random.default_rng(10)
    models = [pca_fit(rng.normal(size=(20, 6)), 3),
              elm_train(XOR_X, XOR_Y, 8, seed=1),
              lstm_init(3, (4, 2), seed=3)]
    for k, m in enumerate(models):
        save_model(m, tmp_path / f"m{k}.bin", note="n")
        back, meta = load_model(tmp_path / f"m{k}.bin")
        assert type(back) is type(m) and meta["note"] == "n"
    kind, blocks, meta = read_model_file(tmp_path / "m1.bin")
    assert kind == "elm" and meta["activation"] == "tribas" and meta["seed"] == 1
    np.testing.assert_array_equal(blocks["output_weights"],
                                  models[1].output_weights.astype(np.float32))
    back, _ = load_model(tmp_path / "m2.bin")
    seq = rng.normal(size=(4, 3))
    np.testing.assert_allclose(lstm_forward(back, seq), lstm_forward(models[2], seq), atol=1e-6)
    with pytest.raises(TypeError):
        save_model(object(), tmp_path / "x.bin")
