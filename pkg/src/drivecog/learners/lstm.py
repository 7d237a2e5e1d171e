"""Stacked LSTM sequence classifier with hand-written backpropagation through time.

Each layer keeps one weight matrix ``W`` of shape (4H, D + H) acting on the
concatenation [x_t, h_{t-1}] and a bias of length 4H, gate blocks ordered
input, forget, output, candidate.  The top layer's last hidden state feeds an
affine 2-class readout with softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class SgdmConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 60
    batch_size: int = 8
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


@dataclass(frozen=True)
class LstmModel:
    input_dim: int
    hidden: tuple
    params: dict = field(repr=False)
    seed: int = 0
    n_classes: int = 2

    def param_names(self):
        names = []
        for l in range(len(self.hidden)):
            names += [f"W{l}", f"b{l}"]
        return names + ["Wy", "by"]

    def with_params(self, params):
        return replace(self, params={k: np.array(v, dtype=float) for k, v in params.items()})


def lstm_init(input_dim=60, hidden=(200, 100), seed=0, n_classes=2):
    """Uniform(+-1/sqrt(H)) weights, forget-gate bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    params, d = {}, input_dim
    for l, h in enumerate(hidden):
        s = 1.0 / np.sqrt(h)
        params[f"W{l}"] = rng.uniform(-s, s, size=(4 * h, d + h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        params[f"b{l}"] = b
        d = h
    s = 1.0 / np.sqrt(d)
    params["Wy"] = rng.uniform(-s, s, size=(n_classes, d))
    params["by"] = np.zeros(n_classes)
    return LstmModel(input_dim, tuple(hidden), params, int(seed), n_classes)


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise ValueError(f"expected steps of length {model.input_dim}, got shape {x.shape}")
    if x.shape[1] < 1:
        raise ValueError("sequence must have at least one step")
    return x


def _forward(model, x):
    """Forward pass over a (B, N, D) batch; returns probabilities and caches."""
    p = model.params
    caches, inp = [], x
    B, N, _ = x.shape
    for l, H in enumerate(model.hidden):
        W, b = p[f"W{l}"], p[f"b{l}"]
        D = W.shape[1] - H
        Wh = W[:, D:]
        zx = (inp.reshape(B * N, D) @ W[:, :D].T).reshape(B, N, 4 * H) + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, N + 1, H))
        hs[:, 0] = 0.0
        steps = []
        for t in range(N):
            z = zx[:, t] + h @ Wh.T
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            o = _sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((i, f, o, g, c_prev, tc))
            hs[:, t + 1] = h
        # hs[:, t] is the state entering step t
        caches.append((inp, hs, steps))
        inp = hs[:, 1:]
    top = inp[:, -1]
    logits = top @ p["Wy"].T + p["by"]
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, (caches, top)


def lstm_forward(model, sequence):
    """Class probabilities for one (N, D) sequence or a (B, N, D) batch."""
    x = np.asarray(sequence, dtype=float)
    single = x.ndim == 2
    probs, _ = _forward(model, _check_input(model, x))
    return probs[0] if single else probs


def lstm_final_state(model, sequence):
    """(h, c) of every layer after the last step, for inspection."""
    x = _check_input(model, sequence)
    _, (caches, _) = _forward(model, x)
    out = []
    for _, hs, steps in caches:
        i, f, o, g, c_prev, tc = steps[-1]
        out.append((hs[:, -1], f * c_prev + i * g))
    return out


def loss_and_grads(model, x, y):
    """Mean cross-entropy over a batch and its gradient for every parameter."""
    x = _check_input(model, x)
    y = np.asarray(y, dtype=int).ravel()
    B, N, _ = x.shape
    p = model.params
    probs, (caches, top) = _forward(model, x)
    loss = -np.mean(np.log(probs[np.arange(B), y] + 1e-300))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    grads = {"Wy": dlogits.T @ top, "by": dlogits.sum(axis=0)}

    # gradient w.r.t. each step's output of the layer above
    dh_seq = np.zeros((B, N, model.hidden[-1]))
    dh_seq[:, -1] = dlogits @ p["Wy"]
    for l in range(len(model.hidden) - 1, -1, -1):
        H = model.hidden[l]
        W = p[f"W{l}"]
        D = W.shape[1] - H
        Wh = W[:, D:]
        inp, hs, steps = caches[l]
        dZ = np.empty((B, N, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(N - 1, -1, -1):
            i, f, o, g, c_prev, tc = steps[t]
            dh = dh_seq[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc ** 2) + dc_next
            dz = dZ[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = do * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * (1.0 - g ** 2)
            dh_next = dz @ Wh
            dc_next = dc * f
        flat = dZ.reshape(B * N, 4 * H)
        dW = np.empty_like(W)
        dW[:, :D] = flat.T @ inp.reshape(B * N, D)
        dW[:, D:] = flat.T @ hs[:, :-1].reshape(B * N, H)
        grads[f"W{l}"] = dW
        grads[f"b{l}"] = flat.sum(axis=0)
        dh_seq = (flat @ W[:, :D]).reshape(B, N, D)
    return float(loss), grads


def _clip(grads, max_norm):
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


def lstm_train(model, sequences, labels, cfg=SgdmConfig(), history=None):
    """Train with mini-batch SGD with momentum and global-norm gradient clipping.

    Batches follow a permutation drawn each epoch from ``cfg.seed``, so the
    result is a pure function of (model, data, cfg).  If ``history`` is a
    list, the mean training loss of each epoch is appended to it.
    """
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise ValueError(f"all sequences must share one length, got lengths {sorted(lengths)}")
    x = np.asarray(sequences, dtype=float)
    x = _check_input(model, x)
    y = np.asarray(labels, dtype=int)
    if y.size != x.shape[0]:
        raise ValueError("one label per sequence required")
    params = {k: v.copy() for k, v in model.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    work = replace(model, params=params)  # shares arrays updated in place below
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = loss_and_grads(work, x[idx], y[idx])
            total += loss * idx.size
            grads = _clip(grads, cfg.clip_norm)
            for k in params:
                velocity[k] *= cfg.momentum
                velocity[k] -= cfg.learning_rate * grads[k]
                params[k] += velocity[k]
        if history is not None:
            history.append(total / n)
    return model.with_params(params)


def lstm_predict(model, sequences):
    probs = lstm_forward(model, np.asarray(sequences, dtype=float))
    probs = np.atleast_2d(probs)
    return (probs[:, 1] > probs[:, 0]).astype(int), probs


def gradcheck(model, sample, step=1e-5, floor=1e-6):
    """Largest relative gap between backprop and central-difference gradients.

    ``sample`` is ``(sequence, label)``.  The relative error of each entry is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    seq, label = sample
    x = _check_input(model, seq)
    y = np.array([label])
    _, grads = loss_and_grads(model, x, y)
    params = {k: v.copy() for k, v in model.params.items()}
    worst = 0.0
    for k, v in params.items():
        num = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + step
            lp, _ = loss_and_grads(model.with_params(params), x, y)
            v[idx] = old - step
            lm, _ = loss_and_grads(model.with_params(params), x, y)
            v[idx] = old
            num[idx] = (lp - lm) / (2 * step)
        a = grads[k]
        err = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        worst = max(worst, float(err.max()))
    return worst
