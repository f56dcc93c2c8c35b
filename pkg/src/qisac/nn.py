"""Small numpy MLP classifiers with softmax heads, backprop and Adam.

These are the decoder (messages) and estimator (grid points). Inputs are
measurement outcomes ``s = (s1, s2)`` encoded as two concatenated one-hots.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])


def init_mlp(sizes, rng: np.random.Generator) -> MlpParams:
    """Uniform Glorot init, zero biases. ``sizes`` = [in, hidden..., out]."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def encode_outcome(s, d: int) -> np.ndarray:
    """One-hot(s1) ++ one-hot(s2) for outcome index ``s = s1 * d + s2``; works on arrays."""
    s = np.asarray(s)
    s1, s2 = np.divmod(s, d)
    out = np.zeros(s.shape + (2 * d,))
    np.put_along_axis(out, s1[..., None], 1.0, axis=-1)
    np.put_along_axis(out, (d + s2)[..., None], 1.0, axis=-1)
    return out


def all_outcome_features(d: int) -> np.ndarray:
    return encode_outcome(np.arange(d * d), d)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_input(params: MlpParams, x: np.ndarray):
    if x.shape[-1] != params.weights[0].shape[0]:
        raise InvalidArgumentError(
            f"input width {x.shape[-1]} does not match network input {params.weights[0].shape[0]}"
        )


def _forward_cache(params: MlpParams, x: np.ndarray):
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def logits(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_input(params, x)
    return _forward_cache(params, x)[-1]


def forward(params: MlpParams, x) -> np.ndarray:
    """Softmax class probabilities; ``x`` may be one feature vector or a batch."""
    return softmax(logits(params, x))


def decide(probs) -> np.ndarray | int:
    """Argmax along the last axis; ties go to the smallest index."""
    probs = np.asarray(probs)
    if probs.shape[-1] == 0:
        raise InvalidArgumentError("cannot decide on an empty probability vector")
    out = np.argmax(probs, axis=-1)
    return int(out) if out.ndim == 0 else out


def cross_entropy(probs, label: int) -> float:
    probs = np.asarray(probs, dtype=float)
    if not 0 <= label < probs.shape[-1]:
        raise InvalidArgumentError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(probs[label] + PROB_FLOOR))


def loss_and_grads(params: MlpParams, inputs, targets) -> tuple[float, MlpParams]:
    """Weighted cross-entropy and its exact gradient.

    ``targets`` has one row per input and one column per class; entry (i, c)
    is the weight of the pair (input i, label c). The loss is
    ``-sum(targets * log p) / sum(targets)``, so one-hot rows give the plain
    batch-mean cross-entropy and a count table gives the same value as the
    expanded sample list.
    """
    x = np.asarray(inputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    _check_input(params, x)
    total = t.sum()
    if total <= 0:
        raise InvalidArgumentError("targets carry no weight")
    acts = _forward_cache(params, x)
    z = acts[-1]
    p = softmax(z)
    loss = float(-(t * np.log(p + PROB_FLOOR)).sum() / total)
    # d loss / d z; exact for the unfloored log, the floor only guards log(0)
    delta = (t.sum(axis=-1, keepdims=True) * p - t) / total
    gw, gb = [], []
    for i in range(len(params.weights) - 1, -1, -1):
        gw.append(acts[i].T @ delta)
        gb.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return loss, MlpParams(gw[::-1], gb[::-1])


def backward(params: MlpParams, x, label) -> MlpParams:
    """Gradient of ``cross_entropy(forward(params, x), label)``, averaged over a batch if given one."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_1d(np.asarray(label))
    n_out = params.weights[-1].shape[1]
    if np.any(labels < 0) or np.any(labels >= n_out):
        raise InvalidArgumentError("label out of range")
    t = np.zeros((x.shape[0], n_out))
    t[np.arange(x.shape[0]), labels] = 1.0
    return loss_and_grads(params, x, t)[1]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr=lr, **kw)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(state.m) or any(p.shape != g.shape for p, g in zip(p_arr, g_arr)):
        raise InvalidArgumentError("gradient shapes do not match parameters")
    t = state.step + 1
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.m, state.v):
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, state.lr, state.beta1, state.beta2, state.eps, t)
    return MlpParams.from_arrays(new_p), new_state


def save_params(path, params: MlpParams) -> None:
    """Write an ``.npz`` checkpoint: version, layer count, then W0, b0, W1, b1, ..."""
    arrays = {"format_version": np.array(CHECKPOINT_VERSION), "n_layers": np.array(len(params.weights))}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = np.ascontiguousarray(w)
        arrays[f"b{i}"] = np.ascontiguousarray(b)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> MlpParams:
    with np.load(Path(path)) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"unsupported checkpoint version {version}")
        n = int(data["n_layers"])
        return MlpParams([data[f"W{i}"].copy() for i in range(n)], [data[f"b{i}"].copy() for i in range(n)])
