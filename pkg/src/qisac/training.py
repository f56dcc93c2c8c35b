"""Alternating hybrid optimisation of the decoder, the estimator and the measurement angles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import InvalidArgumentError, UnsupportedAnsatzError
from .evaluation import accuracy_from_table, decision_table, success_from_table
from .protocol import AnsatzParams, ProtocolConfig, layer_phase_vectors, mixing_matrix, outcome_table

log = logging.getLogger(__name__)

SAMPLE_MODES = ("exact", "shots")


@dataclass(frozen=True)
class TrainConfig:
    outer_iters: int = 10
    decoder_steps: int = 100
    estimator_steps: int = 100
    ansatz_steps: int = 100
    lr_theta: float = 1e-3
    lr_phi: float = 1e-3
    lr_mu: float = 1e-2
    w_x: float = 1.0
    w_m: float = 1.0
    w_acc: float = 1.0
    w_succ: float = 1.0
    hidden: int = 128
    hidden_layers: int = 2
    batch: int = 512
    sample_mode: str = "exact"
    shots: int = 1
    objective_cap: int = 4096
    mu_init_scale: float = 0.1
    final_refit: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("outer_iters", "decoder_steps", "estimator_steps", "ansatz_steps", "batch",
                     "hidden_layers", "mu_init_scale"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        for name in ("lr_theta", "lr_phi", "lr_mu", "hidden", "shots", "objective_cap"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        for name in ("w_x", "w_m", "w_acc", "w_succ"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.sample_mode not in SAMPLE_MODES:
            raise InvalidArgumentError(f"sample_mode must be one of {SAMPLE_MODES}")


@dataclass
class Batch:
    """Flat list of (s, m, x) triples with a weight per triple."""

    s: np.ndarray
    m: np.ndarray
    x: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.s)

    def label_table(self, labels: np.ndarray, n_outcomes: int, n_classes: int) -> np.ndarray:
        """Weight of each (outcome, label) pair, shape (n_outcomes, n_classes)."""
        t = np.zeros((n_outcomes, n_classes))
        np.add.at(t, (self.s, labels), self.weight)
        return t


@dataclass
class TrainState:
    mu: AnsatzParams
    theta: nn.MlpParams
    phi: nn.MlpParams
    adam_theta: nn.AdamState
    adam_phi: nn.AdamState
    iteration: int = 0
    history: list[dict] = field(default_factory=list)
    final: dict | None = None
    decoder_losses: list[float] = field(default_factory=list)
    estimator_losses: list[float] = field(default_factory=list)


def _streams(seed: int) -> list[np.random.Generator]:
    # theta init, phi init, mu init, data sampling
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def init_state(pcfg: ProtocolConfig, tcfg: TrainConfig) -> tuple[TrainState, np.random.Generator]:
    r_theta, r_phi, r_mu, r_data = _streams(tcfg.seed)
    hidden = [tcfg.hidden] * tcfg.hidden_layers
    theta = nn.init_mlp([2 * pcfg.d, *hidden, pcfg.n_messages], r_theta)
    phi = nn.init_mlp([2 * pcfg.d, *hidden, pcfg.k], r_phi)
    mu = AnsatzParams.random(pcfg.d, pcfg.ansatz_depth, r_mu, tcfg.mu_init_scale)
    state = TrainState(
        mu=mu,
        theta=theta,
        phi=phi,
        adam_theta=nn.AdamState.for_params(theta, tcfg.lr_theta),
        adam_phi=nn.AdamState.for_params(phi, tcfg.lr_phi),
    )
    return state, r_data


def sample_batch(mu: AnsatzParams, pcfg: ProtocolConfig, tcfg: TrainConfig,
                 rng: np.random.Generator) -> Batch:
    """Draw (m, x) uniformly, then outcomes under the current measurement.

    In ``exact`` mode every outcome s is kept with weight p(s | m, x); in
    ``shots`` mode ``tcfg.shots`` outcomes are sampled per draw, weight 1 each.
    """
    n = tcfg.batch
    if n == 0:
        empty = np.zeros(0, dtype=int)
        return Batch(empty, empty, empty, np.zeros(0))
    m = rng.integers(pcfg.n_messages, size=n)
    x = rng.integers(pcfg.k, size=n)
    probs = outcome_table(mu, pcfg)[m, x]  # (n, d^2)
    n_out = probs.shape[-1]
    if tcfg.sample_mode == "exact":
        s = np.tile(np.arange(n_out), n)
        return Batch(s, np.repeat(m, n_out), np.repeat(x, n_out), probs.reshape(-1))
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((n, tcfg.shots)) * cdf[:, -1:]
    s = (cdf[:, None, :] <= u[:, :, None]).sum(axis=-1)
    s = np.minimum(s, n_out - 1).reshape(-1)
    return Batch(s, np.repeat(m, tcfg.shots), np.repeat(x, tcfg.shots), np.ones(s.size))


def _fit(params, adam, features, targets, steps, losses):
    for _ in range(steps):
        loss, grads = nn.loss_and_grads(params, features, targets)
        params, adam = nn.adam_step(params, grads, adam)
        losses.append(loss)
    return params, adam


def decoder_epoch(state: TrainState, batch: Batch, pcfg: ProtocolConfig, tcfg: TrainConfig) -> nn.MlpParams:
    """Adam steps on the mean message cross-entropy over the batch."""
    if tcfg.decoder_steps == 0:
        return state.theta
    if len(batch) == 0:
        raise InvalidArgumentError("decoder_epoch needs a non-empty batch")
    targets = batch.label_table(batch.m, pcfg.d ** 2, pcfg.n_messages)
    state.theta, state.adam_theta = _fit(state.theta, state.adam_theta, nn.all_outcome_features(pcfg.d),
                                         targets, tcfg.decoder_steps, state.decoder_losses)
    return state.theta


def estimator_epoch(state: TrainState, batch: Batch, pcfg: ProtocolConfig, tcfg: TrainConfig) -> nn.MlpParams:
    """Adam steps on the mean grid-index cross-entropy over the batch."""
    if tcfg.estimator_steps == 0:
        return state.phi
    if len(batch) == 0:
        raise InvalidArgumentError("estimator_epoch needs a non-empty batch")
    targets = batch.label_table(batch.x, pcfg.d ** 2, pcfg.k)
    state.phi, state.adam_phi = _fit(state.phi, state.adam_phi, nn.all_outcome_features(pcfg.d),
                                     targets, tcfg.estimator_steps, state.estimator_losses)
    return state.phi


def _pair_mask(pcfg: ProtocolConfig, tcfg: TrainConfig) -> np.ndarray | None:
    n_pairs = pcfg.n_messages * pcfg.k
    if n_pairs <= tcfg.objective_cap:
        return None
    rng = np.random.default_rng(np.random.SeedSequence(tcfg.seed).spawn(5)[4])
    mask = np.zeros(n_pairs, dtype=bool)
    mask[rng.choice(n_pairs, size=tcfg.objective_cap, replace=False)] = True
    return mask.reshape(pcfg.n_messages, pcfg.k)


def objective_weights(theta: nn.MlpParams, phi: nn.MlpParams, pcfg: ProtocolConfig,
                      tcfg: TrainConfig) -> np.ndarray:
    """Table G[m, x, s] with f(mu) = sum(p_mu * G) for fixed decoder and estimator."""
    feats = nn.all_outcome_features(pcfg.d)
    log_m = nn.log_softmax(nn.logits(theta, feats))  # (S, M)
    log_x = nn.log_softmax(nn.logits(phi, feats))  # (S, K)
    g = tcfg.w_x * log_x.T[None, :, :] + tcfg.w_m * log_m.T[:, None, :]
    mask = _pair_mask(pcfg, tcfg)
    if mask is None:
        return g / (pcfg.n_messages * pcfg.k)
    return g * mask[:, :, None] / mask.sum()


def _objective_fn(theta, phi, pcfg, tcfg, depth):
    weights = objective_weights(theta, phi, pcfg, tcfg)

    def f(angles):
        return float(np.sum(outcome_table(AnsatzParams(depth, angles), pcfg) * weights))

    return f


def surrogate_objective(mu: AnsatzParams, theta: nn.MlpParams, phi: nn.MlpParams,
                        pcfg: ProtocolConfig, tcfg: TrainConfig) -> float:
    """Average over (m, x) of sum_s p(s|m,x) [w_x log p_phi(x|s) + w_m log p_theta(m|s)]."""
    return _objective_fn(theta, phi, pcfg, tcfg, mu.depth)(mu.angles)


def parameter_shift_grad(mu: AnsatzParams, theta: nn.MlpParams, phi: nn.MlpParams,
                         pcfg: ProtocolConfig, tcfg: TrainConfig, objective=None) -> np.ndarray:
    """Two-term shift rule, exact because every angle drives a single-level projector phase.

    grad_j = (f(mu + pi/2 e_j) - f(mu - pi/2 e_j)) / 2. With ``objective``
    (a map from angle arrays to floats) each shifted circuit is evaluated
    from scratch; otherwise the same 2 * len(mu) evaluations are done with
    cached per-layer prefix states and suffix unitaries.
    """
    if pcfg.bypass:
        raise UnsupportedAnsatzError("the bypassed measurement has no trainable gates")
    if objective is None:
        return _shift_rule_cached(mu, objective_weights(theta, phi, pcfg, tcfg), pcfg)
    base = mu.angles
    grad = np.zeros_like(base)
    shift = np.pi / 2
    for j in range(base.size):
        plus = base.copy()
        plus[j] += shift
        minus = base.copy()
        minus[j] -= shift
        grad[j] = 0.5 * (objective(plus) - objective(minus))
    return grad


def _shift_rule_cached(mu: AnsatzParams, weights: np.ndarray, pcfg: ProtocolConfig) -> np.ndarray:
    d = pcfg.d
    n = d * d
    mix = mixing_matrix(d, pcfg.cx_convention)
    diags = layer_phase_vectors(mu, d)
    weights = weights.reshape(-1, n)

    prefix = []
    v = pcfg.pre_ansatz.amplitudes.reshape(-1, n)
    for diag in diags:
        prefix.append(v)
        v = (v * diag) @ mix.T
    # U = suffix[l] . D_l . (layers before l)
    suffix = [None] * len(diags)
    s = mix
    for layer in range(len(diags) - 1, -1, -1):
        suffix[layer] = s
        s = s @ (diags[layer][:, None] * mix)

    # shifting an angle by +-pi/2 rescales the affected components by exp(-+i pi/2)
    c_plus = np.exp(-0.5j * np.pi) - 1
    c_minus = np.exp(0.5j * np.pi) - 1
    levels = np.arange(n).reshape(d, d)
    grad = np.zeros(mu.angles.size)
    j = 0
    for layer, diag in enumerate(diags):
        w = prefix[layer] * diag
        st = suffix[layer].T
        base = w @ st
        for rows in (levels[1:], levels[:, 1:].T):  # Alice levels, then Bob levels
            for idx in rows:
                y = w[:, idx] @ st[idx, :]
                f_plus = np.sum(weights * np.abs(base + c_plus * y) ** 2)
                f_minus = np.sum(weights * np.abs(base + c_minus * y) ** 2)
                grad[j] = 0.5 * (f_plus - f_minus)
                j += 1
    return grad


def ansatz_epoch(state: TrainState, pcfg: ProtocolConfig, tcfg: TrainConfig) -> AnsatzParams:
    """Plain gradient ascent on the angles with the classical networks frozen."""
    if tcfg.ansatz_steps == 0 or pcfg.bypass or (tcfg.w_x == 0 and tcfg.w_m == 0):
        return state.mu
    weights = objective_weights(state.theta, state.phi, pcfg, tcfg)
    mu = state.mu
    for _ in range(tcfg.ansatz_steps):
        grad = _shift_rule_cached(mu, weights, pcfg)
        mu = mu.with_angles(mu.angles + tcfg.lr_mu * grad)
    state.mu = mu
    return mu


def evaluate_state(state: TrainState, pcfg: ProtocolConfig, tcfg: TrainConfig) -> dict:
    table = outcome_table(state.mu, pcfg)
    p_succ = success_from_table(table, decision_table(state.theta, pcfg.d))
    p_acc = accuracy_from_table(table, decision_table(state.phi, pcfg.d))
    return {
        "iteration": state.iteration,
        "objective": tcfg.w_acc * p_acc + tcfg.w_succ * p_succ,
        "surrogate": surrogate_objective(state.mu, state.theta, state.phi, pcfg, tcfg),
        "p_succ": p_succ,
        "p_acc": p_acc,
    }


def run_training(pcfg: ProtocolConfig, tcfg: TrainConfig, callback=None) -> TrainState:
    """T outer iterations of: fresh batch, decoder, estimator, angles, metrics.

    ``state.final`` holds the metrics reported for the run: after an optional
    closing decoder/estimator epoch on a batch drawn under the final angles.
    """
    state, rng = init_state(pcfg, tcfg)
    for _ in range(tcfg.outer_iters):
        batch = sample_batch(state.mu, pcfg, tcfg, rng)
        decoder_epoch(state, batch, pcfg, tcfg)
        estimator_epoch(state, batch, pcfg, tcfg)
        ansatz_epoch(state, pcfg, tcfg)
        state.iteration += 1
        record = evaluate_state(state, pcfg, tcfg)
        state.history.append(record)
        log.debug("iter %d objective=%.4f p_succ=%.4f p_acc=%.4f", record["iteration"],
                  record["objective"], record["p_succ"], record["p_acc"])
        if callback is not None:
            callback(record)
    if tcfg.final_refit and tcfg.outer_iters > 0:
        # the last angle update leaves the networks one measurement behind
        batch = sample_batch(state.mu, pcfg, tcfg, rng)
        decoder_epoch(state, batch, pcfg, tcfg)
        estimator_epoch(state, batch, pcfg, tcfg)
    state.final = evaluate_state(state, pcfg, tcfg)
    return state
