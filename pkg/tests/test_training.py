import numpy as np
import pytest

from qisac import nn
from qisac.errors import InvalidArgumentError, UnsupportedAnsatzError
from qisac.protocol import AnsatzParams, ProtocolConfig, superdense_outcome
from qisac.training import (
    TrainConfig,
    ansatz_epoch,
    decoder_epoch,
    estimator_epoch,
    init_state,
    objective_weights,
    parameter_shift_grad,
    run_training,
    sample_batch,
    surrogate_objective,
)

from conftest import constant_classifier, sdp_max_success, superdense_decoder

SMALL = dict(hidden=16, decoder_steps=20, estimator_steps=20, ansatz_steps=5, batch=32)


def superdense_cfg(d):
    return ProtocolConfig(d=d, d_prime=d, grid=(0.0,), bypass=True)


def sharp(params, scale=100.0):
    q = params.copy()
    q.weights[-1] = q.weights[-1] * scale
    return q


def random_instance(d, depth, seed):
    r = np.random.default_rng(seed)
    pcfg = ProtocolConfig(d=d, d_prime=int(r.integers(1, d + 1)), ansatz_depth=depth)
    tcfg = TrainConfig(hidden=8, seed=seed, w_x=float(r.uniform(0.2, 2)), w_m=float(r.uniform(0.2, 2)))
    theta = nn.init_mlp([2 * d, 8, 8, pcfg.n_messages], r)
    phi = nn.init_mlp([2 * d, 8, 8, pcfg.k], r)
    mu = AnsatzParams.random(d, depth, r, scale=np.pi)
    return mu, theta, phi, pcfg, tcfg


# config ---------------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(InvalidArgumentError):
        TrainConfig(decoder_steps=-1)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(lr_mu=0.0)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(w_x=-1.0)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(sample_mode="bogus")


# sample_batch -------------------------------------------------------------------


def test_empty_batch():
    b = sample_batch(AnsatzParams.zeros(4, 4), ProtocolConfig(d=4, d_prime=4), TrainConfig(batch=0),
                     np.random.default_rng(0))
    assert len(b) == 0


@pytest.mark.parametrize("d", [2, 3, 5])
def test_shots_batch_follows_superdense_map(d):
    pcfg = superdense_cfg(d)
    tcfg = TrainConfig(batch=200, sample_mode="shots", shots=3)
    b = sample_batch(AnsatzParams.zeros(d, 4), pcfg, tcfg, np.random.default_rng(1))
    assert len(b) == 600
    for s, m in zip(b.s, b.m):
        assert s == superdense_outcome(divmod(int(m), d), d)


def test_exact_batch_weights_sum_to_one(rng):
    pcfg = ProtocolConfig(d=3, d_prime=2, ansatz_depth=2)
    mu = AnsatzParams.random(3, 2, rng, scale=1.0)
    b = sample_batch(mu, pcfg, TrainConfig(batch=50), rng)
    w = b.weight.reshape(50, 9)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= 0)


def test_batch_is_deterministic():
    pcfg = ProtocolConfig(d=3, d_prime=3)
    tcfg = TrainConfig(batch=40, sample_mode="shots")
    a = sample_batch(AnsatzParams.zeros(3, 4), pcfg, tcfg, np.random.default_rng(9))
    b = sample_batch(AnsatzParams.zeros(3, 4), pcfg, tcfg, np.random.default_rng(9))
    for f in ("s", "m", "x", "weight"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


# decoder / estimator --------------------------------------------------------------


def test_decoder_learns_superdense_map():
    d = 4
    pcfg = superdense_cfg(d)
    tcfg = TrainConfig(hidden=1024, batch=512, decoder_steps=100, seed=0)
    state, r = init_state(pcfg, tcfg)
    batch = sample_batch(state.mu, pcfg, tcfg, r)
    decoder_epoch(state, batch, pcfg, tcfg)
    losses = state.decoder_losses
    assert len(losses) == 100
    assert losses[-1] < losses[0]
    final_loss = nn.loss_and_grads(state.theta, nn.all_outcome_features(d),
                                   batch.label_table(batch.m, d * d, d * d))[0]
    assert final_loss < 1e-2
    decisions = nn.decide(nn.forward(state.theta, nn.all_outcome_features(d)))
    for m1 in range(d):
        for m2 in range(d):
            assert decisions[superdense_outcome((m1, m2), d)] == m1 * d + m2


def test_zero_steps_leave_networks(rng):
    pcfg = ProtocolConfig(d=3, d_prime=3)
    tcfg = TrainConfig(decoder_steps=0, estimator_steps=0, hidden=8, batch=10)
    state, r = init_state(pcfg, tcfg)
    theta, phi = state.theta.copy(), state.phi.copy()
    batch = sample_batch(state.mu, pcfg, tcfg, r)
    decoder_epoch(state, batch, pcfg, tcfg)
    estimator_epoch(state, batch, pcfg, tcfg)
    for a, b in zip(theta.arrays() + phi.arrays(), state.theta.arrays() + state.phi.arrays()):
        np.testing.assert_array_equal(a, b)


def test_epochs_reject_empty_batch():
    pcfg = ProtocolConfig(d=3, d_prime=3)
    tcfg = TrainConfig(hidden=8, batch=0)
    state, r = init_state(pcfg, tcfg)
    batch = sample_batch(state.mu, pcfg, tcfg, r)
    with pytest.raises(InvalidArgumentError):
        decoder_epoch(state, batch, pcfg, tcfg)
    with pytest.raises(InvalidArgumentError):
        estimator_epoch(state, batch, pcfg, tcfg)


def test_estimator_single_grid_point_has_zero_loss():
    pcfg = ProtocolConfig(d=3, d_prime=3, grid=(0.0,))
    tcfg = TrainConfig(hidden=8, estimator_steps=1, batch=16)
    state, r = init_state(pcfg, tcfg)
    estimator_epoch(state, sample_batch(state.mu, pcfg, tcfg, r), pcfg, tcfg)
    assert state.estimator_losses[0] <= 1e-11


def test_constant_channel_keeps_estimator_at_chance():
    pcfg = ProtocolConfig(d=3, d_prime=3, channel_variant="constant")
    # the grid is invisible: every x gives the same outcome distribution
    table = pcfg.pre_ansatz.amplitudes
    probs = np.abs(table) ** 2
    for j in range(1, pcfg.k):
        np.testing.assert_allclose(probs[:, j], probs[:, 0], atol=1e-12)
    tcfg = TrainConfig(outer_iters=3, **SMALL)
    state = run_training(pcfg, tcfg)
    for rec in state.history + [state.final]:
        assert rec["p_acc"] == pytest.approx(1 / pcfg.k, abs=1e-12)


# surrogate ---------------------------------------------------------------------


def test_surrogate_zero_weights(rng):
    mu, theta, phi, pcfg, _ = random_instance(3, 2, 4)
    assert surrogate_objective(mu, theta, phi, pcfg, TrainConfig(w_x=0.0, w_m=0.0)) == 0.0


def test_surrogate_perfect_posteriors_is_zero():
    d = 3
    pcfg = superdense_cfg(d)
    theta = sharp(superdense_decoder(d))
    phi = constant_classifier(2 * d, 1)
    val = surrogate_objective(AnsatzParams.zeros(d, 4), theta, phi, pcfg, TrainConfig())
    assert val == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_surrogate_bounded_above(seed):
    mu, theta, phi, pcfg, tcfg = random_instance(3, 2, seed)
    assert surrogate_objective(mu, theta, phi, pcfg, tcfg) < 0


def test_surrogate_two_pi_periodic():
    mu, theta, phi, pcfg, tcfg = random_instance(3, 2, 11)
    base = surrogate_objective(mu, theta, phi, pcfg, tcfg)
    for j in range(mu.angles.size):
        a = mu.angles.copy()
        a[j] -= 2 * np.pi
        assert surrogate_objective(mu.with_angles(a), theta, phi, pcfg, tcfg) == pytest.approx(base, abs=1e-12)


def test_objective_cap_subsamples_pairs():
    pcfg = ProtocolConfig(d=3, d_prime=3, ansatz_depth=1)
    tcfg = TrainConfig(hidden=8, objective_cap=10)
    state, _ = init_state(pcfg, tcfg)
    g = objective_weights(state.theta, state.phi, pcfg, tcfg)
    active = np.any(g != 0, axis=-1)
    assert active.sum() == 10
    full = objective_weights(state.theta, state.phi, pcfg, TrainConfig(hidden=8))
    assert np.all(np.any(full != 0, axis=-1))


# parameter shift ---------------------------------------------------------------


def finite_difference(f, angles, h=1e-4):
    g = np.zeros_like(angles)
    for j in range(angles.size):
        p, m = angles.copy(), angles.copy()
        p[j] += h
        m[j] -= h
        g[j] = (f(p) - f(m)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(20))
def test_parameter_shift_matches_finite_differences(seed):
    depth = 1 + seed % 2
    mu, theta, phi, pcfg, tcfg = random_instance(3, depth, seed)

    def f(a):
        return surrogate_objective(mu.with_angles(a), theta, phi, pcfg, tcfg)

    psr = parameter_shift_grad(mu, theta, phi, pcfg, tcfg)
    fd = finite_difference(f, mu.angles)
    assert np.linalg.norm(psr - fd) / np.linalg.norm(fd) <= 1e-5


def test_cached_and_direct_shift_rules_agree():
    mu, theta, phi, pcfg, tcfg = random_instance(4, 3, 3)
    direct = parameter_shift_grad(mu, theta, phi, pcfg, tcfg,
                                  objective=lambda a: surrogate_objective(mu.with_angles(a), theta, phi, pcfg, tcfg))
    np.testing.assert_allclose(parameter_shift_grad(mu, theta, phi, pcfg, tcfg), direct, atol=1e-12)


def test_shift_rule_evaluation_count():
    mu, theta, phi, pcfg, tcfg = random_instance(3, 2, 0)
    calls = []

    def f(a):
        calls.append(a.copy())
        return surrogate_objective(mu.with_angles(a), theta, phi, pcfg, tcfg)

    parameter_shift_grad(mu, theta, phi, pcfg, tcfg, objective=f)
    assert len(calls) == 2 * mu.angles.size


def test_gradient_vanishes_at_one_dimensional_maximum():
    mu, theta, phi, pcfg, tcfg = random_instance(3, 1, 5)
    j = 2

    def along(t):
        a = mu.angles.copy()
        a[j] = t
        return surrogate_objective(mu.with_angles(a), theta, phi, pcfg, tcfg)

    ts = np.linspace(-np.pi, np.pi, 721)
    best = ts[int(np.argmax([along(t) for t in ts]))]
    lo, hi = best - 2 * np.pi / 720, best + 2 * np.pi / 720
    for _ in range(100):  # golden-section refinement of the bracket
        a, b = hi - 0.618 * (hi - lo), lo + 0.618 * (hi - lo)
        if along(a) < along(b):
            lo = a
        else:
            hi = b
    at_max = mu.angles.copy()
    at_max[j] = 0.5 * (lo + hi)
    grad = parameter_shift_grad(mu.with_angles(at_max), theta, phi, pcfg, tcfg)
    assert abs(grad[j]) <= 1e-6


def test_shift_rule_rejects_bypassed_measurement():
    mu, theta, phi, pcfg, tcfg = random_instance(3, 1, 0)
    with pytest.raises(UnsupportedAnsatzError):
        parameter_shift_grad(mu, theta, phi, pcfg.replace(bypass=True), tcfg)


# ansatz epoch ----------------------------------------------------------------------


def _state_for(seed, **kw):
    pcfg = ProtocolConfig(d=3, d_prime=3, ansatz_depth=2)
    tcfg = TrainConfig(hidden=8, seed=seed, **kw)
    state, _ = init_state(pcfg, tcfg)
    return state, pcfg, tcfg


@pytest.mark.parametrize("seed", range(3))
def test_ansatz_epoch_ascends(seed):
    state, pcfg, tcfg = _state_for(seed, lr_mu=1e-3, ansatz_steps=20, mu_init_scale=1.0)
    before = surrogate_objective(state.mu, state.theta, state.phi, pcfg, tcfg)
    ansatz_epoch(state, pcfg, tcfg)
    assert surrogate_objective(state.mu, state.theta, state.phi, pcfg, tcfg) >= before


@pytest.mark.parametrize("kw", [dict(ansatz_steps=0), dict(w_x=0.0, w_m=0.0)])
def test_ansatz_epoch_no_op(kw):
    state, pcfg, tcfg = _state_for(0, **kw)
    before = state.mu.angles.copy()
    ansatz_epoch(state, pcfg, tcfg)
    np.testing.assert_array_equal(state.mu.angles, before)


# run_training ----------------------------------------------------------------------


def test_zero_iterations_return_initial_state():
    pcfg = ProtocolConfig(d=3, d_prime=2)
    tcfg = TrainConfig(outer_iters=0, **SMALL)
    state = run_training(pcfg, tcfg)
    init, _ = init_state(pcfg, tcfg)
    assert state.history == []
    np.testing.assert_array_equal(state.mu.angles, init.mu.angles)
    for a, b in zip(state.theta.arrays(), init.theta.arrays()):
        np.testing.assert_array_equal(a, b)


def test_history_length_and_fields():
    state = run_training(ProtocolConfig(d=3, d_prime=2), TrainConfig(outer_iters=3, **SMALL))
    assert [h["iteration"] for h in state.history] == [1, 2, 3]
    for h in state.history:
        assert set(h) == {"iteration", "objective", "surrogate", "p_succ", "p_acc"}
        assert h["objective"] == pytest.approx(h["p_succ"] + h["p_acc"])


@pytest.mark.parametrize("mode", ["exact", "shots"])
def test_training_is_deterministic(mode):
    pcfg = ProtocolConfig(d=3, d_prime=2)
    tcfg = TrainConfig(outer_iters=3, sample_mode=mode, seed=4, **SMALL)
    a = run_training(pcfg, tcfg)
    b = run_training(pcfg, tcfg)
    assert a.history == b.history and a.final == b.final
    assert a.mu.angles.tobytes() == b.mu.angles.tobytes()


def test_d4_two_ary_run_reaches_decoding_optimum():
    pcfg = ProtocolConfig(d=4, d_prime=2)
    state = run_training(pcfg, TrainConfig(hidden=128, lr_mu=0.2, seed=0))
    bound = sdp_max_success(4, 2, pcfg.grid)
    assert state.final["p_succ"] <= bound + 1e-6
    assert state.final["p_succ"] >= 0.99 * bound
    assert state.final["p_acc"] > 1 / pcfg.k


@pytest.mark.parametrize("seed", range(10))
def test_untrained_estimator_is_at_chance(seed):
    pcfg = ProtocolConfig(d=4, d_prime=4)
    state = run_training(pcfg, TrainConfig(outer_iters=0, hidden=128, seed=seed))
    assert abs(state.final["p_acc"] - 1 / pcfg.k) <= 0.05
