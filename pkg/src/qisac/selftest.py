"""Fast invariant checks run by ``qisac selftest``."""

from __future__ import annotations

import time

import numpy as np

from . import nn, qudit
from .protocol import AnsatzParams, ProtocolConfig, all_messages, outcome_table, superdense_outcome
from .qudit import ALICE, BOB
from .training import TrainConfig, _objective_fn, init_state, parameter_shift_grad


def check_gate_oracles() -> str | None:
    rng = np.random.default_rng(7)
    for d in (2, 3):
        states = qudit.random_state(d, rng, size=100)
        f = qudit.fourier_matrix(d)
        cases = []
        for q in (ALICE, BOB):
            cases += [
                (qudit.apply_shift_power(states, q, 1), qudit.on_qudit(qudit.shift_matrix(d), q)),
                (qudit.apply_clock_power(states, q, 1), qudit.on_qudit(qudit.clock_matrix(d), q)),
                (qudit.apply_fourier(states, q), qudit.on_qudit(f, q)),
                (qudit.apply_fourier(states, q, inverse=True), qudit.on_qudit(f.conj().T, q)),
                (qudit.apply_cx(states, q), qudit.cx_matrix(d, q)),
            ]
        for got, matrix in cases:
            want = qudit.dense_oracle_apply(states, matrix)
            err = np.abs(got.amplitudes - want.amplitudes).max()
            if err > 1e-10:
                return f"d={d}: gate disagrees with dense matrix by {err:.2e}"
    return None


def check_superdense(cx_convention: str = "subtract") -> str | None:
    for d in range(2, 9):
        cfg = ProtocolConfig(d=d, d_prime=d, grid=(0.0,), bypass=True, cx_convention=cx_convention)
        table = outcome_table(AnsatzParams.zeros(d, 0), cfg)[:, 0, :]
        for i, m in enumerate(all_messages(d)):
            if abs(table[i, superdense_outcome(m, d)] - 1.0) > 1e-9:
                return f"d={d}: message {tuple(m)} not decoded deterministically"
    return None


def check_gradients() -> str | None:
    rng = np.random.default_rng(3)
    pcfg = ProtocolConfig(d=3, d_prime=2, ansatz_depth=1)
    tcfg = TrainConfig(hidden=8)
    state, _ = init_state(pcfg, tcfg)
    mu = AnsatzParams.random(3, 1, rng, scale=np.pi)
    f = _objective_fn(state.theta, state.phi, pcfg, tcfg, mu.depth)
    grad = parameter_shift_grad(mu, state.theta, state.phi, pcfg, tcfg)
    h = 1e-4
    fd = np.array([(f(mu.angles + h * e) - f(mu.angles - h * e)) / (2 * h) for e in np.eye(mu.angles.size)])
    rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
    if rel > 1e-5:
        return f"parameter-shift vs finite differences: relative error {rel:.2e}"

    params = nn.init_mlp([2, 4, 3], rng)
    x = rng.normal(size=2)
    analytic = nn.backward(params, x, 1).arrays()
    arrays = params.arrays()
    for a, g in zip(arrays, analytic):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + 1e-5
            up = nn.cross_entropy(nn.forward(params, x), 1)
            a[idx] = old - 1e-5
            down = nn.cross_entropy(nn.forward(params, x), 1)
            a[idx] = old
            num[idx] = (up - down) / 2e-5
        rel = np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)
        if rel > 1e-4:
            return f"backprop vs finite differences: relative error {rel:.2e}"
    return None


def check_invariants() -> str | None:
    rng = np.random.default_rng(11)
    for d in (2, 3, 4, 8, 10):
        w = qudit.omega(d)
        for k in range(d):
            ket = qudit.TwoQuditState.basis(d, k, 0)
            zx = qudit.apply_clock_power(qudit.apply_shift_power(ket, ALICE, 1), ALICE, 1)
            xz = qudit.apply_shift_power(qudit.apply_clock_power(ket, ALICE, 1), ALICE, 1)
            if np.abs(zx.amplitudes - w * xz.amplitudes).max() > 1e-12:
                return f"d={d}: Weyl relation fails on |{k}>"
        f = qudit.fourier_matrix(d)
        if np.abs(f.conj().T @ f - np.eye(d)).max() > 1e-10:
            return f"d={d}: Fourier matrix not unitary"
        states = qudit.random_state(d, rng, size=20)
        for variant in ("literal-unitary", "linear"):
            cfg = ProtocolConfig(d=d, d_prime=d, channel_variant=variant)
            if np.abs(outcome_table(AnsatzParams.random(d, 2, rng), cfg.replace(ansatz_depth=2))
                      .sum(axis=-1) - 1).max() > 1e-10:
                return f"d={d}: Born distribution not normalised ({variant})"
        if np.abs(states.norm() - 1).max() > 1e-10:
            return f"d={d}: random states not normalised"
    return None


GROUPS = {
    "gate-oracles": check_gate_oracles,
    "superdense-determinism": check_superdense,
    "algebraic-invariants": check_invariants,
    "gradient-checks": check_gradients,
}


def run_selftest(corrupt_cx: bool = False, out=print) -> bool:
    ok = True
    for name, check in GROUPS.items():
        start = time.perf_counter()
        if name == "superdense-determinism" and corrupt_cx:
            failure = check("add")
        else:
            failure = check()
        elapsed = time.perf_counter() - start
        status = "PASS" if failure is None else "FAIL"
        out(f"{status}  {name:<24} {elapsed:6.2f}s" + ("" if failure is None else f"  {failure}"))
        ok &= failure is None
    return ok
