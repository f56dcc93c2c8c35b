"""Exact success and accuracy probabilities by enumeration over (m, x, s)."""

from __future__ import annotations

import numpy as np

from . import nn
from .protocol import AnsatzParams, ProtocolConfig, outcome_table


def decision_table(params: nn.MlpParams, d: int) -> np.ndarray:
    """Decision of a network for every outcome index s, shape (d^2,)."""
    return nn.decide(nn.forward(params, nn.all_outcome_features(d)))


def success_from_table(table: np.ndarray, decisions: np.ndarray) -> float:
    n_msg = table.shape[0]
    hit = decisions[None, :] == np.arange(n_msg)[:, None]  # (M, S)
    return float((table * hit[:, None, :]).sum() / (table.shape[0] * table.shape[1]))


def accuracy_from_table(table: np.ndarray, decisions: np.ndarray) -> float:
    k = table.shape[1]
    hit = decisions[None, :] == np.arange(k)[:, None]  # (K, S)
    return float((table * hit[None, :, :]).sum() / (table.shape[0] * table.shape[1]))


def exact_success_probability(mu: AnsatzParams, theta: nn.MlpParams, cfg: ProtocolConfig) -> float:
    """P_succ under uniform message and grid priors."""
    return success_from_table(outcome_table(mu, cfg), decision_table(theta, cfg.d))


def exact_accuracy_probability(mu: AnsatzParams, phi: nn.MlpParams, cfg: ProtocolConfig) -> float:
    """P_acc under uniform message and grid priors."""
    return accuracy_from_table(outcome_table(mu, cfg), decision_table(phi, cfg.d))


def monte_carlo_probabilities(mu, theta, phi, cfg: ProtocolConfig, n_samples: int,
                              rng: np.random.Generator) -> tuple[float, float]:
    """Sampled (P_succ, P_acc) estimate, for checking the exact enumeration."""
    table = outcome_table(mu, cfg)
    m = rng.integers(cfg.n_messages, size=n_samples)
    x = rng.integers(cfg.k, size=n_samples)
    cdf = np.cumsum(table[m, x], axis=-1)
    s = (cdf < rng.random(n_samples)[:, None] * cdf[:, -1:]).sum(axis=-1)
    dec_m = decision_table(theta, cfg.d)[s]
    dec_x = decision_table(phi, cfg.d)[s]
    return float(np.mean(dec_m == m)), float(np.mean(dec_x == x))
