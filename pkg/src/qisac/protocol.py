"""Encoding, phase channel, trainable measurement circuit and exact outcome tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import qudit
from .errors import ConfigError, InvalidArgumentError, InvalidMessageError
from .qudit import ALICE, BOB, OutcomeDistribution, TwoQuditState

CHANNEL_VARIANTS = ("literal-unitary", "linear", "constant")
FOURIER_CONVENTIONS = ("inverse", "forward")
CX_CONVENTIONS = ("subtract", "add")


class Message(NamedTuple):
    m1: int
    m2: int

    def index(self, d_prime: int) -> int:
        return self.m1 * d_prime + self.m2

    @classmethod
    def from_index(cls, index: int, d_prime: int) -> "Message":
        return cls(*divmod(int(index), d_prime))


def all_messages(d_prime: int) -> list[Message]:
    return [Message(m1, m2) for m1 in range(d_prime) for m2 in range(d_prime)]


@dataclass(frozen=True)
class RatePlan:
    d: int
    d_prime: int
    bits: float
    backoff: float
    max_bits: float


def rate_plan(d: int, d_prime: int) -> RatePlan:
    if not 1 <= d_prime <= d:
        raise InvalidArgumentError(f"d_prime must lie in 1..{d}, got {d_prime}")
    return RatePlan(
        d=d,
        d_prime=d_prime,
        bits=2 * math.log2(d_prime),
        backoff=2 * math.log2(d / d_prime),
        max_bits=2 * math.log2(d),
    )


def uniform_grid(k: int) -> tuple[float, ...]:
    """K points spaced evenly over [-pi, pi], endpoints included."""
    if k < 1:
        raise InvalidArgumentError("grid needs at least one point")
    if k == 1:
        return (0.0,)
    return tuple(float(v) for v in np.linspace(-np.pi, np.pi, k))


def channel_phases(d: int, x: float, variant: str = "literal-unitary") -> np.ndarray:
    """Per-level phases phi_k(x); the channel multiplies level k by exp(-i phi_k)."""
    k = np.arange(d)
    if variant == "literal-unitary":
        return (x / d) * np.cos(2 * np.pi * k / d)
    if variant == "linear":
        return x * k / d
    if variant == "constant":
        # a global phase: x leaves no trace in any outcome statistics
        return np.full(d, x / d)
    raise ConfigError("channel_variant", f"unknown channel variant {variant!r}")


@dataclass(frozen=True)
class ChannelModel:
    d: int
    grid: tuple[float, ...]
    variant: str = "literal-unitary"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise InvalidArgumentError("channel grid must be a non-empty 1-D sequence")
        if np.any(np.diff(g) <= 0):
            raise InvalidArgumentError("channel grid must be strictly increasing")
        if np.any(np.abs(g) > np.pi + 1e-12):
            raise InvalidArgumentError("channel grid values must lie in [-pi, pi]")
        if self.variant not in CHANNEL_VARIANTS:
            raise ConfigError("channel_variant", f"unknown channel variant {self.variant!r}")

    @property
    def k(self) -> int:
        return len(self.grid)

    @classmethod
    def uniform(cls, d: int, k: int, variant: str = "literal-unitary") -> "ChannelModel":
        return cls(d, uniform_grid(k), variant)


def n_angles(d: int, depth: int) -> int:
    return depth * 2 * (d - 1)


@dataclass(frozen=True)
class AnsatzParams:
    depth: int
    angles: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float).reshape(-1)
        if self.depth < 0:
            raise InvalidArgumentError("ansatz depth must be >= 0")
        if not np.all(np.isfinite(angles)):
            raise InvalidArgumentError("ansatz angles must be finite")
        object.__setattr__(self, "angles", angles)

    @classmethod
    def zeros(cls, d: int, depth: int) -> "AnsatzParams":
        return cls(depth, np.zeros(n_angles(d, depth)))

    @classmethod
    def random(cls, d: int, depth: int, rng: np.random.Generator, scale: float = 0.1) -> "AnsatzParams":
        return cls(depth, rng.uniform(-scale, scale, size=n_angles(d, depth)))

    def with_angles(self, angles) -> "AnsatzParams":
        return AnsatzParams(self.depth, angles)

    def layer_phases(self, d: int):
        """Yield (alice_phases, bob_phases) per layer, each length d with level 0 pinned at 0."""
        if self.angles.size != n_angles(d, self.depth):
            raise InvalidArgumentError(
                f"expected {n_angles(d, self.depth)} angles for d={d}, depth={self.depth}, "
                f"got {self.angles.size}"
            )
        per = d - 1
        for layer in range(self.depth):
            block = self.angles[layer * 2 * per:(layer + 1) * 2 * per]
            yield np.concatenate(([0.0], block[:per])), np.concatenate(([0.0], block[per:]))


@dataclass(frozen=True)
class ProtocolConfig:
    d: int = 8
    d_prime: int | None = None  # None means the full alphabet, d_prime = d
    grid: tuple[float, ...] = field(default_factory=lambda: uniform_grid(4))
    channel_variant: str = "literal-unitary"
    ansatz_depth: int = 4
    bypass: bool = False
    fourier_convention: str = "inverse"
    cx_convention: str = "subtract"

    def __post_init__(self):
        qudit._check_dim(self.d)
        if self.d_prime is None:
            object.__setattr__(self, "d_prime", self.d)
        rate_plan(self.d, self.d_prime)
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        ChannelModel(self.d, self.grid, self.channel_variant)
        if self.fourier_convention not in FOURIER_CONVENTIONS:
            raise ConfigError("fourier_convention", f"must be one of {FOURIER_CONVENTIONS}")
        if self.cx_convention not in CX_CONVENTIONS:
            raise ConfigError("cx_convention", f"must be one of {CX_CONVENTIONS}")

    @property
    def k(self) -> int:
        return len(self.grid)

    @property
    def n_messages(self) -> int:
        return self.d_prime ** 2

    @property
    def channel(self) -> ChannelModel:
        return ChannelModel(self.d, self.grid, self.channel_variant)

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)

    @cached_property
    def pre_ansatz(self) -> TwoQuditState:
        """Batched state after encoding, channel and the fixed Bell transform.

        Shape of the amplitudes is (n_messages, K, d^2). Independent of the
        trainable angles, so it is computed once per config.
        """
        msgs = all_messages(self.d_prime)
        bell = qudit.make_bell_state(self.d)
        encoded = np.stack([encode(bell, m, self.d_prime).amplitudes for m in msgs])
        phases = np.stack([channel_phases(self.d, x, self.channel_variant) for x in self.grid])
        g = encoded.reshape(len(msgs), 1, self.d, self.d) * np.exp(-1j * phases)[None, :, :, None]
        state = TwoQuditState(self.d, g.reshape(len(msgs), self.k, self.d * self.d))
        return bell_transform(state, self.fourier_convention, self.cx_convention)


def encode(bell: TwoQuditState, m: Message, d_prime: int | None = None) -> TwoQuditState:
    """Apply X^m1 Z^m2 to Alice's half."""
    m = Message(*m)
    limit = bell.d if d_prime is None else d_prime
    if not (0 <= m.m1 < limit and 0 <= m.m2 < limit):
        raise InvalidMessageError(f"message {tuple(m)} outside alphabet of size {limit}")
    state = qudit.apply_clock_power(bell, ALICE, m.m2)
    return qudit.apply_shift_power(state, ALICE, m.m1)


def apply_channel(state: TwoQuditState, x: float, variant: str = "literal-unitary") -> TwoQuditState:
    return qudit.apply_diag_phase(state, ALICE, channel_phases(state.d, x, variant))


def bell_transform(state: TwoQuditState, fourier_convention: str = "inverse",
                   cx_convention: str = "subtract") -> TwoQuditState:
    state = qudit.apply_cx(state, ALICE, cx_convention)
    return qudit.apply_fourier(state, ALICE, inverse=(fourier_convention == "inverse"))


def ansatz_unitary(state: TwoQuditState, mu: AnsatzParams, cx_convention: str = "subtract") -> TwoQuditState:
    """Per layer: diagonal phases on A and B, then F on each qudit, then CX."""
    for alice, bob in mu.layer_phases(state.d):
        state = qudit.apply_diag_phase(state, ALICE, alice)
        state = qudit.apply_diag_phase(state, BOB, bob)
        state = qudit.apply_fourier(state, ALICE)
        state = qudit.apply_fourier(state, BOB)
        state = qudit.apply_cx(state, ALICE, cx_convention)
    return state


def decode_circuit(state: TwoQuditState, mu: AnsatzParams, bypass: bool = False,
                   fourier_convention: str = "inverse", cx_convention: str = "subtract") -> TwoQuditState:
    if not bypass:
        # validate before doing any work
        list(mu.layer_phases(state.d))
    state = bell_transform(state, fourier_convention, cx_convention)
    if bypass:
        return state
    return ansatz_unitary(state, mu, cx_convention)


def mixing_matrix(d: int, cx_convention: str = "subtract") -> np.ndarray:
    """Fixed part of one ansatz layer, CX . (F x F), as a d^2 x d^2 matrix."""
    f = qudit.fourier_matrix(d)
    return qudit.cx_matrix(d, ALICE, cx_convention) @ np.kron(f, f)


def layer_phase_vectors(mu: AnsatzParams, d: int) -> list[np.ndarray]:
    """Per layer, the diagonal of D_A(alpha) x D_B(beta) on the flattened index a*d + b."""
    return [np.exp(-1j * (a[:, None] + b[None, :])).reshape(-1) for a, b in mu.layer_phases(d)]


def ansatz_matrix(mu: AnsatzParams, d: int, cx_convention: str = "subtract") -> np.ndarray:
    mix = mixing_matrix(d, cx_convention)
    u = np.eye(d * d, dtype=complex)
    for diag in layer_phase_vectors(mu, d):
        u = mix @ (diag[:, None] * u)
    return u


def outcome_table(mu: AnsatzParams, cfg: ProtocolConfig) -> np.ndarray:
    """Exact p(s | m, x) for every message and grid point, shape (n_messages, K, d^2)."""
    amps = cfg.pre_ansatz.amplitudes
    if not cfg.bypass:
        amps = amps @ ansatz_matrix(mu, cfg.d, cfg.cx_convention).T
    return qudit.clamp_probabilities(np.abs(amps) ** 2)


def outcome_distribution(m: Message, x: float, mu: AnsatzParams, cfg: ProtocolConfig) -> OutcomeDistribution:
    m = Message(*m)
    state = encode(qudit.make_bell_state(cfg.d), m, cfg.d_prime)
    state = apply_channel(state, x, cfg.channel_variant)
    state = decode_circuit(state, mu, cfg.bypass, cfg.fourier_convention, cfg.cx_convention)
    return qudit.born_distribution(state)


def superdense_outcome(m: Message, d: int) -> int:
    """Outcome index produced by the bare Bell transform at x = 0: s = (m2, -m1 mod d)."""
    return m[1] * d + (-m[0]) % d
