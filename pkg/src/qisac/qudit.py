"""Dense two-qudit state-vector engine.

Amplitudes are stored Alice-major: index ``a * d + b`` holds the amplitude of
``|a, b>`` where ``a`` is Alice's level and ``b`` is Bob's. Every gate is a
pure function returning a new :class:`TwoQuditState`.

States may carry leading batch axes (``amplitudes.shape == (..., d * d)``);
gates act on the last axis only, so a whole table of states can be pushed
through a circuit in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidDimensionError, OraclePreconditionError

ALICE = "A"
BOB = "B"

NORM_TOL = 1e-10
CLAMP_TOL = 1e-12


def _check_dim(d: int) -> int:
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"qudit dimension must be an integer >= 2, got {d!r}")
    return int(d)


def _axis(qudit: str) -> int:
    # axis in the (..., d, d) view
    if qudit == ALICE:
        return -2
    if qudit == BOB:
        return -1
    raise InvalidArgumentError(f"qudit must be 'A' or 'B', got {qudit!r}")


def omega(d: int) -> complex:
    return np.exp(2j * np.pi / d)


@dataclass(frozen=True)
class TwoQuditState:
    d: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape[-1:] != (self.d * self.d,):
            raise InvalidDimensionError(
                f"amplitude array must end in length d^2={self.d * self.d}, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, d: int, a: int, b: int) -> "TwoQuditState":
        amps = np.zeros(d * d, dtype=complex)
        amps[(a % d) * d + (b % d)] = 1.0
        return cls(d, amps)

    def grid(self) -> np.ndarray:
        """View of the amplitudes as ``(..., d_alice, d_bob)``."""
        return self.amplitudes.reshape(self.amplitudes.shape[:-1] + (self.d, self.d))

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=-1)

    def _new(self, grid: np.ndarray) -> "TwoQuditState":
        return TwoQuditState(self.d, grid.reshape(grid.shape[:-2] + (self.d * self.d,)))


@dataclass(frozen=True)
class OutcomeDistribution:
    d: int
    probs: np.ndarray

    def pair(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.d)


def make_bell_state(d: int) -> TwoQuditState:
    """Maximally entangled state (1/sqrt d) sum_k |k, k>."""
    d = _check_dim(d)
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * (d + 1)] = 1.0 / np.sqrt(d)
    return TwoQuditState(d, amps)


def random_state(d: int, rng: np.random.Generator, size: int | None = None) -> TwoQuditState:
    shape = (d * d,) if size is None else (size, d * d)
    amps = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    amps /= np.linalg.norm(amps, axis=-1, keepdims=True)
    return TwoQuditState(d, amps)


def apply_shift_power(state: TwoQuditState, qudit: str, power: int) -> TwoQuditState:
    """X^power on one qudit: |k> -> |k + power mod d>."""
    return state._new(np.roll(state.grid(), int(power) % state.d, axis=_axis(qudit)))


def apply_clock_power(state: TwoQuditState, qudit: str, power: int) -> TwoQuditState:
    """Z^power on one qudit: |k> -> omega^(k * power) |k>."""
    d = state.d
    k = np.arange(d)
    phase = np.exp(2j * np.pi * ((k * int(power)) % d) / d)
    return _scale_levels(state, qudit, phase)


def apply_diag_phase(state: TwoQuditState, qudit: str, phases) -> TwoQuditState:
    """Multiply level k of the chosen qudit by exp(-i * phases[k])."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (state.d,):
        raise InvalidArgumentError(f"expected {state.d} phases, got shape {phases.shape}")
    return _scale_levels(state, qudit, np.exp(-1j * phases))


def _scale_levels(state: TwoQuditState, qudit: str, factors: np.ndarray) -> TwoQuditState:
    g = state.grid()
    if _axis(qudit) == -2:
        return state._new(g * factors[:, None])
    return state._new(g * factors[None, :])


def apply_fourier(state: TwoQuditState, qudit: str, inverse: bool = False) -> TwoQuditState:
    """F[j, k] = omega^(jk) / sqrt(d), or its adjoint when ``inverse`` is set."""
    g = state.grid()
    ax = _axis(qudit)
    # numpy's forward FFT uses exp(-2 pi i jk / n), i.e. the adjoint of F
    out = np.fft.fft(g, axis=ax, norm="ortho") if inverse else np.fft.ifft(g, axis=ax, norm="ortho")
    return state._new(out)


def apply_cx(state: TwoQuditState, control: str = ALICE, convention: str = "subtract") -> TwoQuditState:
    """Controlled increment.

    With the default ``"subtract"`` convention and Alice as control this maps
    |a, b> -> |a, b - a mod d>. ``"add"`` gives |a, b + a mod d>.
    """
    d = state.d
    if convention == "subtract":
        sign = 1
    elif convention == "add":
        sign = -1
    else:
        raise InvalidArgumentError(f"unknown CX convention {convention!r}")
    g = state.grid()
    idx = np.arange(d)
    if control == ALICE:
        # new[a, c] = old[a, c + sign * a]
        src = (idx[None, :] + sign * idx[:, None]) % d
        out = np.take_along_axis(g, np.broadcast_to(src, g.shape), axis=-1)
    elif control == BOB:
        src = (idx[:, None] + sign * idx[None, :]) % d
        out = np.take_along_axis(g, np.broadcast_to(src, g.shape), axis=-2)
    else:
        raise InvalidArgumentError(f"control must be 'A' or 'B', got {control!r}")
    return state._new(out)


def born_probabilities(amplitudes: np.ndarray) -> np.ndarray:
    probs = np.abs(amplitudes) ** 2
    total = probs.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > NORM_TOL):
        raise InvalidArgumentError(f"state is not normalized (sum of probabilities {total})")
    return probs


def born_distribution(state: TwoQuditState) -> OutcomeDistribution:
    return OutcomeDistribution(state.d, born_probabilities(state.amplitudes))


def clamp_probabilities(probs: np.ndarray) -> np.ndarray:
    """Zero out round-off negatives; anything below -1e-12 is an error."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < -CLAMP_TOL):
        raise InvalidArgumentError("probability vector has negative entries")
    return np.clip(probs, 0.0, None)


def sample_outcome(dist: OutcomeDistribution, rng: np.random.Generator, size: int | None = None):
    """Draw outcome indices ``s1 * d + s2`` from a single distribution."""
    probs = clamp_probabilities(dist.probs)
    if probs.ndim != 1:
        raise InvalidArgumentError("sample_outcome expects a single (unbatched) distribution")
    total = probs.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise InvalidArgumentError(f"probabilities sum to {total}, not 1")
    return rng.choice(probs.size, size=size, p=probs / total)


# Explicit matrices. Used as an independent oracle for the gate routines above.


def shift_matrix(d: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=complex)
    for k in range(d):
        m[(k + 1) % d, k] = 1.0
    return m


def clock_matrix(d: int) -> np.ndarray:
    return np.diag([omega(d) ** k for k in range(d)])


def fourier_matrix(d: int) -> np.ndarray:
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return np.exp(2j * np.pi * j * k / d) / np.sqrt(d)


def cx_matrix(d: int, control: str = ALICE, convention: str = "subtract") -> np.ndarray:
    sign = -1 if convention == "subtract" else 1
    m = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            if control == ALICE:
                out = a * d + (b + sign * a) % d
            else:
                out = ((a + sign * b) % d) * d + b
            m[out, a * d + b] = 1.0
    return m


def on_qudit(matrix: np.ndarray, qudit: str) -> np.ndarray:
    eye = np.eye(matrix.shape[0])
    return np.kron(matrix, eye) if qudit == ALICE else np.kron(eye, matrix)


def dense_oracle_apply(state: TwoQuditState, matrix) -> TwoQuditState:
    """Full d^2 x d^2 matrix-vector product, for cross-checking the gate routines."""
    matrix = np.asarray(matrix, dtype=complex)
    n = state.d * state.d
    if matrix.shape != (n, n):
        raise OraclePreconditionError(f"matrix must be {n}x{n}, got {matrix.shape}")
    if not np.allclose(matrix.conj().T @ matrix, np.eye(n), atol=NORM_TOL, rtol=0):
        raise OraclePreconditionError("oracle matrix is not unitary within 1e-10")
    return TwoQuditState(state.d, state.amplitudes @ matrix.T)
