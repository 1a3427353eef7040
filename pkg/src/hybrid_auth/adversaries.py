"""Adversaries against both protocols.

Each strategy exists as a plain function (usable on its own), as an
``Adversary`` that plugs into the round engine, and as probability tables
that the vectorised batch engine samples from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hepuf import HepufDevice
from .protocol import Adversary, RoundContext
from .quantum import (
    BellKind,
    DensityMatrix,
    MeasBasis,
    PROJECTORS,
    Subsystem,
    bell_state,
    bloch_to_density,
    conditional_state,
    helstrom_projector,
    single_probabilities,
)
from .states import FreeQubit, PurifiedPair

BLOCH_SLACK = 1e-12


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 1/2], got {delta}")


@dataclass(frozen=True)
class StrategyParams:
    """Forger strategy for one bit: send ``rho0`` with claimed bit 0 w.p. ``q0``, else ``rho1`` with bit 1.

    Bloch vectors live in the x-z plane.
    """

    r_x: float
    r_z: float
    rp_x: float
    rp_z: float
    q0: float

    def __post_init__(self):
        for name, (x, z) in (("r", (self.r_x, self.r_z)), ("r'", (self.rp_x, self.rp_z))):
            if x * x + z * z > 1 + BLOCH_SLACK:
                raise ValueError(f"{name} lies outside the unit disk")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")

    def states(self) -> tuple[DensityMatrix, DensityMatrix]:
        return bloch_to_density((self.r_x, 0.0, self.r_z)), bloch_to_density((self.rp_x, 0.0, self.rp_z))

    def as_dict(self) -> dict:
        return {"r_x": self.r_x, "r_z": self.r_z, "rp_x": self.rp_x, "rp_z": self.rp_z, "q0": self.q0}


@dataclass(frozen=True)
class ForgerySubmission:
    state: DensityMatrix
    claimed_bit: int

    def __post_init__(self):
        if self.state.dim != 2:
            raise ValueError("a forgery is a single-qubit state")
        if self.claimed_bit not in (0, 1):
            raise ValueError("claimed bit must be 0 or 1")


# Offline: classical guessing


def offline_guess_attack(m: int, rng) -> str:
    """Replace the prover's outcomes by uniform bits."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return "".join(str(int(b)) for b in rng.integers(0, 2, size=m))


# Online: single-qubit forging game


def optimal_vector(delta: float) -> tuple[float, float]:
    """(r_x, r_z) of the best forged state with claimed bit 0."""
    _check_delta(delta)
    norm = math.sqrt(2 + 8 * delta * delta)
    return (1 - 2 * delta) / norm, (1 + 2 * delta) / norm


def optimal_strategy(delta: float) -> StrategyParams:
    rx, rz = optimal_vector(delta)
    # With q0 = 1 the second state is never sent; mirror the first for symmetry.
    return StrategyParams(rx, rz, -rx, -rz, 1.0)


def optimal_forgery(delta: float) -> ForgerySubmission:
    rx, rz = optimal_vector(delta)
    return ForgerySubmission(bloch_to_density((rx, 0.0, rz)), 0)


def swapped_forgery(delta: float) -> ForgerySubmission:
    """Optimal forgery for a verifier whose basis bits are mostly 1."""
    rx, rz = optimal_vector(delta)
    return ForgerySubmission(bloch_to_density((rz, 0.0, rx)), 0)


def _accept_zero_table(params: StrategyParams) -> np.ndarray:
    """``t[b, c]`` = Pr[verifier outcome 0 | forger sent rho_b, basis c]."""
    return np.array(
        [[single_probabilities(rho, MeasBasis(c))[0] for c in (0, 1)] for rho in params.states()]
    )


def game_strategy_win_prob_mc(delta: float, params: StrategyParams, trials: int, rng) -> float:
    """Monte Carlo estimate of the forging game win rate.

    The verifier draws basis bit c1 and parity bit c2 with Pr[0] = 1/2 + delta,
    measures the forged qubit in basis c1 and accepts when ``a xor b == c2``.
    """
    _check_delta(delta)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p0 = 0.5 + delta
    c1 = (rng.random(trials) >= p0).astype(np.intp)
    c2 = (rng.random(trials) >= p0).astype(np.intp)
    b = (rng.random(trials) >= params.q0).astype(np.intp)
    a = (rng.random(trials) >= _accept_zero_table(params)[b, c1]).astype(np.intp)
    return float(np.mean((a ^ b) == c2))


# Online: adaptive query followed by Helstrom discrimination


def honest_online_pair(delta: float) -> DensityMatrix:
    """Pair state as seen by someone who knows only the bias of y2."""
    p = 0.5 + delta
    return DensityMatrix(p * bell_state(BellKind.PHI_PLUS).matrix + (1 - p) * bell_state(BellKind.PSI_MINUS).matrix)


@lru_cache(maxsize=256)
def post_measurement_states(delta: float) -> tuple[DensityMatrix, ...]:
    """V-side states after P is measured: (y1=0,b=0), (y1=0,b=1), (y1=1,b=0), (y1=1,b=1)."""
    _check_delta(delta)
    rho = honest_online_pair(delta)
    return tuple(
        conditional_state(rho, Subsystem.P, MeasBasis(y1), b) for y1 in (0, 1) for b in (0, 1)
    )


@lru_cache(maxsize=256)
def _helstrom_y1_projectors(delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Guess-0 projector for announced b = 0 and b = 1. Prior on y1 = 0 is 1/2 + delta."""
    s = post_measurement_states(delta)
    p = 0.5 + delta
    return helstrom_projector(s[0], s[2], p), helstrom_projector(s[1], s[3], p)


def helstrom_attack_y1(delta: float, announced_b: int, adversary_state: DensityMatrix, rng) -> int:
    """Measure the captured qubit with the optimal y1 discriminator and return the guess."""
    _check_delta(delta)
    proj = _helstrom_y1_projectors(delta)[int(announced_b)]
    p_guess0 = float(np.real(np.trace(proj @ adversary_state.matrix)))
    return 0 if rng.random() < min(max(p_guess0, 0.0), 1.0) else 1


def adaptive_query_interaction(dev: HepufDevice, x: str, rng) -> list[tuple[DensityMatrix, int]]:
    """Query the prover's device as if verifying, keeping the V halves.

    Returns, per pair, the collapsed V state and the announced outcome.
    """
    dev.eval_mode1(x)
    captured = list(dev.v_qubits)
    dev.set_mode(2)
    b = dev.measure_mode2(rng)
    dev.set_mode(1)
    return [(q.state(), int(bit)) for q, bit in zip(captured, b)]


# Offline: purification of a noisy source


def purification_guess_projector(pair: PurifiedPair, basis_bit: int) -> np.ndarray:
    """Guess-0 projector on register A for V's outcome in ``basis_bit``.

    Must be computed from the state as emitted: once anyone has measured the
    pair, its ket no longer describes what the adversary knows.
    """
    s0, s1 = pair.register_branches(MeasBasis(int(basis_bit)))
    # Unnormalised branches already carry the priors.
    return helstrom_projector(s0, s1, 0.5)


@lru_cache(maxsize=256)
def _purification_projectors(epsilon: float, chi: BellKind) -> tuple[np.ndarray, np.ndarray]:
    template = PurifiedPair.flagged(epsilon, chi)
    return purification_guess_projector(template, 0), purification_guess_projector(template, 1)


def purification_adversary_guess(
    pair: PurifiedPair, basis_bit: int, rng, epsilon: float, chi: BellKind = BellKind.PHI_MINUS
) -> int:
    """Measure register A of ``pair`` (emitted as the flagged family) to guess V's outcome."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    return pair.measure_register(_purification_projectors(epsilon, chi)[int(basis_bit)], rng)


def purification_round(epsilon: float, basis_bit: int, rng, chi: BellKind = BellKind.PHI_MINUS) -> tuple[int, int]:
    """One adversary guess followed by the verifier's measurement: (guess, verifier outcome)."""
    pair = PurifiedPair.flagged(epsilon, chi)
    guess = purification_adversary_guess(pair, basis_bit, rng, epsilon, chi)
    outcome = pair.measure(Subsystem.V, MeasBasis(int(basis_bit)), rng)
    return guess, outcome


def purification_joint_table(epsilon: float, basis_bit: int, chi: BellKind = BellKind.PHI_MINUS) -> np.ndarray:
    """``t[g, v]`` = Pr[adversary guesses g and V obtains v]."""
    pair = PurifiedPair.flagged(epsilon, chi)
    guess0 = _purification_projectors(epsilon, chi)[int(basis_bit)]
    t = pair.ket.reshape(2, 2, 2)
    table = np.empty((2, 2))
    for g, proj_a in enumerate((guess0, np.eye(2) - guess0)):
        for v in (0, 1):
            proj_v = PROJECTORS[int(basis_bit), v]
            branch = np.einsum("vw,ab,wpb->vpa", proj_v, proj_a, t)
            table[g, v] = float(np.real(np.vdot(branch, branch)))
    return table


def purification_success(epsilon: float, basis_bit: int, chi: BellKind = BellKind.PHI_MINUS) -> float:
    table = purification_joint_table(epsilon, basis_bit, chi)
    return float(table[0, 0] + table[1, 1])


# Engine plug-ins


class ClassicalGuesser(Adversary):
    name = "classical-guess"

    def on_response(self, bits: str, ctx: RoundContext) -> str:
        return offline_guess_attack(len(bits), ctx.rng)


class PurificationAdversary(Adversary):
    """Holds the purifying registers and, given the bases, answers with its best guesses."""

    name = "purification"

    def __init__(self, epsilon: float, chi: BellKind = BellKind.PHI_MINUS):
        self.epsilon = epsilon
        self.chi = chi

    def on_response(self, bits: str, ctx: RoundContext) -> str:
        if not ctx.registers or ctx.side_info_bases is None:
            raise RuntimeError("purification attack needs a purification source")
        return "".join(
            str(purification_adversary_guess(pair, int(c), ctx.rng, self.epsilon, self.chi))
            for pair, c in zip(ctx.registers, ctx.side_info_bases)
        )


class StrategyForger(Adversary):
    """Replaces every transmitted V half with a forged qubit drawn from ``params``."""

    name = "grid"

    def __init__(self, params: StrategyParams):
        self.params = params
        self._states = params.states()

    def on_quantum(self, qubits: list, ctx: RoundContext) -> list:
        claimed = [0 if ctx.rng.random() < self.params.q0 else 1 for _ in qubits]
        ctx.scratch["claimed"] = "".join(map(str, claimed))
        return [FreeQubit(self._states[b]) for b in claimed]

    def on_response(self, bits: str, ctx: RoundContext) -> str:
        return ctx.scratch["claimed"]


class OptimalForger(StrategyForger):
    name = "optimal-forger"

    def __init__(self, delta: float):
        super().__init__(optimal_strategy(delta))


class HelstromAdaptiveForger(Adversary):
    """Queries the prover first, guesses each y1 bit, then forges for the guessed basis."""

    name = "helstrom-adaptive"

    def __init__(self, delta: float):
        self.delta = delta
        self._forged = (optimal_forgery(delta).state, swapped_forgery(delta).state)

    def on_challenge(self, x: str, ctx: RoundContext) -> str:
        if ctx.prover_device is None:
            raise RuntimeError("adaptive attack needs access to the prover's device")
        captured = adaptive_query_interaction(ctx.prover_device, x, ctx.rng)
        ctx.scratch["guesses"] = [helstrom_attack_y1(self.delta, b, rho, ctx.rng) for rho, b in captured]
        return x

    def on_quantum(self, qubits: list, ctx: RoundContext) -> list:
        return [FreeQubit(self._forged[g]) for g in ctx.scratch["guesses"]]

    def on_response(self, bits: str, ctx: RoundContext) -> str:
        return "0" * len(bits)


ATTACKS = ("none", "classical-guess", "purification", "optimal-forger", "grid", "helstrom-adaptive")
OFFLINE_ATTACKS = ("none", "classical-guess", "purification")
ONLINE_ATTACKS = ("none", "optimal-forger", "grid", "helstrom-adaptive")


def make_adversary(
    name: str, delta: float, params: StrategyParams | None = None, epsilon: float = 0.0, chi: BellKind = BellKind.PHI_MINUS
) -> Adversary:
    if name == "none":
        return Adversary()
    if name == "classical-guess":
        return ClassicalGuesser()
    if name == "purification":
        return PurificationAdversary(epsilon, chi)
    if name == "optimal-forger":
        return OptimalForger(delta)
    if name == "grid":
        if params is None:
            raise ValueError("attack 'grid' needs strategy parameters")
        return StrategyForger(params)
    if name == "helstrom-adaptive":
        return HelstromAdaptiveForger(delta)
    raise ValueError(f"unknown attack {name!r}")
