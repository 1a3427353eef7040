"""Hybrid Entangled PUF: a classical PUF whose response is split into basis
bits ``y1`` and encoding bits ``y2``, with ``y2`` encoded into Bell pairs.

Mode 0 is a one-shot classical readout for the verifier's setup. Mode 1 encodes
``y2`` into ``k = m/2`` pairs, keeps the P halves and releases the V halves.
Mode 2 measures the kept halves in the bases selected by ``y1``.
"""

from __future__ import annotations

from .puf import BiasedCpuf
from .quantum import BellKind, DensityMatrix, MeasBasis, Subsystem, bell_state
from .states import EntangledPair, PairQubit

DEFAULT_STATE_SET = (BellKind.PHI_PLUS, BellKind.PSI_MINUS)
ALTERNATE_STATE_SET = (BellKind.PHI_MINUS, BellKind.PSI_PLUS)


class HepufError(RuntimeError):
    pass


class CalledAfterLock(HepufError):
    """Mode-0 readout attempted after the device left mode 0."""


class WrongMode(HepufError):
    pass


class NothingRetained(HepufError):
    """Mode-2 measurement with no pairs from a mode-1 evaluation."""


class RelockAttempt(HepufError):
    """Trying to return to mode 0 after it was left."""


def split_response(y: str) -> tuple[str, str]:
    """``y = y1 || y2`` with equal halves."""
    if len(y) % 2:
        raise ValueError("response length must be even to split into y1 || y2")
    k = len(y) // 2
    return y[:k], y[k:]


class HepufDevice:
    """Stateful HEPUF wrapping a ``BiasedCpuf``; single owner, not thread-safe."""

    def __init__(self, cpuf: BiasedCpuf, state_set: tuple[BellKind, BellKind] = DEFAULT_STATE_SET):
        if cpuf.m % 2:
            raise ValueError("HEPUF needs an even CPUF response length")
        if len(state_set) != 2 or state_set[0] == state_set[1]:
            raise ValueError("state set must name two distinct Bell states")
        self.cpuf = cpuf
        self.state_set = tuple(state_set)
        self.mode = 0
        self.mode0_locked = False
        self.retained: list[tuple[int, EntangledPair]] = []
        self.v_qubits: list[PairQubit] = []
        self.basis_bits: str | None = None

    @property
    def k(self) -> int:
        return self.cpuf.m // 2

    def set_mode(self, new_mode: int) -> None:
        if new_mode not in (0, 1, 2):
            raise ValueError(f"unknown mode {new_mode}")
        if new_mode == 0 and self.mode0_locked:
            raise RelockAttempt("mode 0 can never be re-entered")
        if new_mode != 0:
            self.mode0_locked = True
        self.mode = new_mode

    def eval_mode0(self, x: str) -> str:
        if self.mode != 0 or self.mode0_locked:
            raise CalledAfterLock("classical readout is only available before the device leaves mode 0")
        return self.cpuf.eval(x)

    def eval_mode1(self, x: str) -> list[DensityMatrix]:
        """Encode ``y2`` into pairs; return the V-side reduced states.

        The V halves themselves (entangled with the retained P halves) are left
        in ``self.v_qubits`` for whoever transmits them.
        """
        if self.mode != 1:
            raise WrongMode(f"eval_mode1 called in mode {self.mode}")
        y1, y2 = split_response(self.cpuf.eval(x))
        pairs = [EntangledPair(bell_state(self.state_set[int(bit)])) for bit in y2]
        self.retained = list(enumerate(pairs))
        self.basis_bits = y1
        self.v_qubits = [pair.qubit(Subsystem.V) for pair in pairs]
        return [pair.reduced(Subsystem.V) for pair in pairs]

    def measure_mode2(self, rng) -> str:
        if self.mode != 2:
            raise WrongMode(f"measure_mode2 called in mode {self.mode}")
        if not self.retained:
            raise NothingRetained("no retained pairs; run a mode-1 evaluation first")
        outcomes = []
        for i, pair in self.retained:
            basis = MeasBasis(int(self.basis_bits[i]))
            outcomes.append(str(pair.measure(Subsystem.P, basis, rng)))
        self.retained = []
        return "".join(outcomes)


def eval_mode0(dev: HepufDevice, x: str) -> str:
    return dev.eval_mode0(x)


def eval_mode1(dev: HepufDevice, x: str) -> list[DensityMatrix]:
    return dev.eval_mode1(x)


def measure_mode2(dev: HepufDevice, rng) -> str:
    return dev.measure_mode2(rng)


def set_mode(dev: HepufDevice, new_mode: int) -> None:
    dev.set_mode(new_mode)
