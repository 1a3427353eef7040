"""Mutable holders for states that parties share during one round.

A pair object owns the joint V-P state. Whoever holds a ``PairQubit`` handle
(the prover's device, the channel, an adversary, the verifier) sees the
collapse caused by measurements made through any other handle of that pair.
"""

from __future__ import annotations

import numpy as np

from .quantum import (
    PROJECTORS,
    DensityMatrix,
    MeasBasis,
    MeasurementFault,
    Subsystem,
    _clean_probs,
    _sample,
    bell_ket,
    BellKind,
    measure_local,
    measure_single,
    reduce_array,
)

_AXIS = {Subsystem.V: 0, Subsystem.P: 1}


class EntangledPair:
    """Two-qubit (possibly mixed) state shared by V and P."""

    def __init__(self, state: DensityMatrix):
        if state.dim != 4:
            raise ValueError("an entangled pair needs a 4x4 state")
        self.state = state

    def reduced(self, keep: Subsystem) -> DensityMatrix:
        return DensityMatrix(reduce_array(self.state.matrix, keep), validate=False)

    def measure(self, subsystem: Subsystem, basis: MeasBasis, rng) -> int:
        result = measure_local(self.state, subsystem, basis, rng)
        self.state = result.joint
        return result.outcome

    def qubit(self, side: Subsystem) -> "PairQubit":
        return PairQubit(self, Subsystem(side))


class PurifiedPair:
    """Pure V-P-A state whose A register belongs to an adversary.

    The ket is indexed ``4*v + 2*p + a``.
    """

    def __init__(self, ket: np.ndarray):
        ket = np.asarray(ket, dtype=complex)
        if ket.shape != (8,):
            raise ValueError("tripartite ket must have 8 amplitudes")
        self.ket = ket / np.linalg.norm(ket)

    @classmethod
    def flagged(cls, epsilon: float, chi: BellKind) -> "PurifiedPair":
        """``sqrt(1-eps)|Phi+>|0>_A + sqrt(eps)|chi>|1>_A``."""
        if chi is BellKind.PHI_PLUS:
            raise ValueError("the flagged branch must be orthogonal to Phi+")
        e0 = np.array([1, 0], dtype=complex)
        e1 = np.array([0, 1], dtype=complex)
        ket = np.sqrt(1 - epsilon) * np.kron(bell_ket(BellKind.PHI_PLUS), e0) + np.sqrt(epsilon) * np.kron(
            bell_ket(chi), e1
        )
        return cls(ket)

    def _tensor(self) -> np.ndarray:
        return self.ket.reshape(2, 2, 2)

    @property
    def state(self) -> DensityMatrix:
        t = self._tensor()
        rho = np.einsum("vpa,wqa->vpwq", t, t.conj()).reshape(4, 4)
        return DensityMatrix(rho)

    def reduced(self, keep: Subsystem) -> DensityMatrix:
        return DensityMatrix(reduce_array(self.state.matrix, keep), validate=False)

    def register_state(self) -> DensityMatrix:
        t = self._tensor()
        return DensityMatrix(np.einsum("vpa,vpb->ab", t, t.conj()))

    def register_branches(self, basis: MeasBasis) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalised A states jointly with V's outcome 0 and 1 in ``basis``."""
        t = self._tensor()
        out = []
        for outcome in (0, 1):
            proj = PROJECTORS[int(basis), outcome]
            out.append(np.einsum("vpa,vw,wpb->ab", t.conj(), proj, t).T)
        return out[0], out[1]

    def _project(self, axis: int, proj: np.ndarray, rng) -> int:
        t = self._tensor()
        branch0 = np.moveaxis(np.tensordot(proj, t, axes=([1], [axis])), 0, axis)
        p0 = float(np.real(np.vdot(branch0, branch0)))
        probs = _clean_probs(p0)
        outcome = _sample(probs, rng)
        if outcome == 0:
            new = branch0
        else:
            comp = np.eye(2) - proj
            new = np.moveaxis(np.tensordot(comp, t, axes=([1], [axis])), 0, axis)
        norm = np.linalg.norm(new)
        if norm == 0:
            raise MeasurementFault("conditioning on a zero-probability outcome")
        self.ket = (new / norm).reshape(8)
        return outcome

    def measure(self, subsystem: Subsystem, basis: MeasBasis, rng) -> int:
        return self._project(_AXIS[Subsystem(subsystem)], PROJECTORS[int(basis), 0], rng)

    def measure_register(self, guess0_projector: np.ndarray, rng) -> int:
        return self._project(2, np.asarray(guess0_projector, dtype=complex), rng)

    def qubit(self, side: Subsystem) -> "PairQubit":
        return PairQubit(self, Subsystem(side))


class PairQubit:
    """Handle to one half of a shared pair."""

    def __init__(self, pair, side: Subsystem):
        self.pair = pair
        self.side = side

    def state(self) -> DensityMatrix:
        return self.pair.reduced(self.side)

    def measure(self, basis: MeasBasis, rng) -> int:
        return self.pair.measure(self.side, basis, rng)


class FreeQubit:
    """A standalone single-qubit state, e.g. one prepared by a forger."""

    def __init__(self, state: DensityMatrix):
        if state.dim != 2:
            raise ValueError("a free qubit needs a 2x2 state")
        self._state = state

    def state(self) -> DensityMatrix:
        return self._state

    def measure(self, basis: MeasBasis, rng) -> int:
        result = measure_single(self._state, basis, rng)
        # Post-measurement the qubit is the basis eigenstate.
        self._state = DensityMatrix(PROJECTORS[int(basis), result.outcome])
        return result.outcome
