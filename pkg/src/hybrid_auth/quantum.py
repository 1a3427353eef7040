"""Dense density-matrix toolkit for one and two qubits.

Two-qubit states use a fixed tensor ordering: the verifier-side qubit V is the
first factor and the prover-side qubit P the second, so the basis index of
``|v p>`` is ``2*v + p``. Every module in the package relies on this.

All sampling goes through an explicit ``rng`` argument (anything with a
``random()`` method returning a float in [0, 1), e.g. ``numpy.random.Generator``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
BLOCH_TOL = 1e-12
# Born probabilities below this are treated as exact zeros before sampling.
PROB_FLOOR = 1e-15

SQRT_HALF = 1.0 / np.sqrt(2.0)

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class InvalidStateError(ValueError):
    """A matrix violates the density-matrix invariants."""


class MeasurementFault(RuntimeError):
    """A zero-probability measurement branch was selected."""


class BellKind(Enum):
    PHI_PLUS = "PhiPlus"
    PHI_MINUS = "PhiMinus"
    PSI_PLUS = "PsiPlus"
    PSI_MINUS = "PsiMinus"


class MeasBasis(IntEnum):
    """Single-qubit projective basis; the integer value is the selecting bit."""

    COMPUTATIONAL = 0
    HADAMARD = 1


class Subsystem(str, Enum):
    V = "V"
    P = "P"


_BELL_KETS = {
    BellKind.PHI_PLUS: np.array([1, 0, 0, 1], dtype=complex) * SQRT_HALF,
    BellKind.PHI_MINUS: np.array([1, 0, 0, -1], dtype=complex) * SQRT_HALF,
    BellKind.PSI_PLUS: np.array([0, 1, 1, 0], dtype=complex) * SQRT_HALF,
    BellKind.PSI_MINUS: np.array([0, 1, -1, 0], dtype=complex) * SQRT_HALF,
}

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) * SQRT_HALF
KET_MINUS = np.array([1, -1], dtype=complex) * SQRT_HALF

# PROJECTORS[basis][outcome] is the 2x2 projector for that outcome.
PROJECTORS = np.array(
    [
        [np.outer(KET_0, KET_0.conj()), np.outer(KET_1, KET_1.conj())],
        [np.outer(KET_PLUS, KET_PLUS.conj()), np.outer(KET_MINUS, KET_MINUS.conj())],
    ]
)
PROJECTORS.setflags(write=False)


def bell_ket(kind: BellKind) -> np.ndarray:
    return _BELL_KETS[kind].copy()


class DensityMatrix:
    """Immutable Hermitian, unit-trace, positive semidefinite matrix of size 2 or 4.

    The invariants are checked on construction; pass ``validate=False`` only for
    matrices produced by operations already known to preserve them.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix, *, validate: bool = True):
        m = np.array(matrix, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise InvalidStateError(f"density matrix must be 2x2 or 4x4, got {m.shape}")
        if validate:
            check_density(m)
        m.setflags(write=False)
        self._m = m

    @classmethod
    def from_ket(cls, ket) -> "DensityMatrix":
        psi = np.asarray(ket, dtype=complex)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidStateError("zero vector is not a state")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int = 2) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self._m @ self._m)))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other_m = other.matrix if isinstance(other, DensityMatrix) else np.asarray(other)
        return self._m.shape == other_m.shape and bool(np.allclose(self._m, other_m, rtol=0, atol=atol))

    def __array__(self, dtype=None, copy=None):
        return self._m.astype(dtype) if dtype is not None else self._m

    def __eq__(self, other) -> bool:
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self._m.shape == other._m.shape and bool(np.array_equal(self._m, other._m))

    __hash__ = None

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, {np.array2string(self._m, precision=6)})"


def check_density(m: np.ndarray) -> None:
    """Raise InvalidStateError unless ``m`` is Hermitian, unit-trace and PSD."""
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise InvalidStateError("matrix is not Hermitian")
    tr = np.trace(m)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"trace is {tr!r}, expected 1")
    if np.linalg.eigvalsh(m)[0] < PSD_TOL:
        raise InvalidStateError("matrix is not positive semidefinite")


def _as_matrix(state) -> np.ndarray:
    return state.matrix if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)


def _same_dims(a, b) -> tuple[np.ndarray, np.ndarray]:
    am, bm = _as_matrix(a), _as_matrix(b)
    if am.shape != bm.shape:
        raise ValueError(f"dimension mismatch: {am.shape} vs {bm.shape}")
    return am, bm


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not -1.0 - BLOCH_TOL <= c <= 1.0 + BLOCH_TOL:
                raise ValueError(f"Bloch component {c} outside [-1, 1]")
        if self.norm() > 1.0 + BLOCH_TOL:
            raise ValueError(f"Bloch vector length {self.norm()} exceeds 1 (unphysical)")

    def norm(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def bell_state(kind: BellKind) -> DensityMatrix:
    """Pure projector onto the named Bell state (V first, P second)."""
    return DensityMatrix.from_ket(_BELL_KETS[kind])


def bloch_to_density(v) -> DensityMatrix:
    if not isinstance(v, BlochVector):
        v = BlochVector(*v)
    m = 0.5 * (I2 + v.x * SIGMA_X + v.y * SIGMA_Y + v.z * SIGMA_Z)
    return DensityMatrix(m)


def density_to_bloch(state) -> BlochVector:
    m = _as_matrix(state)
    if m.shape != (2, 2):
        raise ValueError("Bloch vectors exist only for single qubits")
    r = [float(np.real(np.trace(m @ s))) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    norm = np.sqrt(sum(c * c for c in r))
    # Round-off on pure states can push the length a hair above 1.
    if 1.0 < norm <= 1.0 + 1e-9:
        r = [c / norm for c in r]
    return BlochVector(*r)


def reduce_array(rho: np.ndarray, keep: Subsystem) -> np.ndarray:
    """Partial trace of a stack ``(..., 4, 4)`` of two-qubit matrices."""
    r = rho.reshape(rho.shape[:-2] + (2, 2, 2, 2))
    if Subsystem(keep) is Subsystem.V:
        return np.einsum("...ikjk->...ij", r)
    return np.einsum("...kikj->...ij", r)


def partial_trace(state, keep: Subsystem) -> DensityMatrix:
    m = _as_matrix(state)
    if m.shape != (4, 4):
        raise ValueError(f"partial trace needs a two-qubit state, got shape {m.shape}")
    return DensityMatrix(reduce_array(m, keep))


def local_projector(subsystem: Subsystem, basis: MeasBasis, outcome: int) -> np.ndarray:
    """4x4 projector for measuring one half of a two-qubit system."""
    proj = PROJECTORS[int(basis), int(outcome)]
    if Subsystem(subsystem) is Subsystem.V:
        return np.kron(proj, I2)
    return np.kron(I2, proj)


def _clean_probs(p0: float) -> np.ndarray:
    p0 = min(max(float(p0), 0.0), 1.0)
    if p0 < PROB_FLOOR:
        p0 = 0.0
    elif p0 > 1.0 - PROB_FLOOR:
        p0 = 1.0
    return np.array([p0, 1.0 - p0])


def outcome_probabilities(state, subsystem: Subsystem, basis: MeasBasis) -> np.ndarray:
    """Born probabilities ``[Pr(0), Pr(1)]`` for a local measurement on a two-qubit state."""
    m = _as_matrix(state)
    reduced = reduce_array(m, subsystem)
    return _clean_probs(np.real(np.trace(PROJECTORS[int(basis), 0] @ reduced)))


def single_probabilities(state, basis: MeasBasis) -> np.ndarray:
    m = _as_matrix(state)
    if m.shape != (2, 2):
        raise ValueError("single-qubit measurement needs a 2x2 state")
    return _clean_probs(np.real(np.trace(PROJECTORS[int(basis), 0] @ m)))


def _sample(probs: np.ndarray, rng) -> int:
    outcome = 0 if rng.random() < probs[0] else 1
    if probs[outcome] <= 0.0:
        raise MeasurementFault("sampled a zero-probability outcome")
    return outcome


def post_measurement(state, subsystem: Subsystem, basis: MeasBasis, outcome: int) -> tuple[np.ndarray, float]:
    """Normalised joint state after a local projective outcome, and its probability."""
    m = _as_matrix(state)
    proj = local_projector(subsystem, basis, outcome)
    projected = proj @ m @ proj
    prob = float(np.real(np.trace(projected)))
    if prob <= 0.0:
        raise MeasurementFault("conditioning on a zero-probability outcome")
    joint = projected / prob
    return 0.5 * (joint + joint.conj().T), prob


class LocalMeasurement(NamedTuple):
    outcome: int
    collapsed: DensityMatrix  # state of the unmeasured qubit
    prob: float
    joint: DensityMatrix  # full post-measurement two-qubit state


class SingleMeasurement(NamedTuple):
    outcome: int
    prob: float


def conditional_state(state, subsystem: Subsystem, basis: MeasBasis, outcome: int) -> DensityMatrix:
    """State left on the other qubit after ``outcome`` on ``subsystem``."""
    joint, _ = post_measurement(state, subsystem, basis, outcome)
    other = Subsystem.P if Subsystem(subsystem) is Subsystem.V else Subsystem.V
    return DensityMatrix(reduce_array(joint, other))


def measure_local(state, subsystem: Subsystem, basis: MeasBasis, rng) -> LocalMeasurement:
    """Measure one qubit of a two-qubit state and sample the outcome by the Born rule."""
    m = _as_matrix(state)
    if m.shape != (4, 4):
        raise ValueError("measure_local needs a two-qubit state")
    probs = outcome_probabilities(m, subsystem, basis)
    outcome = _sample(probs, rng)
    joint, _ = post_measurement(m, subsystem, basis, outcome)
    other = Subsystem.P if Subsystem(subsystem) is Subsystem.V else Subsystem.V
    return LocalMeasurement(
        outcome=outcome,
        collapsed=DensityMatrix(reduce_array(joint, other)),
        prob=float(probs[outcome]),
        joint=DensityMatrix(joint),
    )


def measure_single(state, basis: MeasBasis, rng) -> SingleMeasurement:
    probs = single_probabilities(state, basis)
    outcome = _sample(probs, rng)
    return SingleMeasurement(outcome, float(probs[outcome]))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``; equals ``Tr(a b)`` for pure ``b``."""
    am, bm = _same_dims(a, b)
    # Pure argument: the overlap is exact and avoids sqrt noise on null eigenvalues.
    for x, y in ((am, bm), (bm, am)):
        if abs(np.trace(y @ y).real - 1.0) < 1e-12:
            return float(min(max(np.trace(x @ y).real, 0.0), 1.0))
    sa = _psd_sqrt(am)
    inner = sa @ bm @ sa
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(min(np.sum(np.sqrt(w)) ** 2, 1.0))


def trace_norm(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=complex)
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))


def trace_distance(a, b) -> float:
    am, bm = _same_dims(a, b)
    return min(0.5 * trace_norm(am - bm), 1.0)


def helstrom_success(rho0, rho1, prior0: float = 0.5) -> float:
    """Optimal probability of telling ``rho0`` (prior ``prior0``) from ``rho1``."""
    a, b = _same_dims(rho0, rho1)
    return 0.5 + 0.5 * trace_norm(prior0 * a - (1.0 - prior0) * b)


def helstrom_projector(rho0, rho1, prior0: float = 0.5) -> np.ndarray:
    """Projector onto the non-negative eigenspace of ``p*rho0 - (1-p)*rho1``.

    Clicking this projector means "guess 0". Zero eigenvalues go to the
    guess-0 side, so exact ties resolve to 0.
    """
    a, b = _same_dims(rho0, rho1)
    w, v = np.linalg.eigh(prior0 * a - (1.0 - prior0) * b)
    keep = w >= -1e-14
    vk = v[:, keep]
    return vk @ vk.conj().T
