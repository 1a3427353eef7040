"""Round-level state machines for the offline (pre-shared Bell pairs) and
online (HEPUF) authentication protocols.

Each round records every channel message in a ``Transcript``. Adversaries
interpose at three points: the classical challenge V->P, the quantum
V-subsystems P->V (online only) and the classical outcome string P->V.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .hepuf import HepufDevice, WrongMode, split_response
from .puf import BiasedCpuf, CrpDatabase, draw_challenge
from .quantum import (
    BellKind,
    DensityMatrix,
    MeasBasis,
    PROJECTORS,
    Subsystem,
    bell_state,
    check_density,
    fidelity,
)
from .states import EntangledPair, PurifiedPair

FIDELITY_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


class Direction(str, Enum):
    V_TO_P = "VtoP"
    P_TO_V = "PtoV"
    SOURCE_TO_V = "SourceToV"
    SOURCE_TO_P = "SourceToP"


class SourceMode(str, Enum):
    PERFECT = "perfect"
    MIXED_NOISE = "mixed"
    ADVERSARIAL_PURIFICATION = "purification"


@dataclass(frozen=True)
class SourceModel:
    """Entanglement source for the offline protocol.

    ``noise`` is the orthogonal Bell mixture used by MIXED_NOISE and ``chi``
    the flagged branch of the ADVERSARIAL_PURIFICATION family.
    """

    epsilon: float = 0.0
    mode: SourceMode = SourceMode.PERFECT
    noise: tuple[tuple[BellKind, float], ...] = ((BellKind.PSI_MINUS, 1.0),)
    chi: BellKind = BellKind.PHI_MINUS

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        object.__setattr__(self, "mode", SourceMode(self.mode))
        weights = [w for _, w in self.noise]
        if any(kind is BellKind.PHI_PLUS for kind, _ in self.noise):
            raise ValueError("noise mixture must be orthogonal to Phi+")
        if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-12):
            raise ValueError("noise mixture weights must be non-negative and sum to 1")
        if self.chi is BellKind.PHI_PLUS:
            raise ValueError("purification branch must be orthogonal to Phi+")

    def pair_state(self) -> DensityMatrix:
        """The V-P state of one emitted pair."""
        if self.mode is SourceMode.PERFECT:
            return bell_state(BellKind.PHI_PLUS)
        if self.mode is SourceMode.MIXED_NOISE:
            sigma = sum(w * bell_state(kind).matrix for kind, w in self.noise)
            return DensityMatrix((1 - self.epsilon) * bell_state(BellKind.PHI_PLUS).matrix + self.epsilon * sigma)
        return PurifiedPair.flagged(self.epsilon, self.chi).state

    def describe(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mode": self.mode.value,
            "noise": [[k.value, w] for k, w in self.noise],
            "chi": self.chi.value,
        }


def distribute_pairs(source: SourceModel, count: int, rng=None) -> list:
    """Emit ``count`` pairs. Purification pairs carry the adversary's register.

    ``rng`` is accepted for interface uniformity; the emitted states are fixed
    by the source model.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if source.mode is SourceMode.ADVERSARIAL_PURIFICATION:
        pairs = [PurifiedPair.flagged(source.epsilon, source.chi) for _ in range(count)]
    else:
        state = source.pair_state()
        pairs = [EntangledPair(state) for _ in range(count)]
    target = bell_state(BellKind.PHI_PLUS)
    for pair in pairs:
        if fidelity(pair.state, target) < 1 - source.epsilon - FIDELITY_TOL:
            raise AssertionError("source emitted a pair below its fidelity budget")
    return pairs


@dataclass(frozen=True)
class Decision:
    accepted: bool
    failing_bit_indices: tuple[int, ...] = ()


def _bits_equal_length(*strings: str) -> None:
    if len({len(s) for s in strings}) > 1:
        raise ValueError("bit strings must have equal lengths")


def verify_offline(a: str, b: str) -> Decision:
    _bits_equal_length(a, b)
    failing = tuple(j for j, (x, y) in enumerate(zip(a, b)) if x != y)
    return Decision(not failing, failing)


def verify_online(a: str, b: str, y2: str) -> Decision:
    """Accept iff ``a[j] xor b[j] == y2[j]`` for every j."""
    _bits_equal_length(a, b, y2)
    failing = tuple(j for j in range(len(a)) if (int(a[j]) ^ int(b[j])) != int(y2[j]))
    return Decision(not failing, failing)


def _safe_verify(verify, length: int, *args) -> Decision:
    try:
        return verify(*args)
    except ValueError:
        return Decision(False, tuple(range(length)))


@dataclass
class ChannelEvent:
    direction: Direction
    payload: Any  # str for classical bits, DensityMatrix for quantum payloads
    round: int
    label: str
    pair_index: int | None = None
    origin: str = "honest"

    @property
    def is_quantum(self) -> bool:
        return isinstance(self.payload, DensityMatrix)


@dataclass
class RoundContext:
    """What an adversary can see or touch during one round."""

    protocol: str
    bits: int
    delta: float
    rng: Any
    prover_device: HepufDevice | None = None
    registers: list[PurifiedPair] | None = None
    # Worst-case side information granted to the purification adversary.
    side_info_bases: str | None = None
    scratch: dict = field(default_factory=dict)


class Adversary:
    """Passive channel: forwards everything unchanged."""

    name = "none"

    def on_challenge(self, x: str, ctx: RoundContext) -> str:
        return x

    def on_quantum(self, qubits: list, ctx: RoundContext) -> list:
        return qubits

    def on_response(self, bits: str, ctx: RoundContext) -> str:
        return bits


@dataclass
class Transcript:
    round_id: int
    protocol: str
    config: dict
    events: list[ChannelEvent] = field(default_factory=list)
    verifier: dict = field(default_factory=dict)
    decision: Decision | None = None

    def log(self, direction, payload, label, pair_index=None, origin="honest") -> None:
        self.events.append(ChannelEvent(Direction(direction), payload, self.round_id, label, pair_index, origin))

    def classical(self, direction=None, origin=None) -> list[ChannelEvent]:
        return [
            e
            for e in self.events
            if not e.is_quantum
            and (direction is None or e.direction is Direction(direction))
            and (origin is None or e.origin == origin)
        ]

    def delivered(self, direction, label) -> Any:
        """Last payload with this label and direction, i.e. what the receiver got."""
        found = [e.payload for e in self.events if e.direction is Direction(direction) and e.label == label]
        return found[-1] if found else None

    def to_lines(self) -> list[str]:
        lines = [_dumps({"type": "header", "round_id": self.round_id, "protocol": self.protocol, "config": self.config})]
        for e in self.events:
            rec: dict[str, Any] = {
                "type": "event",
                "round": e.round,
                "direction": e.direction.value,
                "label": e.label,
                "origin": e.origin,
                "pair_index": e.pair_index,
            }
            if e.is_quantum:
                m = e.payload.matrix
                rec["payload"] = {
                    "kind": "quantum",
                    "dim": int(m.shape[0]),
                    "re": [float(v) for v in m.real.ravel()],
                    "im": [float(v) for v in m.imag.ravel()],
                }
            else:
                rec["payload"] = {"kind": "classical", "bits": e.payload}
            lines.append(_dumps(rec))
        lines.append(_dumps({"type": "verifier", **self.verifier}))
        if self.decision is not None:
            lines.append(
                _dumps(
                    {
                        "type": "decision",
                        "accepted": self.decision.accepted,
                        "failing_bit_indices": list(self.decision.failing_bit_indices),
                    }
                )
            )
        return lines


def _dumps(obj) -> str:
    """Compact JSON with floats at 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dumps(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite float in transcript")
        text = format(obj, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_transcripts(transcripts, path) -> None:
    with open(path, "w") as fh:
        for t in transcripts:
            fh.write("\n".join(t.to_lines()) + "\n")


class MalformedTranscript(ValueError):
    pass


def read_transcripts(path) -> list[Transcript]:
    text = Path(path).read_text()
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedTranscript(f"line {lineno}: {exc}") from exc
    if not records:
        raise MalformedTranscript("transcript file is empty")
    out: list[Transcript] = []
    for rec in records:
        kind = rec.get("type")
        if kind == "header":
            out.append(Transcript(int(rec["round_id"]), rec["protocol"], rec.get("config", {})))
            continue
        if not out:
            raise MalformedTranscript("record before any header")
        t = out[-1]
        if kind == "event":
            p = rec["payload"]
            if p["kind"] == "quantum":
                dim = int(p["dim"])
                m = (np.array(p["re"]) + 1j * np.array(p["im"])).reshape(dim, dim)
                payload = DensityMatrix(m, validate=False)
            else:
                payload = p["bits"]
            t.events.append(
                ChannelEvent(Direction(rec["direction"]), payload, int(rec["round"]), rec["label"], rec.get("pair_index"), rec.get("origin", "honest"))
            )
        elif kind == "verifier":
            t.verifier = {k: v for k, v in rec.items() if k != "type"}
        elif kind == "decision":
            t.decision = Decision(bool(rec["accepted"]), tuple(rec["failing_bit_indices"]))
        else:
            raise MalformedTranscript(f"unknown record type {kind!r}")
    return out


def _measure_string(qubits, bases: str, rng) -> str:
    return "".join(str(q.measure(MeasBasis(int(bit)), rng)) for q, bit in zip(qubits, bases))


def run_offline_round(
    db: CrpDatabase,
    prover_puf: BiasedCpuf,
    source: SourceModel,
    adversary: Adversary | None = None,
    rng=None,
    *,
    pairs=None,
    consume: bool = True,
    round_id: int = 0,
) -> Transcript:
    if rng is None:
        raise ValueError("an explicit rng is required")
    if not db.entries:
        raise ConfigurationError("CRP database is empty")
    if not db.matches(prover_puf):
        raise ConfigurationError("prover PUF does not match the database device")
    adversary = adversary or Adversary()
    m = db.m
    if pairs is None:
        pairs = distribute_pairs(source, m, rng)
    elif len(pairs) != m:
        raise ConfigurationError(f"{len(pairs)} pairs supplied for an {m}-bit response")

    t = Transcript(round_id, "offline", {"m": m, "n": db.n, "delta": db.delta, "source": source.describe(), "attack": adversary.name})
    for j, pair in enumerate(pairs):
        t.log(Direction.SOURCE_TO_V, pair.reduced(Subsystem.V), "pair_share", j)
        t.log(Direction.SOURCE_TO_P, pair.reduced(Subsystem.P), "pair_share", j)

    x, y = draw_challenge(db, rng)
    if consume:
        db.remove(x)
    ctx = RoundContext(
        "offline",
        m,
        db.delta,
        rng,
        registers=[p for p in pairs if isinstance(p, PurifiedPair)] or None,
        side_info_bases=y,
    )

    t.log(Direction.V_TO_P, x, "challenge")
    x_recv = adversary.on_challenge(x, ctx)
    if x_recv != x:
        t.log(Direction.V_TO_P, x_recv, "challenge", origin="adversary")

    y_prover = prover_puf.eval(x_recv)
    a = _measure_string([p.qubit(Subsystem.P) for p in pairs], y_prover, rng)
    t.log(Direction.P_TO_V, a, "outcomes")
    a_recv = adversary.on_response(a, ctx)
    if a_recv != a:
        t.log(Direction.P_TO_V, a_recv, "outcomes", origin="adversary")

    b = _measure_string([p.qubit(Subsystem.V) for p in pairs], y, rng)
    t.verifier = {"challenge": x, "verifier_outcomes": b}
    t.decision = _safe_verify(verify_offline, m, a_recv, b)
    return t


def run_online_round(
    db: CrpDatabase,
    prover_dev: HepufDevice,
    adversary: Adversary | None = None,
    rng=None,
    *,
    consume: bool = True,
    round_id: int = 0,
) -> Transcript:
    if rng is None:
        raise ValueError("an explicit rng is required")
    if prover_dev.mode != 1:
        raise WrongMode("the prover's HEPUF must be in mode 1 at round start")
    if not db.entries:
        raise ConfigurationError("CRP database is empty")
    if not db.matches(prover_dev.cpuf):
        raise ConfigurationError("prover HEPUF does not match the database device")
    adversary = adversary or Adversary()
    k = prover_dev.k

    t = Transcript(round_id, "online", {"k": k, "n": db.n, "delta": db.delta, "state_set": [s.value for s in prover_dev.state_set], "attack": adversary.name})
    x, y = draw_challenge(db, rng)
    if consume:
        db.remove(x)
    y1, y2 = split_response(y)
    ctx = RoundContext("online", k, db.delta, rng, prover_device=prover_dev)

    t.log(Direction.V_TO_P, x, "challenge")
    x_recv = adversary.on_challenge(x, ctx)
    if x_recv != x:
        t.log(Direction.V_TO_P, x_recv, "challenge", origin="adversary")

    prover_dev.eval_mode1(x_recv)
    sent = list(prover_dev.v_qubits)
    for j, q in enumerate(sent):
        t.log(Direction.P_TO_V, q.state(), "v_subsystem", j)
    received = adversary.on_quantum(list(sent), ctx)
    if len(received) != k:
        raise ConfigurationError("adversary must deliver exactly k qubits")
    for j, (q_sent, q_recv) in enumerate(zip(sent, received)):
        if q_recv is not q_sent:
            t.log(Direction.P_TO_V, q_recv.state(), "v_subsystem", j, origin="adversary")

    prover_dev.set_mode(2)
    b = prover_dev.measure_mode2(rng)
    prover_dev.set_mode(1)
    t.log(Direction.P_TO_V, b, "outcomes")
    b_recv = adversary.on_response(b, ctx)
    if b_recv != b:
        t.log(Direction.P_TO_V, b_recv, "outcomes", origin="adversary")

    a = _measure_string(received, y1, rng)
    # y2 is verifier-private; it is kept only so replay can recheck the decision.
    t.verifier = {"challenge": x, "verifier_outcomes": a, "parity": y2}
    t.decision = _safe_verify(verify_online, k, a, b_recv, y2)
    return t


_CLASSICAL_CHANNEL = {(Direction.V_TO_P, "challenge"), (Direction.P_TO_V, "outcomes")}


def replay(t: Transcript) -> dict[str, bool]:
    """Recheck a recorded round. Returns invariant name -> pass flag."""
    n = t.config.get("n")
    width = t.config.get("m") if t.protocol == "offline" else t.config.get("k")
    discipline = True
    placement = True
    states_ok = True
    for e in t.events:
        if e.is_quantum:
            allowed = (
                e.direction in (Direction.SOURCE_TO_V, Direction.SOURCE_TO_P)
                if t.protocol == "offline"
                else e.direction is Direction.P_TO_V
            )
            placement &= allowed and e.pair_index is not None
            try:
                check_density(e.payload.matrix)
            except ValueError:
                states_ok = False
            continue
        if (e.direction, e.label) not in _CLASSICAL_CHANNEL or not isinstance(e.payload, str):
            discipline = False
            continue
        expected = n if e.label == "challenge" else width
        if expected is not None and len(e.payload) != expected:
            discipline = False

    consistent = False
    if t.decision is not None:
        a = t.delivered(Direction.P_TO_V, "outcomes")
        mine = t.verifier.get("verifier_outcomes")
        if isinstance(a, str) and isinstance(mine, str):
            if t.protocol == "offline":
                again = _safe_verify(verify_offline, len(mine), a, mine)
            else:
                parity = t.verifier.get("parity", "")
                again = _safe_verify(verify_online, len(mine), mine, a, parity)
            consistent = again == t.decision
    return {
        "decision_present": t.decision is not None,
        "channel_discipline": discipline,
        "quantum_placement": placement,
        "valid_states": states_ok,
        "decision_consistent": consistent,
    }


def honest_bit_accept_prob(source: SourceModel, delta: float) -> float:
    """Exact per-bit acceptance of an honest offline round.

    Both parties measure in the same basis, which is Z with probability
    1/2 + delta; a bit passes when their outcomes agree.
    """
    rho = source.pair_state().matrix
    total = 0.0
    for basis, weight in ((MeasBasis.COMPUTATIONAL, 0.5 + delta), (MeasBasis.HADAMARD, 0.5 - delta)):
        agree = sum(np.kron(PROJECTORS[basis, o], PROJECTORS[basis, o]) for o in (0, 1))
        total += weight * float(np.real(np.trace(agree @ rho)))
    return min(max(total, 0.0), 1.0)
