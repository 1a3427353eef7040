"""Weak classical PUF with per-bit bias, and the verifier's CRP database.

The device is modelled as a keyed pseudorandom function thresholded into
biased bits: bit ``j`` of ``f(x)`` is 0 exactly when
``U(seed, x, j) < 1/2 + delta``, where ``U`` is a SplitMix64-derived uniform.
Responses are computed on demand; nothing is tabulated.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mixing import MASK64, mix64, stream, to_unit

MAX_CHALLENGE_BITS = 64


class EmptyDatabaseError(ValueError):
    pass


def int_to_bits(value: int, width: int) -> str:
    return format(int(value), f"0{width}b") if width else ""


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).ravel())


def str_to_bits(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def _check_bitstring(s: str, width: int, what: str) -> None:
    if len(s) != width or any(c not in "01" for c in s):
        raise ValueError(f"{what} must be a {width}-bit string, got {s!r}")


def response_bits(seeds, challenges, m: int, delta: float) -> np.ndarray:
    """Vectorised CPUF evaluation.

    ``seeds`` and ``challenges`` broadcast to a common shape ``S``; the result
    has shape ``S + (m,)`` with uint8 entries.
    """
    seeds, challenges = np.broadcast_arrays(
        np.asarray(seeds, dtype=np.uint64), np.asarray(challenges, dtype=np.uint64)
    )
    shape = seeds.shape
    key = mix64(stream(seeds.ravel(), 0) ^ challenges.ravel())
    idx = np.arange(m, dtype=np.uint64)
    u = to_unit(stream(key[:, None], idx[None, :]).reshape(key.size, m))
    bits = (u >= 0.5 + delta).astype(np.uint8)
    return bits.reshape(shape + (m,))


@dataclass(frozen=True)
class BiasedCpuf:
    """Deterministic ``{0,1}^n -> {0,1}^m`` map; each bit is 0 with probability 1/2 + delta."""

    n: int
    m: int
    delta: float
    seed: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_CHALLENGE_BITS:
            raise ValueError(f"challenge length n must be in [1, {MAX_CHALLENGE_BITS}]")
        if self.m < 1:
            raise ValueError("response length m must be positive")
        if not 0.0 <= self.delta <= 0.5:
            raise ValueError(f"bias delta must lie in [0, 1/2], got {self.delta}")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(f"biased-cpuf:{self.seed}".encode()).hexdigest()[:16]

    def eval(self, x: str) -> str:
        _check_bitstring(x, self.n, "challenge")
        return bits_to_str(self.eval_many(np.array([int(x, 2)], dtype=np.uint64))[0])

    def eval_many(self, challenges) -> np.ndarray:
        """Responses for an array of integer challenges, shape ``(len, m)``."""
        return response_bits(np.uint64(self.seed), challenges, self.m, self.delta)


def cpuf_eval(puf: BiasedCpuf, x: str) -> str:
    return puf.eval(x)


def random_challenges(rng, n: int, size: int) -> np.ndarray:
    raw = rng.integers(0, 2**64, size=size, dtype=np.uint64)
    if n < 64:
        raw &= np.uint64((1 << n) - 1)
    return raw


def estimate_p_randomness(puf: BiasedCpuf, sample_count: int, rng) -> float:
    """Empirical per-bit p-randomness: majority-value frequency over sampled challenges.

    Bits are identically distributed in this model, so all positions are pooled.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    bits = puf.eval_many(random_challenges(rng, puf.n, sample_count))
    zeros = 1.0 - bits.mean()
    return float(max(zeros, 1.0 - zeros))


@dataclass
class CrpDatabase:
    """Verifier-side challenge/response table for one device."""

    n: int
    m: int
    delta: float
    device_fingerprint: str
    entries: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for x, y in self.entries:
            _check_bitstring(x, self.n, "challenge")
            _check_bitstring(y, self.m, "response")
            if x in seen:
                raise ValueError(f"duplicate challenge {x}")
            seen.add(x)

    def __len__(self) -> int:
        return len(self.entries)

    def response(self, x: str) -> str:
        for cx, y in self.entries:
            if cx == x:
                return y
        raise KeyError(x)

    def remove(self, x: str) -> None:
        self.entries = [(cx, y) for cx, y in self.entries if cx != x]

    def matches(self, puf: BiasedCpuf) -> bool:
        return (puf.fingerprint, puf.n, puf.m) == (self.device_fingerprint, self.n, self.m)

    @classmethod
    def from_challenges(cls, puf: BiasedCpuf, challenges, evaluate=None) -> "CrpDatabase":
        evaluate = evaluate or puf.eval
        xs = [c if isinstance(c, str) else int_to_bits(c, puf.n) for c in challenges]
        return cls(puf.n, puf.m, puf.delta, puf.fingerprint, [(x, evaluate(x)) for x in xs])

    def to_jsonl(self, path) -> None:
        hx = (self.n + 3) // 4
        hy = (self.m + 3) // 4
        lines = [
            json.dumps(
                {"n": self.n, "m": self.m, "delta": self.delta, "device_fingerprint": self.device_fingerprint}
            )
        ]
        for x, y in self.entries:
            lines.append(json.dumps({"challenge": format(int(x, 2), f"0{hx}x"), "response": format(int(y, 2), f"0{hy}x")}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "CrpDatabase":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"{path}: empty CRP file")
        head = json.loads(lines[0])
        n, m = int(head["n"]), int(head["m"])
        entries = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            entries.append((int_to_bits(int(rec["challenge"], 16), n), int_to_bits(int(rec["response"], 16), m)))
        return cls(n, m, float(head["delta"]), head["device_fingerprint"], entries)


def build_crp_database(puf: BiasedCpuf, d: int, rng, evaluate=None) -> CrpDatabase:
    """``d`` distinct uniformly random challenges with their responses.

    ``evaluate`` overrides how responses are obtained (e.g. a HEPUF in mode 0).
    """
    if d < 0:
        raise ValueError("database size must be non-negative")
    space = 1 << puf.n
    if d > space:
        raise ValueError(f"cannot draw {d} distinct challenges from a space of {space}")
    if d * 2 > space:
        chosen = rng.permutation(space)[:d].tolist()
    else:
        seen: dict[int, None] = {}
        while len(seen) < d:
            for c in random_challenges(rng, puf.n, d - len(seen)).tolist():
                seen.setdefault(c)
        chosen = list(seen)
    return CrpDatabase.from_challenges(puf, chosen, evaluate)


def draw_challenge(db: CrpDatabase, rng) -> tuple[str, str]:
    if not db.entries:
        raise EmptyDatabaseError("CRP database is empty")
    return db.entries[int(rng.integers(len(db.entries)))]
