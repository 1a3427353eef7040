"""Many-trial estimation of acceptance rates.

Every trial gets a fresh device and challenge derived from
``child_seed(master_seed, trial)``:

    device seed = stream(child, 0)
    challenge   = stream(child, 1) masked to n bits

so the per-trial PUF response is the same in both engines. The ``faithful``
engine then plays one full round through the protocol state machines; the
``batch`` engine samples the same round from precomputed Born-rule tables
with numpy, one chunk of trials at a time. Trials are split into fixed
chunks, so results do not depend on how many worker processes are used.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import adversaries as adv
from .analysis import pr_win_closed_form, pr_win_objective
from .hepuf import DEFAULT_STATE_SET, HepufDevice
from .mixing import child_seed, stream
from .protocol import SourceMode, SourceModel, honest_bit_accept_prob, run_offline_round, run_online_round
from .puf import BiasedCpuf, CrpDatabase, int_to_bits, response_bits
from .quantum import BellKind, MeasBasis, Subsystem, bell_state, conditional_state, outcome_probabilities, single_probabilities

DEFAULT_CHUNK = 1 << 16
ENGINES = ("batch", "faithful")


@dataclass(frozen=True)
class Experiment:
    """Protocol-level settings shared by every trial of a run."""

    protocol: str
    bits: int
    delta: float
    n: int = 32
    attack: str = "none"
    source: SourceModel = field(default_factory=SourceModel)
    params: adv.StrategyParams | None = None
    state_set: tuple[BellKind, BellKind] = DEFAULT_STATE_SET

    def __post_init__(self):
        if self.protocol not in ("offline", "online"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.bits < 1:
            raise ValueError("bits must be at least 1")
        if not 0.0 <= self.delta <= 0.5:
            raise ValueError("delta must lie in [0, 1/2]")
        if not 1 <= self.n <= 64:
            raise ValueError("challenge length must be in [1, 64]")
        allowed = adv.OFFLINE_ATTACKS if self.protocol == "offline" else adv.ONLINE_ATTACKS
        if self.attack not in allowed:
            raise ValueError(f"attack {self.attack!r} does not apply to the {self.protocol} protocol")
        if self.attack == "purification" and self.source.mode is not SourceMode.ADVERSARIAL_PURIFICATION:
            raise ValueError("the purification attack needs the purification source")
        if self.attack == "grid" and self.params is None:
            raise ValueError("attack 'grid' needs strategy parameters")

    @property
    def response_bits(self) -> int:
        return self.bits if self.protocol == "offline" else 2 * self.bits

    def describe(self) -> dict:
        return {
            "protocol": self.protocol,
            "bits": self.bits,
            "delta": self.delta,
            "n": self.n,
            "attack": self.attack,
            "source": self.source.describe(),
            "params": None if self.params is None else self.params.as_dict(),
            "state_set": [s.value for s in self.state_set],
        }


@dataclass
class Counts:
    accepts: int = 0
    trials: int = 0
    bit_passes: int = 0
    bit_total: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            self.accepts + other.accepts,
            self.trials + other.trials,
            self.bit_passes + other.bit_passes,
            self.bit_total + other.bit_total,
        )


def trial_inputs(exp: Experiment, master_seed: int, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    """Device seeds and integer challenges for trials ``start .. stop-1``."""
    child = child_seed(master_seed, np.arange(start, stop, dtype=np.uint64))
    seeds = stream(child, 0)
    challenges = stream(child, 1)
    if exp.n < 64:
        challenges &= np.uint64((1 << exp.n) - 1)
    return seeds, challenges


def analytic_bit_accept(exp: Experiment) -> float:
    """Exact per-bit acceptance for the configured attack."""
    if exp.protocol == "offline":
        if exp.attack == "classical-guess":
            return 0.5
        if exp.attack == "purification":
            eps, chi = exp.source.epsilon, exp.source.chi
            return (0.5 + exp.delta) * adv.purification_success(eps, 0, chi) + (0.5 - exp.delta) * adv.purification_success(eps, 1, chi)
        return honest_bit_accept_prob(exp.source, exp.delta)
    if exp.attack == "none":
        return 1.0
    if exp.attack == "grid":
        return pr_win_objective(exp.delta, exp.params)
    return pr_win_closed_form(exp.delta)


def analytic_round_accept(exp: Experiment) -> float:
    return analytic_bit_accept(exp) ** exp.bits


# Batch engine tables. Entries are Pr[outcome 0]; outcome 0 is drawn iff u < p.


@lru_cache(maxsize=64)
def _offline_tables(source: SourceModel) -> tuple[np.ndarray, np.ndarray]:
    rho = source.pair_state()
    pa0 = np.array([outcome_probabilities(rho, Subsystem.P, MeasBasis(c))[0] for c in (0, 1)])
    pv0 = np.full((2, 2), 0.5)
    for c in (0, 1):
        for a in (0, 1):
            if (pa0[c] if a == 0 else 1 - pa0[c]) > 0:
                cond = conditional_state(rho, Subsystem.P, MeasBasis(c), a)
                pv0[c, a] = single_probabilities(cond, MeasBasis(c))[0]
    return pa0, pv0


@lru_cache(maxsize=64)
def _purification_cdf(epsilon: float, chi: BellKind) -> np.ndarray:
    """Cumulative joint (guess, V outcome) distribution per basis, shape (2, 4)."""
    return np.stack([np.cumsum(adv.purification_joint_table(epsilon, c, chi).ravel()) for c in (0, 1)])


@lru_cache(maxsize=64)
def _online_tables(state_set: tuple[BellKind, BellKind]):
    """``pb0[s, c]`` for P's outcome and ``pa0[s, c, b]`` for V's, given y2 bit s and basis c."""
    pb0 = np.zeros((2, 2))
    pa0 = np.full((2, 2, 2), 0.5)
    conds = {}
    for s in (0, 1):
        rho = bell_state(state_set[s])
        for c in (0, 1):
            pb0[s, c] = outcome_probabilities(rho, Subsystem.P, MeasBasis(c))[0]
            for b in (0, 1):
                cond = conditional_state(rho, Subsystem.P, MeasBasis(c), b)
                conds[s, c, b] = cond
                pa0[s, c, b] = single_probabilities(cond, MeasBasis(c))[0]
    return pb0, pa0, conds


def _forged_accept_table(states) -> np.ndarray:
    return np.array([[single_probabilities(rho, MeasBasis(c))[0] for c in (0, 1)] for rho in states])


@lru_cache(maxsize=64)
def _helstrom_tables(delta: float, state_set: tuple[BellKind, BellKind]):
    """``pg0[s, c, b]`` = Pr[guess y1 = 0] for the captured state, plus the forged-state table."""
    _, _, conds = _online_tables(state_set)
    projs = adv._helstrom_y1_projectors(delta)
    pg0 = np.zeros((2, 2, 2))
    for (s, c, b), rho in conds.items():
        pg0[s, c, b] = float(np.real(np.trace(projs[b] @ rho.matrix)))
    forged = (adv.optimal_forgery(delta).state, adv.swapped_forgery(delta).state)
    return np.clip(pg0, 0.0, 1.0), _forged_accept_table(forged)


def _bit(rng, p0) -> np.ndarray:
    return (rng.random(np.shape(p0)) >= p0).astype(np.intp)


def batch_bit_passes(exp: Experiment, y: np.ndarray, rng) -> np.ndarray:
    """Per-bit pass flags, shape ``(trials, bits)``, for responses ``y``."""
    y = y.astype(np.intp)
    if exp.protocol == "offline":
        if exp.attack == "purification":
            cdf = _purification_cdf(exp.source.epsilon, exp.source.chi)[y]
            u = rng.random(y.shape)
            idx = np.minimum((u[..., None] >= cdf).sum(axis=-1), 3)
            return (idx // 2) == (idx % 2)
        pa0, pv0 = _offline_tables(exp.source)
        a = _bit(rng, pa0[y])
        v = _bit(rng, pv0[y, a])
        sent = rng.integers(0, 2, size=y.shape) if exp.attack == "classical-guess" else a
        return sent == v

    k = exp.bits
    y1, y2 = y[:, :k], y[:, k:]
    if exp.attack == "none":
        pb0, pa0, _ = _online_tables(exp.state_set)
        b = _bit(rng, pb0[y2, y1])
        a = _bit(rng, pa0[y2, y1, b])
        return (a ^ b) == y2
    if exp.attack == "helstrom-adaptive":
        pb0, _, _ = _online_tables(exp.state_set)
        pg0, fa0 = _helstrom_tables(exp.delta, exp.state_set)
        b_query = _bit(rng, pb0[y2, y1])
        g = _bit(rng, pg0[y2, y1, b_query])
        a = _bit(rng, fa0[g, y1])
        return a == y2
    params = adv.optimal_strategy(exp.delta) if exp.attack == "optimal-forger" else exp.params
    fa0 = _forged_accept_table(params.states())
    claimed = _bit(rng, np.full(y1.shape, params.q0))
    a = _bit(rng, fa0[claimed, y1])
    return (a ^ claimed) == y2


def run_batch_chunk(exp: Experiment, master_seed: int, chunk_index: int, start: int, stop: int) -> Counts:
    seeds, challenges = trial_inputs(exp, master_seed, start, stop)
    y = response_bits(seeds, challenges, exp.response_bits, exp.delta)
    rng = np.random.default_rng([master_seed, chunk_index])
    passes = batch_bit_passes(exp, y, rng)
    return Counts(int(passes.all(axis=1).sum()), stop - start, int(passes.sum()), passes.size)


def run_faithful_trial(exp: Experiment, master_seed: int, trial: int):
    """One round through the protocol engine; returns its transcript."""
    seeds, challenges = trial_inputs(exp, master_seed, trial, trial + 1)
    rng = np.random.default_rng(int(child_seed(master_seed, trial)[0]))
    x = int_to_bits(int(challenges[0]), exp.n)
    puf = BiasedCpuf(exp.n, exp.response_bits, exp.delta, int(seeds[0]))
    adversary = adv.make_adversary(exp.attack, exp.delta, exp.params, exp.source.epsilon, exp.source.chi)
    if exp.protocol == "offline":
        db = CrpDatabase.from_challenges(puf, [x])
        return run_offline_round(db, puf, exp.source, adversary, rng, round_id=trial)
    dev = HepufDevice(puf, exp.state_set)
    db = CrpDatabase.from_challenges(puf, [x], evaluate=dev.eval_mode0)
    dev.set_mode(1)
    return run_online_round(db, dev, adversary, rng, round_id=trial)


def run_faithful_chunk(exp: Experiment, master_seed: int, start: int, stop: int, keep_transcripts: bool = False):
    counts = Counts()
    kept = []
    for t in range(start, stop):
        tr = run_faithful_trial(exp, master_seed, t)
        failing = len(tr.decision.failing_bit_indices)
        counts = counts + Counts(int(tr.decision.accepted), 1, exp.bits - failing, exp.bits)
        if keep_transcripts:
            kept.append(tr)
    return counts, kept


def _chunk_job(args) -> Counts:
    exp, master_seed, idx, start, stop, engine = args
    if engine == "batch":
        return run_batch_chunk(exp, master_seed, idx, start, stop)
    return run_faithful_chunk(exp, master_seed, start, stop)[0]


def chunks(trials: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int, int]]:
    return [(i, s, min(s + chunk_size, trials)) for i, s in enumerate(range(0, trials, chunk_size))]


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_experiment(
    exp: Experiment,
    trials: int,
    master_seed: int,
    *,
    engine: str = "batch",
    jobs: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> Counts:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    tasks = [(exp, master_seed, i, s, e, engine) for i, s, e in chunks(trials, chunk_size)]
    if jobs <= 1 or len(tasks) == 1:
        results = map(_chunk_job, tasks)
        total = Counts()
        for c in results:
            total = total + c
        return total
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        total = Counts()
        for c in pool.map(_chunk_job, tasks):
            total = total + c
        return total
