import math

import pytest

from hybrid_auth.adversaries import StrategyParams
from hybrid_auth.montecarlo import (
    Counts,
    Experiment,
    analytic_bit_accept,
    analytic_round_accept,
    chunks,
    run_experiment,
    run_faithful_chunk,
    trial_inputs,
)
from hybrid_auth.protocol import SourceMode, SourceModel, replay
from hybrid_auth.quantum import BellKind

from .conftest import within_sigma

PURIFY = SourceModel(0.05, SourceMode.ADVERSARIAL_PURIFICATION)

CONFIGS = [
    Experiment("offline", 4, 0.25),
    Experiment("offline", 2, 0.25, attack="classical-guess"),
    Experiment("offline", 1, 0.25, source=SourceModel(0.2, SourceMode.MIXED_NOISE, ((BellKind.PHI_MINUS, 1.0),))),
    Experiment("offline", 1, 0.25, attack="purification", source=PURIFY),
    Experiment("online", 4, 0.25),
    Experiment("online", 1, 0.1, attack="optimal-forger"),
    Experiment("online", 1, 0.3, attack="helstrom-adaptive"),
    Experiment("online", 1, 0.25, attack="grid", params=StrategyParams(0.3, 0.6, -0.1, -0.8, 0.5)),
]


def ids(exp):
    return f"{exp.protocol}-{exp.attack}-{exp.source.mode.value}"


class TestExperiment:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(protocol="hybrid", bits=1, delta=0.1),
            dict(protocol="offline", bits=0, delta=0.1),
            dict(protocol="offline", bits=1, delta=0.7),
            dict(protocol="offline", bits=1, delta=0.1, n=65),
            dict(protocol="offline", bits=1, delta=0.1, attack="optimal-forger"),
            dict(protocol="online", bits=1, delta=0.1, attack="classical-guess"),
            dict(protocol="offline", bits=1, delta=0.1, attack="purification"),
            dict(protocol="online", bits=1, delta=0.1, attack="grid"),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            Experiment(**kwargs)

    def test_response_bits(self):
        assert Experiment("offline", 5, 0.1).response_bits == 5
        assert Experiment("online", 5, 0.1).response_bits == 10

    def test_counts_add(self):
        assert Counts(1, 2, 3, 4) + Counts(1, 1, 1, 1) == Counts(2, 3, 4, 5)


class TestSeeding:
    def test_inputs_independent_of_chunking(self):
        exp = Experiment("online", 2, 0.2)
        seeds, xs = trial_inputs(exp, 9, 0, 10)
        s2, x2 = trial_inputs(exp, 9, 4, 10)
        assert list(seeds[4:]) == list(s2) and list(xs[4:]) == list(x2)

    def test_challenge_width(self):
        _, xs = trial_inputs(Experiment("offline", 1, 0.0, n=8), 3, 0, 1000)
        assert int(xs.max()) < 256

    def test_chunks(self):
        assert chunks(10, 4) == [(0, 0, 4), (1, 4, 8), (2, 8, 10)]


class TestAnalytic:
    def test_reference_values(self):
        assert analytic_bit_accept(Experiment("offline", 1, 0.25)) == 1.0
        assert analytic_round_accept(Experiment("offline", 20, 0.25, attack="classical-guess")) == 2.0**-20
        assert analytic_bit_accept(Experiment("online", 1, 0.25, attack="optimal-forger")) == pytest.approx(0.697642, abs=1e-6)
        assert analytic_bit_accept(Experiment("online", 1, 0.0)) == 1.0


class TestEngines:
    @pytest.mark.parametrize("exp", CONFIGS, ids=ids)
    def test_batch_matches_analytic(self, exp):
        n = 200_000
        c = run_experiment(exp, n, 11)
        assert within_sigma(c.accepts / n, analytic_round_accept(exp), n)
        assert within_sigma(c.bit_passes / c.bit_total, analytic_bit_accept(exp), c.bit_total)

    @pytest.mark.parametrize("exp", CONFIGS, ids=ids)
    def test_faithful_matches_analytic(self, exp):
        n = 1500
        c = run_experiment(exp, n, 12, engine="faithful")
        assert within_sigma(c.accepts / n, analytic_round_accept(exp), n)

    @pytest.mark.parametrize("exp", CONFIGS[:2] + CONFIGS[4:6], ids=ids)
    def test_engines_agree(self, exp):
        # Two-sample comparison at 5 combined standard errors.
        nb, nf = 100_000, 1500
        b = run_experiment(exp, nb, 5).accepts / nb
        f = run_experiment(exp, nf, 6, engine="faithful").accepts / nf
        p = analytic_round_accept(exp)
        se = math.sqrt(p * (1 - p) * (1 / nb + 1 / nf))
        assert abs(b - f) <= 5 * se + 1e-12

    @pytest.mark.parametrize("engine", ["batch", "faithful"])
    def test_deterministic(self, engine):
        exp = Experiment("online", 1, 0.25, attack="optimal-forger")
        n = 20_000 if engine == "batch" else 300
        assert run_experiment(exp, n, 3, engine=engine) == run_experiment(exp, n, 3, engine=engine)
        assert run_experiment(exp, n, 3, engine=engine) != run_experiment(exp, n, 4, engine=engine)

    def test_parallel_matches_serial(self):
        exp = Experiment("offline", 3, 0.1, attack="classical-guess")
        serial = run_experiment(exp, 50_000, 8, jobs=1, chunk_size=10_000)
        pooled = run_experiment(exp, 50_000, 8, jobs=2, chunk_size=10_000)
        assert serial == pooled

    def test_faithful_chunking_invariant(self):
        exp = Experiment("online", 2, 0.25, attack="optimal-forger")
        whole = run_experiment(exp, 200, 1, engine="faithful")
        split = run_experiment(exp, 200, 1, engine="faithful", chunk_size=64)
        assert whole == split

    def test_faithful_transcripts_replay(self):
        exp = Experiment("online", 2, 0.25, attack="helstrom-adaptive")
        counts, kept = run_faithful_chunk(exp, 2, 0, 20, keep_transcripts=True)
        assert len(kept) == 20 == counts.trials
        assert all(all(replay(t).values()) for t in kept)
        assert sum(t.decision.accepted for t in kept) == counts.accepts

    def test_bad_arguments(self):
        exp = Experiment("offline", 1, 0.0)
        with pytest.raises(ValueError):
            run_experiment(exp, 0, 1)
        with pytest.raises(ValueError):
            run_experiment(exp, 10, 1, engine="exact")
