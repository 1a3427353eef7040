import json

import numpy as np
import pytest

from hybrid_auth.adversaries import ClassicalGuesser, OptimalForger
from hybrid_auth.hepuf import HepufDevice, WrongMode
from hybrid_auth.protocol import (
    Adversary,
    ConfigurationError,
    Decision,
    Direction,
    SourceMode,
    SourceModel,
    Transcript,
    distribute_pairs,
    honest_bit_accept_prob,
    read_transcripts,
    replay,
    run_offline_round,
    run_online_round,
    verify_offline,
    verify_online,
    write_transcripts,
)
from hybrid_auth.puf import BiasedCpuf, CrpDatabase, build_crp_database
from hybrid_auth.quantum import BellKind, DensityMatrix, Subsystem, bell_state, fidelity

from .conftest import within_sigma


def offline_setup(rng, m=8, delta=0.25, d=20, seed=5):
    puf = BiasedCpuf(24, m, delta, seed)
    return puf, build_crp_database(puf, d, rng)


def online_setup(rng, k=4, delta=0.25, d=20, seed=5):
    dev = HepufDevice(BiasedCpuf(24, 2 * k, delta, seed))
    db = build_crp_database(dev.cpuf, d, rng, evaluate=dev.eval_mode0)
    dev.set_mode(1)
    return dev, db


class TestVerify:
    def test_offline_examples(self):
        assert verify_offline("0101", "0101") == Decision(True, ())
        assert verify_offline("0101", "0100") == Decision(False, (3,))
        assert verify_offline("", "").accepted

    def test_offline_length_mismatch(self):
        with pytest.raises(ValueError):
            verify_offline("01", "0")

    @pytest.mark.parametrize("a,b,y2,ok", [("0", "0", "0", True), ("0", "1", "1", True), ("0", "1", "0", False), ("1", "1", "1", False)])
    def test_online_rule(self, a, b, y2, ok):
        assert verify_online(a, b, y2).accepted is ok

    def test_online_length_mismatch(self):
        with pytest.raises(ValueError):
            verify_online("01", "01", "0")

    def test_accepted_iff_no_failures(self):
        for a in ("000", "010", "111"):
            d = verify_offline(a, "010")
            assert d.accepted == (len(d.failing_bit_indices) == 0)


class TestSource:
    def test_perfect(self, rng):
        pairs = distribute_pairs(SourceModel(), 3, rng)
        assert all(p.state.allclose(bell_state(BellKind.PHI_PLUS)) for p in pairs)

    def test_mixed_fidelity(self, rng):
        src = SourceModel(0.05, SourceMode.MIXED_NOISE)
        for p in distribute_pairs(src, 2, rng):
            assert fidelity(p.state, bell_state(BellKind.PHI_PLUS)) == pytest.approx(0.95, abs=1e-9)

    def test_purification_zero_noise(self, rng):
        (pair,) = distribute_pairs(SourceModel(0.0, SourceMode.ADVERSARIAL_PURIFICATION), 1, rng)
        assert pair.state.allclose(bell_state(BellKind.PHI_PLUS))
        assert pair.register_state().allclose(np.diag([1, 0]))

    @pytest.mark.parametrize("mode", list(SourceMode))
    @pytest.mark.parametrize("eps", [0.0, 0.01, 0.3, 1.0])
    def test_fidelity_budget(self, mode, eps, rng):
        src = SourceModel(eps, mode)
        for p in distribute_pairs(src, 2, rng):
            assert fidelity(p.state, bell_state(BellKind.PHI_PLUS)) >= 1 - eps - 1e-9

    @pytest.mark.parametrize("eps", [-0.1, 1.5])
    def test_epsilon_range(self, eps):
        with pytest.raises(ValueError):
            SourceModel(eps)

    def test_noise_must_be_orthogonal(self):
        with pytest.raises(ValueError):
            SourceModel(0.1, SourceMode.MIXED_NOISE, ((BellKind.PHI_PLUS, 1.0),))


class TestOfflineRound:
    @pytest.mark.parametrize("m", [1, 8, 64])
    @pytest.mark.parametrize("delta", [0.0, 0.25])
    def test_honest_always_accepts(self, m, delta, rng):
        puf, db = offline_setup(rng, m=m, delta=delta, d=30)
        for r in range(30):
            t = run_offline_round(db, puf, SourceModel(), rng=rng, round_id=r)
            assert t.decision.accepted
        assert len(db) == 0

    def test_consume_flag(self, rng):
        puf, db = offline_setup(rng, d=3)
        run_offline_round(db, puf, SourceModel(), rng=rng, consume=False)
        assert len(db) == 3

    def test_classical_guess_half(self, rng):
        puf = BiasedCpuf(24, 1, 0.25, 5)
        n = 4000
        db = build_crp_database(puf, n, rng)
        acc = sum(run_offline_round(db, puf, SourceModel(), ClassicalGuesser(), rng).decision.accepted for _ in range(n))
        assert within_sigma(acc / n, 0.5, n)

    def test_mismatched_device(self, rng):
        _, db = offline_setup(rng)
        with pytest.raises(ConfigurationError):
            run_offline_round(db, BiasedCpuf(24, 8, 0.25, 6), SourceModel(), rng=rng)

    def test_pair_count_mismatch(self, rng):
        puf, db = offline_setup(rng, m=4)
        pairs = distribute_pairs(SourceModel(), 3, rng)
        with pytest.raises(ConfigurationError):
            run_offline_round(db, puf, SourceModel(), rng=rng, pairs=pairs)

    def test_empty_database(self, rng):
        puf = BiasedCpuf(24, 4, 0.1, 1)
        with pytest.raises(ConfigurationError):
            run_offline_round(CrpDatabase.from_challenges(puf, []), puf, SourceModel(), rng=rng)

    def test_response_never_on_channel(self, rng):
        puf, db = offline_setup(rng, m=16, d=10)
        entries = dict(db.entries)
        for _ in range(10):
            t = run_offline_round(db, puf, SourceModel(), rng=rng)
            y = entries[t.verifier["challenge"]]
            labels = {(e.direction, e.label) for e in t.classical()}
            assert labels == {(Direction.V_TO_P, "challenge"), (Direction.P_TO_V, "outcomes")}
            assert y not in t.to_lines()[1:-2] or all(e.payload != y or e.label == "outcomes" for e in t.classical())
            quantum = [e for e in t.events if e.is_quantum]
            assert all(e.direction in (Direction.SOURCE_TO_V, Direction.SOURCE_TO_P) for e in quantum)
            assert all(replay(t).values())

    def test_wrong_length_reply_rejects(self, rng):
        class Short(Adversary):
            def on_response(self, bits, ctx):
                return bits[:-1]

        puf, db = offline_setup(rng, m=4)
        t = run_offline_round(db, puf, SourceModel(), Short(), rng)
        assert not t.decision.accepted

    @pytest.mark.parametrize("eps,kind", [(0.1, BellKind.PSI_MINUS), (0.2, BellKind.PHI_MINUS), (0.2, BellKind.PSI_PLUS)])
    def test_honest_noise_matches_prediction(self, eps, kind, rng):
        delta = 0.25
        src = SourceModel(eps, SourceMode.MIXED_NOISE, ((kind, 1.0),))
        puf = BiasedCpuf(24, 1, delta, 9)
        n = 4000
        db = build_crp_database(puf, n, rng)
        acc = sum(run_offline_round(db, puf, src, rng=rng).decision.accepted for _ in range(n))
        assert within_sigma(acc / n, honest_bit_accept_prob(src, delta), n)

    def test_noise_prediction_closed_form(self):
        # Psi- disagrees in both bases; Phi- only in X; Psi+ only in Z.
        d, eps = 0.25, 0.1
        mk = lambda kind: SourceModel(eps, SourceMode.MIXED_NOISE, ((kind, 1.0),))
        assert honest_bit_accept_prob(mk(BellKind.PSI_MINUS), d) == pytest.approx(1 - eps, abs=1e-12)
        assert honest_bit_accept_prob(mk(BellKind.PHI_MINUS), d) == pytest.approx(1 - eps * (0.5 - d), abs=1e-12)
        assert honest_bit_accept_prob(mk(BellKind.PSI_PLUS), d) == pytest.approx(1 - eps * (0.5 + d), abs=1e-12)


class TestOnlineRound:
    @pytest.mark.parametrize("k", [1, 4, 16])
    @pytest.mark.parametrize("delta", [0.0, 0.25, 0.5])
    def test_honest_always_accepts(self, k, delta, rng):
        dev, db = online_setup(rng, k=k, delta=delta)
        for r in range(20):
            assert run_online_round(db, dev, rng=rng, round_id=r).decision.accepted
            assert dev.mode == 1

    def test_requires_mode1(self, rng):
        dev = HepufDevice(BiasedCpuf(24, 4, 0.1, 1))
        db = build_crp_database(dev.cpuf, 3, rng, evaluate=dev.eval_mode0)
        with pytest.raises(WrongMode):
            run_online_round(db, dev, rng=rng)

    def test_channel_contents(self, rng):
        dev, db = online_setup(rng, k=3)
        t = run_online_round(db, dev, rng=rng)
        quantum = [e for e in t.events if e.is_quantum]
        assert len(quantum) == 3
        assert all(e.direction is Direction.P_TO_V and e.payload.allclose(np.eye(2) / 2) for e in quantum)
        assert [e.label for e in t.classical()] == ["challenge", "outcomes"]
        assert all(replay(t).values())

    def test_forger_events_marked(self, rng):
        dev, db = online_setup(rng, k=2)
        t = run_online_round(db, dev, OptimalForger(0.25), rng)
        forged = [e for e in t.events if e.origin == "adversary"]
        assert {e.label for e in forged} >= {"v_subsystem"}
        assert all(replay(t).values())

    def test_optimal_forger_rate(self, rng):
        delta = 0.25
        dev, db = online_setup(rng, k=1, delta=delta, d=3000)
        n = 3000
        acc = sum(run_online_round(db, dev, OptimalForger(delta), rng).decision.accepted for _ in range(n))
        assert within_sigma(acc / n, 0.5 + delta * np.sqrt((1 + 4 * delta**2) / 2), n)


class TestTranscriptFile:
    def test_round_trip(self, tmp_path, rng):
        puf, db = offline_setup(rng, m=4)
        dev, odb = online_setup(rng, k=2)
        ts = [run_offline_round(db, puf, SourceModel(), rng=rng, round_id=0), run_online_round(odb, dev, OptimalForger(0.25), rng, round_id=1)]
        path = tmp_path / "t.jsonl"
        write_transcripts(ts, path)
        back = read_transcripts(path)
        assert [t.to_lines() for t in back] == [t.to_lines() for t in ts]
        assert all(all(replay(t).values()) for t in back)

    def test_injected_response_detected(self, tmp_path, rng):
        dev, db = online_setup(rng, k=2)
        t = run_online_round(db, dev, rng=rng)
        y = dev.cpuf.eval(t.verifier["challenge"])
        t.log(Direction.P_TO_V, y, "response")
        assert not replay(t)["channel_discipline"]

    def test_full_response_as_outcomes_detected(self, rng):
        dev, db = online_setup(rng, k=2)
        t = run_online_round(db, dev, rng=rng)
        y = dev.cpuf.eval(t.verifier["challenge"])
        t.log(Direction.P_TO_V, y, "outcomes", origin="adversary")
        assert not replay(t)["channel_discipline"]

    def test_tampered_decision_detected(self, rng):
        puf, db = offline_setup(rng, m=4)
        t = run_offline_round(db, puf, SourceModel(), ClassicalGuesser(), rng)
        t.decision = Decision(not t.decision.accepted, ())
        assert not replay(t)["decision_consistent"]

    def test_misplaced_quantum_detected(self, rng):
        puf, db = offline_setup(rng, m=4)
        t = run_offline_round(db, puf, SourceModel(), rng=rng)
        t.log(Direction.P_TO_V, DensityMatrix.maximally_mixed(), "v_subsystem", 0)
        assert not replay(t)["quantum_placement"]

    def test_missing_decision(self):
        t = Transcript(0, "offline", {"m": 1, "n": 2})
        assert not replay(t)["decision_present"]

    def test_float_format(self, rng):
        dev, db = online_setup(rng, k=1)
        t = run_online_round(db, dev, OptimalForger(0.1), rng)
        idx, line = next((i, ln) for i, ln in enumerate(t.to_lines()) if '"origin":"adversary"' in ln and '"quantum"' in ln)
        event = t.events[idx - 1]
        re = json.loads(line)["payload"]["re"]
        assert re == [float(v) for v in event.payload.matrix.real.ravel()]
        assert len(t.to_lines()) == len(t.events) + 3
