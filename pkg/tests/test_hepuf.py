import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_auth.hepuf import (
    ALTERNATE_STATE_SET,
    CalledAfterLock,
    HepufDevice,
    NothingRetained,
    RelockAttempt,
    WrongMode,
    eval_mode0,
    eval_mode1,
    measure_mode2,
    set_mode,
    split_response,
)
from hybrid_auth.puf import BiasedCpuf, random_challenges
from hybrid_auth.quantum import BellKind, MeasBasis, Subsystem, bell_state, trace_distance

from .conftest import within_sigma

HALF_I = np.eye(2) / 2


def device(delta=0.25, m=8, seed=11, **kw):
    return HepufDevice(BiasedCpuf(16, m, delta, seed), **kw)


def find_challenge(puf, predicate, rng):
    for x in random_challenges(rng, puf.n, 10_000):
        s = format(int(x), f"0{puf.n}b")
        if predicate(puf.eval(s)):
            return s
    raise AssertionError("no suitable challenge found")


class TestModes:
    def test_mode0_passthrough(self):
        dev = device()
        x = "0" * 16
        assert eval_mode0(dev, x) == dev.cpuf.eval(x)
        assert eval_mode0(device(), x) == eval_mode0(device(), x)

    def test_lock_after_leaving_mode0(self):
        dev = device()
        set_mode(dev, 1)
        assert dev.mode0_locked
        with pytest.raises(CalledAfterLock):
            eval_mode0(dev, "0" * 16)
        with pytest.raises(RelockAttempt):
            set_mode(dev, 0)

    def test_mode_transitions(self):
        dev = device()
        set_mode(dev, 1)
        set_mode(dev, 2)
        set_mode(dev, 1)
        assert dev.mode == 1

    def test_wrong_modes(self, rng):
        dev = device()
        with pytest.raises(WrongMode):
            eval_mode1(dev, "0" * 16)
        set_mode(dev, 2)
        with pytest.raises(NothingRetained):
            measure_mode2(dev, rng)
        set_mode(dev, 1)
        with pytest.raises(WrongMode):
            measure_mode2(dev, rng)

    def test_odd_response_rejected(self):
        with pytest.raises(ValueError):
            HepufDevice(BiasedCpuf(8, 7, 0.1, 1))

    @settings(max_examples=100)
    @given(st.lists(st.sampled_from([0, 1, 2]), max_size=12))
    def test_lock_is_irreversible(self, calls):
        dev = device()
        left = False
        for new in calls:
            if new == 0 and left:
                with pytest.raises(RelockAttempt):
                    dev.set_mode(0)
                continue
            dev.set_mode(new)
            left |= new != 0
            assert dev.mode0_locked == left
        if left:
            with pytest.raises(CalledAfterLock):
                dev.eval_mode0("0" * 16)


class TestEncoding:
    def test_split(self):
        assert split_response("110010") == ("110", "010")
        with pytest.raises(ValueError):
            split_response("101")

    @pytest.mark.parametrize("target,kind", [("0000", BellKind.PHI_PLUS), ("1111", BellKind.PSI_MINUS)])
    def test_uniform_y2(self, target, kind, rng):
        dev = device(delta=0.3)
        x = find_challenge(dev.cpuf, lambda y: y[4:] == target, rng)
        dev.set_mode(1)
        reduced = eval_mode1(dev, x)
        assert len(reduced) == dev.k == 4
        assert all(r.allclose(HALF_I) for r in reduced)
        assert all(pair.state.allclose(bell_state(kind)) for _, pair in dev.retained)
        assert dev.basis_bits == dev.cpuf.eval(x)[:4]

    def test_alternate_state_set(self, rng):
        dev = device(state_set=ALTERNATE_STATE_SET)
        dev.set_mode(1)
        x = "0" * 16
        eval_mode1(dev, x)
        y2 = split_response(dev.cpuf.eval(x))[1]
        for (_, pair), bit in zip(dev.retained, y2):
            assert pair.state.allclose(bell_state(ALTERNATE_STATE_SET[int(bit)]))

    @pytest.mark.parametrize("delta", [0.0, 0.25, 0.5])
    def test_reduced_states_locally_indistinguishable(self, delta, rng):
        dev = device(delta=delta, m=16)
        dev.set_mode(1)
        for x in random_challenges(rng, 16, 200):
            for r in eval_mode1(dev, format(int(x), "016b")):
                assert trace_distance(r, HALF_I) <= 1e-12


class TestMeasurement:
    @pytest.mark.parametrize("y1", [0, 1])
    @pytest.mark.parametrize("y2", [0, 1])
    def test_joint_correlations(self, y1, y2, rng):
        dev = device(m=2, delta=0.0)
        x = find_challenge(dev.cpuf, lambda y: y == f"{y1}{y2}", rng)
        for _ in range(50):
            dev.set_mode(1)
            eval_mode1(dev, x)
            v = dev.v_qubits[0]
            dev.set_mode(2)
            b = int(measure_mode2(dev, rng))
            a = v.measure(MeasBasis(y1), rng)
            assert a ^ b == y2
            assert dev.retained == []

    def test_psi_minus_hadamard_collapse(self, rng):
        dev = device(m=2, delta=0.0)
        x = find_challenge(dev.cpuf, lambda y: y == "11", rng)
        while True:
            dev.set_mode(1)
            eval_mode1(dev, x)
            v = dev.v_qubits[0]
            dev.set_mode(2)
            if measure_mode2(dev, rng) == "0":
                break
        minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
        assert v.state().allclose(minus)

    def test_phi_plus_z_collapse(self, rng):
        dev = device(m=2, delta=0.0)
        x = find_challenge(dev.cpuf, lambda y: y == "00", rng)
        dev.set_mode(1)
        eval_mode1(dev, x)
        v = dev.v_qubits[0]
        dev.set_mode(2)
        b = int(measure_mode2(dev, rng))
        assert v.state().allclose(np.diag([1 - b, b]))

    def test_outcomes_unbiased(self, rng):
        dev = device(m=64, delta=0.25)
        dev.set_mode(1)
        zeros = total = 0
        for x in random_challenges(rng, 16, 1600):
            dev.set_mode(1)
            eval_mode1(dev, format(int(x), "016b"))
            dev.set_mode(2)
            b = measure_mode2(dev, rng)
            zeros += b.count("0")
            total += len(b)
        assert within_sigma(zeros / total, 0.5, total)
        assert abs(zeros / total - 0.5) <= 0.005

    def test_retained_halves_stay_with_device(self, rng):
        dev = device()
        dev.set_mode(1)
        eval_mode1(dev, "1" * 16)
        assert all(pair.reduced(Subsystem.P).allclose(HALF_I) for _, pair in dev.retained)
