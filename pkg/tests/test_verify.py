import json
import math

import numpy as np
import pytest

from qfb import cq, verify
from qfb.bounds import EnergyConstraint, max_avg_output_entropy, max_output_entropy
from qfb.channels import ChannelMixture, KrausChannel, identity_channel, make_erasure, random_channel
from qfb.cq import CQEnsemble, OneWayLOCC
from qfb.protocol import noiseless_qubit_spec, random_spec, run_mixture_simulation, run_purified
from qfb.sampling import random_pure_state
from qfb.states import PureState, SystemLayout, matrix_entropy, reduced_matrix

BELL = PureState([("A", 2), ("B", 2)], np.array([1, 0, 0, 1]) / math.sqrt(2))


def bell_ensemble(labels=("A", "B")):
    psi = PureState([(labels[0], 2), (labels[1], 2)], BELL.amplitudes)
    return CQEnsemble(("W", "F"), {(0, 0): (1.0, psi)})


class TestLemma1:
    def test_identity_is_tight(self):
        m = OneWayLOCC(((0, np.eye(2), np.eye(2)),))
        s_b, s_cond = verify.lemma1_margin(BELL, m)
        assert s_b - s_cond == pytest.approx(0.0, abs=1e-12)

    def test_projective_measurement(self):
        m = OneWayLOCC(tuple((x, np.eye(2), np.outer(np.eye(2)[x], np.eye(2)[x])) for x in range(2)))
        s_b, s_cond = verify.lemma1_margin(BELL, m)
        assert s_b == pytest.approx(1.0)
        assert s_cond == pytest.approx(0.0, abs=1e-12)

    def test_fleet(self):
        r = verify.check_lemma1(60, 4, 1)
        assert r.trials == 60 and r.violations == 0
        assert r.worst_margin >= -1e-7


class TestLemma2:
    def test_identity_map_margin_zero(self):
        m = OneWayLOCC(((0, np.eye(2), np.eye(2)),))
        assert verify.lemma2_margin(bell_ensemble(), m) == pytest.approx(0.0, abs=1e-12)

    def test_discarding_b(self):
        # V^x = <x| maps B to a trivial system: all of B's entanglement is lost
        m = OneWayLOCC(tuple((x, np.eye(2), np.eye(2)[x][None, :]) for x in range(2)))
        assert verify.lemma2_margin(bell_ensemble(), m) >= 0.0
        assert verify.lemma2_margin(bell_ensemble(), m) == pytest.approx(1.0)

    def test_fleet(self):
        assert verify.check_lemma2(60, 4, 2).violations == 0


class TestLemma3:
    def test_maximally_entangled_identity(self):
        e = bell_ensemble(("A", "B'"))
        omega_b = 1.0
        margin = verify.lemma3_margin(e, lambda key: identity_channel(2))
        # the monotone goes from S(B')=1 to S(BB')=0, an increase of -1
        assert margin == pytest.approx(omega_b + 1.0)

    def test_constant_channel(self):
        reset = KrausChannel(2, 2, [np.outer(np.eye(2)[0], np.eye(2)[j]) for j in range(2)])
        rng = np.random.default_rng(3)
        e = verify.random_cq_pure(SystemLayout.of(("A", 2), ("B'", 2)), rng)
        omega = verify._apply_channel(e, lambda key: reset, "A", "B")
        assert cq.entropy(omega, ["B"]) == pytest.approx(0.0, abs=1e-12)
        increase = cq.monotone(omega, "W", ["F"], ["B", "B'"]) - cq.monotone(e, "W", ["F"], ["B'"])
        assert increase <= 1e-9

    def test_fleet(self):
        assert verify.check_lemma3(60, 4, 3).violations == 0


class TestLemma3Mixture:
    def test_single_branch_matches_lemma3(self):
        rng = np.random.default_rng(7)
        e = verify.random_cq_pure(SystemLayout.of(("A", 2), ("B'", 3)), rng, extra={"Z": 1})
        ch = random_channel(2, 3, 2, rng)
        plain = CQEnsemble(("W", "F"), {k[:2]: v for k, v in e.items()})
        a = verify.lemma3_margin(e, lambda key: ch, ("F", "Z"), ("Z",))
        b = verify.lemma3_margin(plain, lambda key: ch)
        assert a == pytest.approx(b, abs=1e-10)

    def test_erasure_branch_structure(self):
        # S(B|Z) = (1 - p) S(rho_B) + p * 0 for the erasure branches
        mix = make_erasure(2, 0.25)
        rng = np.random.default_rng(8)
        psi = random_pure_state(SystemLayout.of(("A", 2), ("B'", 2)), rng)
        e = CQEnsemble(("W", "F", "Z"), {(0, 0, z): (w, psi) for z, (w, _) in enumerate(mix.components)})
        omega = verify._apply_channel(e, lambda key: mix.channels[key[2]], "A", "B")
        rho_a = reduced_matrix(psi, ["A"])
        expected = 0.75 * matrix_entropy(mix.channels[0](rho_a))
        assert cq.conditional_entropy(omega, ["B"], ["Z"]) == pytest.approx(expected, abs=1e-10)

    def test_fleet(self):
        assert verify.check_lemma3_mixture(40, 4, 4).violations == 0


def test_determinism():
    a = verify.check_lemma1(5, 3, 11).to_json(with_margins=True)
    b = verify.check_lemma1(5, 3, 11).to_json(with_margins=True)
    assert json.dumps(a) == json.dumps(b)


def test_trials_are_schedule_independent():
    # trial t uses its own generator, so a shorter fleet is a prefix of a longer one
    short = verify.check_lemma2(3, 3, 5).margins
    long = verify.check_lemma2(6, 3, 5).margins
    assert long[:3] == short


def test_check_result_json_round_trip():
    r = verify.check_lemma3(3, 3, 0)
    data = r.to_json(with_margins=True)
    assert verify.CheckResult.from_json(json.loads(json.dumps(data))).to_json(with_margins=True) == data


def test_counterexample_aborts_and_dumps(tmp_path, monkeypatch):
    monkeypatch.setattr(verify, "lemma1_margin", lambda phi, m: (0.0, 1.0))
    with pytest.raises(verify.CounterexampleFound) as info:
        verify.check_lemma1(2, 2, 0, replay_dir=tmp_path)
    data = json.loads(info.value.path.read_text())
    assert data["check"] == "lemma1" and data["margin"] == -1.0
    assert "phi" in data["instance"]


def test_numerical_zero_not_a_violation():
    r = verify._tally("x", [0.1, -5e-8, -2e-7], 0)
    assert r.numerical_zeros == 1
    assert r.violations == 1
    assert r.worst_margin == -2e-7


class TestTheorem1Chain:
    def test_trivial_protocol_is_tight(self):
        trace = run_purified(noiseless_qubit_spec())
        bound = max_output_entropy(identity_channel(2))
        r = verify.check_theorem1_chain(trace, bound)
        assert r.passed
        assert r.details["links"]["e_end_to_end"] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_two_round(self, seed):
        spec = random_spec(2, 2, seed)
        ec = EnergyConstraint.of(spec.hamiltonian, spec.energy_budget)
        r = verify.check_theorem1_chain(run_purified(spec), max_output_entropy(spec.channel, ec), constraint=ec)
        assert r.passed, r.details

    def test_full_erasure_substitution(self):
        spec = random_spec(1, 4, 0, channel=make_erasure(2, 1.0))
        trace = run_purified(spec)
        bound = max_output_entropy(spec.channel)
        r = verify.check_theorem1_chain(trace, bound)
        assert r.passed
        eps = trace.error_probability
        assert eps >= 1 - 1 / 4 - 1e-12

    def test_channel_mismatch(self):
        trace = run_purified(noiseless_qubit_spec())
        with pytest.raises(ValueError, match="input dim"):
            verify.check_theorem1_chain(trace, max_output_entropy(identity_channel(3)))

    def test_recorded_monotone_drift_detected(self):
        trace = run_purified(noiseless_qubit_spec())
        r0 = trace.rounds[0]
        object.__setattr__(r0, "monotone_after", r0.monotone_after + 1e-3)
        with pytest.raises(RuntimeError, match="drifts"):
            verify.check_theorem1_chain(trace, max_output_entropy(identity_channel(2)))

    def test_fleet(self):
        assert verify.theorem1_fleet(6, 9).violations == 0


class TestTheorem2Chain:
    def test_single_component_matches_theorem1(self):
        ch = random_channel(2, 2, 2, 1)
        spec = random_spec(2, 2, 3, channel=ChannelMixture(((1.0, ch),)))
        bound = max_output_entropy(ch)
        r2 = verify.check_theorem2_chain(run_mixture_simulation(spec), bound)
        r1 = verify.check_theorem1_chain(run_purified(spec), bound)
        assert r1.passed and r2.passed
        for k, v in r1.details["links"].items():
            assert r2.details["links"][k] == pytest.approx(v, abs=1e-9)

    def test_erasure_rhs_per_use(self):
        bound = max_avg_output_entropy(make_erasure(2, 0.25))
        assert bound.value <= 0.75 + 1e-7
        spec = random_spec(2, 2, 5, channel=make_erasure(2, 0.25))
        r = verify.check_theorem2_chain(run_mixture_simulation(spec), bound)
        assert r.passed

    def test_needs_mixture_trace(self):
        spec = random_spec(1, 2, 0, channel=make_erasure(2, 0.25))
        with pytest.raises(ValueError, match="conditional"):
            verify.check_theorem2_chain(run_purified(spec), max_avg_output_entropy(spec.channel))

    def test_fleet(self):
        r = verify.theorem2_fleet(4, 2)
        assert r.violations == 0
        assert r.details["max_marginal_deviation"] <= 1e-8


def test_run_suite_unknown():
    with pytest.raises(ValueError):
        verify.run_suite("lemma9")
