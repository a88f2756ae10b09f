import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfb import cq
from qfb.cq import CQEnsemble, Instrument, OneWayLOCC
from qfb.sampling import dirichlet, haar_isometry, random_density_matrix, random_pure_state
from qfb.states import DensityMatrix, LayoutError, PureState, SystemLayout, matrix_entropy, reduced_matrix

seeds = st.integers(0, 2**32 - 1)


def random_ensemble(rng, pure=True):
    layout = SystemLayout.of(("A", 2), ("B", 3))
    keys = [(w, f) for w in range(2) for f in range(2)]
    probs = dirichlet(len(keys), rng)
    make = random_pure_state if pure else random_density_matrix
    return CQEnsemble(("W", "F"), {k: (p, make(layout, rng)) for k, p in zip(keys, probs)})


def flat_entropy(e, names):
    """Oracle: entropy of the explicit block-diagonal matrix, reduced by partial trace."""
    rho = cq.flatten(e)
    return matrix_entropy(reduced_matrix(rho, list(names)))


class TestEnsemble:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValueError):
            cq.from_states("X", [0.5, 0.4], [PureState.basis([("A", 2)], 0)] * 2)

    def test_register_system_clash(self):
        with pytest.raises(LayoutError):
            CQEnsemble(("A",), {(0,): (1.0, PureState.basis([("A", 2)], 0))})

    def test_mixed_layouts_rejected(self):
        with pytest.raises(LayoutError):
            cq.from_states("X", [0.5, 0.5], [PureState.basis([("A", 2)], 0), PureState.basis([("B", 2)], 0)])

    def test_alphabet(self):
        e = random_ensemble(np.random.default_rng(0))
        assert e.alphabet("W") == [0, 1]


@settings(max_examples=25, deadline=None)
@given(seed=seeds, pure=st.booleans())
def test_entropies_match_flattened_oracle(seed, pure):
    e = random_ensemble(np.random.default_rng(seed), pure)
    for names in (["W"], ["B"], ["W", "B"], ["W", "F", "A"], ["F", "A", "B"], ["W", "F", "A", "B"]):
        assert cq.entropy(e, names) == pytest.approx(flat_entropy(e, names), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_monotone_identity(seed):
    # I(W;CF) + S(C|WF) = I(W;F) + S(C|F), evaluated independently from the flattened state
    e = random_ensemble(np.random.default_rng(seed))
    lhs = cq.monotone(e, "W", ["F"], ["B"])
    rhs = (flat_entropy(e, ["W"]) + flat_entropy(e, ["F"]) - flat_entropy(e, ["W", "F"])
           + flat_entropy(e, ["F", "B"]) - flat_entropy(e, ["F"]))
    assert lhs == pytest.approx(rhs, abs=1e-9)
    assert lhs >= -1e-12


def test_mutual_information_of_copies():
    states = [PureState.basis([("A", 2)], i) for i in range(2)]
    e = cq.from_states("X", [0.5, 0.5], states)
    assert cq.mutual_information(e, ["X"], ["A"]) == pytest.approx(1.0)


def test_mutual_information_constant_register_is_zero():
    e = cq.quantum_only(random_pure_state([("A", 2), ("B", 2)], np.random.default_rng(1)))
    e = CQEnsemble(("W",), {(0,): e.entries[()]})
    assert cq.mutual_information(e, ["W"], ["A"]) == 0.0


def test_bell_state_conditional_entropy():
    bell = PureState([("A", 2), ("B", 2)], np.array([1, 0, 0, 1]) / math.sqrt(2))
    e = cq.quantum_only(bell)
    assert cq.entropy(e, ["B"]) == pytest.approx(1.0)
    assert cq.mutual_information(e, ["A"], ["B"]) == pytest.approx(2.0)


def test_conditional_entropy_argument_checks():
    e = random_ensemble(np.random.default_rng(2))
    with pytest.raises(ValueError):
        cq.conditional_entropy(e, ["W"], ["F"])
    with pytest.raises(ValueError):
        cq.conditional_entropy(e, ["A"], ["B"])


def test_marginal_sums_branches():
    e = random_ensemble(np.random.default_rng(4))
    m = cq.marginal(e, ["W"], ["B"])
    total = sum(p * rho for p, rho in m.values())
    assert np.allclose(total, reduced_matrix(cq.flatten(e), ["B"]))
    assert sum(p for p, _ in m.values()) == pytest.approx(1.0)


class TestInstrument:
    def test_requires_trace_preservation(self):
        with pytest.raises(ValueError):
            Instrument(((0, [np.diag([1.0, 0.0])]),))

    def test_measurement_statistics(self):
        inst = Instrument(((0, [np.diag([1.0, 0.0])]), (1, [np.diag([0.0, 1.0])])))
        rho = DensityMatrix.from_diag([("A", 2)], [0.3, 0.7])
        out = cq.apply_instrument(inst, cq.quantum_only(rho), "A", "X")
        assert out.entries[(0,)][0] == pytest.approx(0.3)
        assert out.entries[(1,)][0] == pytest.approx(0.7)

    def test_zero_probability_branches_pruned(self):
        inst = Instrument(((0, [np.diag([1.0, 0.0])]), (1, [np.diag([0.0, 1.0])])))
        out = cq.apply_instrument(inst, cq.quantum_only(PureState.basis([("A", 2)], 0)), "A", "X")
        assert list(out.entries) == [(0,)]


def test_1wlocc_validation():
    with pytest.raises(ValueError):
        OneWayLOCC(((0, np.eye(2), 0.5 * np.eye(2)),))
    with pytest.raises(ValueError):
        OneWayLOCC(((0, np.ones((2, 2)), np.eye(2)),))


def test_1wlocc_rejects_mixed_conditionals():
    rho = DensityMatrix.maximally_mixed([("A", 2), ("B", 2)])
    m = OneWayLOCC(((0, np.eye(2), np.eye(2)),))
    with pytest.raises(ValueError, match="pure"):
        cq.apply_1wlocc(m, cq.quantum_only(rho), "A", "B", "X")


@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_1wlocc_preserves_probability_and_purity(seed):
    rng = np.random.default_rng(seed)
    e = random_ensemble(rng)
    v = haar_isometry(6, 3, rng).reshape(3, 2, 3)
    m = OneWayLOCC(tuple((x, haar_isometry(2, 2, rng), v[:, x, :]) for x in range(2)))
    out = cq.apply_1wlocc(m, e, "A", "B", "X")
    assert out.probabilities().sum() == pytest.approx(1.0)
    for _, state in out.entries.values():
        assert state.purity() == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, pure=st.booleans())
def test_monotone_envelope(seed, pure):
    # I(W;CF) <= H(W) <= log2|W| and S(C|WF) <= log2 dim C
    e = random_ensemble(np.random.default_rng(seed), pure)
    value = cq.monotone(e, "W", ["F"], ["A", "B"])
    assert -1e-9 <= value <= math.log2(2) + math.log2(6) + 1e-9
