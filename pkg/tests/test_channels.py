import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfb.channels import (
    ChannelMixture,
    KrausChannel,
    adjoint_apply,
    amplitude_damping,
    apply,
    dephasing,
    depolarizing,
    fock_leakage,
    identity_channel,
    make_erasure,
    make_named,
    number_operator,
    random_channel,
    stinespring,
    truncated_pure_loss,
)
from qfb.sampling import random_density_matrix
from qfb.states import DensityMatrix, reduced_matrix, PureState


def test_non_tp_rejected():
    with pytest.raises(ValueError, match="trace preserving"):
        KrausChannel(2, 2, [0.5 * np.eye(2)])


def test_wrong_shape_rejected():
    with pytest.raises(ValueError):
        KrausChannel(2, 3, [np.eye(2)])


def test_depolarizing_on_ground_state():
    out = depolarizing(2, 0.3)(np.diag([1.0, 0.0]))
    assert np.allclose(out, np.diag([0.85, 0.15]))


@pytest.mark.parametrize("q", [0.0, 0.25, 1.0])
@pytest.mark.parametrize("d", [2, 3])
def test_depolarizing_formula(d, q):
    rho = random_density_matrix([("A", d)], np.random.default_rng(0)).entries
    assert np.allclose(depolarizing(d, q)(rho), (1 - q) * rho + q * np.eye(d) / d)


def test_dephasing_kills_coherence():
    plus = np.full((2, 2), 0.5)
    assert np.allclose(dephasing(0.5)(plus), np.eye(2) / 2)


def test_amplitude_damping_full():
    assert np.allclose(amplitude_damping(1.0)(np.diag([0.0, 1.0])), np.diag([1.0, 0.0]))


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_probability_range(bad):
    with pytest.raises(ValueError):
        dephasing(bad)


def test_erasure_mixture():
    mix = make_erasure(2, 0.25)
    assert mix.dim_out == 3
    out = mix.flatten()(np.eye(2) / 2)
    assert np.allclose(out, np.diag([0.375, 0.375, 0.25]))
    assert np.allclose(mix(np.eye(2) / 2), out)


def test_mixture_weights_validated():
    with pytest.raises(ValueError):
        ChannelMixture(((0.5, identity_channel(2)), (0.2, identity_channel(2))))
    with pytest.raises(ValueError):
        ChannelMixture(((0.5, identity_channel(2)), (0.5, identity_channel(3))))


def test_apply_on_subsystem():
    rho = DensityMatrix.from_diag([("A", 2), ("B", 2)], [1, 0, 0, 0])
    out = apply(make_erasure(2, 1.0), rho, "A", "A2")
    assert out.layout.labels == ("A2", "B")
    assert np.allclose(reduced_matrix(out, ["A2"]), np.diag([0, 0, 1.0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d_in=st.integers(1, 4), d_out=st.integers(1, 4), env=st.integers(1, 4))
def test_stinespring_reproduces_channel(seed, d_in, d_out, env):
    if d_out * env < d_in:
        return
    rng = np.random.default_rng(seed)
    ch = random_channel(d_in, d_out, env, rng)
    assert ch.tp_defect() < 1e-12
    v = stinespring(ch, env + 1).isometry
    rho = random_density_matrix([("A", d_in)], rng).entries
    big = (v @ rho @ v.conj().T).reshape(d_out, env + 1, d_out, env + 1)
    assert np.allclose(np.einsum("aebe->ab", big), ch(rho), atol=1e-12)


def test_stinespring_env_too_small():
    with pytest.raises(ValueError):
        stinespring(depolarizing(2, 0.5), 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_adjoint_duality(seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(3, 2, 3, rng)
    rho = random_density_matrix([("A", 3)], rng).entries
    g = random_density_matrix([("B", 2)], rng).entries
    lhs = np.trace(g @ ch(rho))
    rhs = np.trace(adjoint_apply(ch, g).entries @ rho)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.8, 1.0])
def test_pure_loss_mean_photon_number(eta):
    ch = truncated_pure_loss(eta, 8)
    assert ch.tp_defect() < 1e-12
    n_op = number_operator(9).entries.real
    for n in range(9):
        rho = np.zeros((9, 9))
        rho[n, n] = 1.0
        out = ch(rho)
        assert np.trace(n_op @ out).real == pytest.approx(eta * n, abs=1e-12)
        assert fock_leakage(ch, rho) == pytest.approx(0.0, abs=1e-12)


def test_pure_loss_coherent_amplitude():
    # a coherent state |alpha> maps to |sqrt(eta) alpha>; check on the truncated first moments
    ch = truncated_pure_loss(0.5, 30)
    alpha = 0.7
    amps = np.array([math.exp(-alpha ** 2 / 2) * alpha ** n / math.sqrt(math.factorial(n)) for n in range(31)])
    out = ch(np.outer(amps, amps))
    a = np.diag(np.sqrt(np.arange(1, 31)), 1)
    assert np.trace(a @ out).real == pytest.approx(math.sqrt(0.5) * alpha, abs=1e-9)


def test_make_named():
    assert make_named("depolarizing", d=2, q=0.5).dim_in == 2
    with pytest.raises(ValueError, match="unknown channel"):
        make_named("teleporter")


def test_random_channel_deterministic():
    a = random_channel(2, 2, 2, 9)
    b = random_channel(2, 2, 2, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.kraus, b.kraus))


def test_basis_state_through_identity():
    psi = PureState.basis([("A", 3)], 2)
    assert np.allclose(identity_channel(3)(psi.to_density().entries), psi.to_density().entries)
