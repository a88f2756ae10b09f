"""Feedback-assisted communication protocols, run round by round.

Three runners share one :class:`ProtocolSpec`:

* :func:`run_original` evolves mixed conditional states exactly as the
  protocol prescribes;
* :func:`run_purified` dilates every step (codeword and feedback-state
  purifications, Stinespring isometries for encoders and the channel,
  one operator per decoder outcome, square-root POVM dilation) so that each
  branch, indexed by the message and Bob's copies of the feedback, holds a
  pure vector;
* :func:`run_mixture_simulation` additionally lets Bob pick which mixture
  component acts at each use, enumerating every choice exactly.

System labels in the purified runs: ``Ap`` (Alice's memory), ``RA`` (codeword
purification), ``EA<i>`` (encoder environments), ``A``/``B`` (channel input
and output), ``E<i>`` (channel environments), ``Bp`` (Bob's memory), ``RB``
(purification of Bob's initial state) and ``DB<i>`` (decoder environments).
Registers: ``W`` (message), ``F<i>'`` (Bob's feedback copies), ``Z<i>``
(mixture component), ``What`` (decoded message).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cq
from .channels import ChannelMixture, KrausChannel, as_kraus_channel, random_channel, stinespring
from .cq import CQEnsemble, Instrument
from .sampling import as_rng, dirichlet, haar_isometry, haar_unitary, random_density_matrix
from .states import (
    DensityMatrix,
    PureState,
    SystemLayout,
    apply_operator,
    matrix_entropy,
    purify,
    reduced_matrix,
    trace_distance,
)
from .tolerances import TOL

DEFAULT_DIM_CAP = 64
DEFAULT_VECTOR_CAP = 1 << 15


class DimensionCapExceeded(RuntimeError):
    pass


class PurityLoss(RuntimeError):
    """A dilated step failed to preserve norm: the dilation is wrong."""


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        return np.array(state.entries)
    m = np.array(state, dtype=complex)
    DensityMatrix(SystemLayout.of(("X", m.shape[0])), m)  # validates
    return m


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """An ``(n, M, H, E)`` feedback protocol.

    ``encoders[i][f]`` is the channel Alice applies in round ``i + 1`` after
    feedback value ``f``; it maps her memory to ``memory (x) channel input``.
    ``decoders[i]`` is Bob's instrument on ``(B, Bp)`` after round ``i + 1``
    (there are ``n - 1`` of them); its outcome index is the feedback value.
    ``povm`` holds the ``M`` final measurement elements on ``(B, Bp)``.
    """

    n: int
    M: int
    channel: KrausChannel | ChannelMixture
    codewords: tuple
    initial_bob: tuple
    encoders: tuple
    decoders: tuple
    povm: tuple
    hamiltonian: np.ndarray
    energy_budget: float

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("codewords", tuple(_as_matrix(c) for c in self.codewords))
        set_("initial_bob", tuple((float(p), _as_matrix(s)) for p, s in self.initial_bob))
        set_("encoders", tuple(tuple(fs) for fs in self.encoders))
        set_("decoders", tuple(self.decoders))
        set_("povm", tuple(np.array(e, dtype=complex) for e in self.povm))
        set_("hamiltonian", np.array(self.hamiltonian, dtype=complex))
        set_("energy_budget", float(self.energy_budget))
        self._validate()

    def _validate(self):
        n, M = self.n, self.M
        if n < 1 or M < 1:
            raise ValueError("need n >= 1 rounds and M >= 1 messages")
        if len(self.codewords) != M:
            raise ValueError(f"expected {M} codewords, got {len(self.codewords)}")
        if len({c.shape for c in self.codewords}) != 1:
            raise ValueError("codewords must share one dimension")
        if len(self.encoders) != n:
            raise ValueError(f"expected {n} encoder rounds, got {len(self.encoders)}")
        if len(self.decoders) != n - 1:
            raise ValueError(f"expected {n - 1} decoder instruments, got {len(self.decoders)}")
        probs = np.array([p for p, _ in self.initial_bob])
        if np.any(probs < 0) or abs(probs.sum() - 1) > TOL["tr"]:
            raise ValueError("initial feedback distribution is not normalized")
        if len({s.shape for _, s in self.initial_bob}) != 1:
            raise ValueError("Bob's initial states must share one dimension")
        da, db = self.dim_a, self.dim_b
        if self.hamiltonian.shape != (da, da):
            raise ValueError(f"Hamiltonian must be {da}x{da}")
        a_dims, b_dims, f_sizes = [self.codewords[0].shape[0]], [self.initial_bob[0][1].shape[0]], [len(probs)]
        for i, fs in enumerate(self.encoders):
            if len(fs) != f_sizes[i]:
                raise ValueError(f"round {i + 1}: {len(fs)} encoders for {f_sizes[i]} feedback values")
            outs = {(e.dim_in, e.dim_out) for e in fs}
            if len(outs) != 1:
                raise ValueError(f"round {i + 1}: encoders disagree on dimensions")
            d_in, d_out = outs.pop()
            if d_in != a_dims[i] or d_out % da:
                raise ValueError(f"round {i + 1}: encoder dims {d_in}->{d_out} do not chain")
            a_dims.append(d_out // da)
            if i < n - 1:
                inst = self.decoders[i]
                if inst.dim_in != db * b_dims[i]:
                    raise ValueError(f"round {i + 1}: decoder input dim {inst.dim_in} != {db * b_dims[i]}")
                b_dims.append(inst.dim_out)
                f_sizes.append(len(inst.outcomes))
        d_final = db * b_dims[-1]
        if len(self.povm) != M:
            raise ValueError(f"POVM needs {M} elements")
        for el in self.povm:
            if el.shape != (d_final, d_final) or np.linalg.eigvalsh(0.5 * (el + el.conj().T))[0] < -TOL["psd"]:
                raise ValueError("POVM elements must be PSD on (B, Bp)")
        if np.max(np.abs(sum(self.povm) - np.eye(d_final))) > TOL["tp"]:
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "_dims", (tuple(a_dims), tuple(b_dims), tuple(f_sizes)))

    @property
    def dim_a(self) -> int:
        return self.channel.dim_in

    @property
    def dim_b(self) -> int:
        return self.channel.dim_out

    @property
    def a_dims(self) -> tuple[int, ...]:
        return self._dims[0]

    @property
    def b_dims(self) -> tuple[int, ...]:
        return self._dims[1]

    @property
    def f_sizes(self) -> tuple[int, ...]:
        return self._dims[2]

    @property
    def is_mixture(self) -> bool:
        return isinstance(self.channel, ChannelMixture)


@dataclass(frozen=True, eq=False)
class RoundRecord:
    round: int
    monotone_before: float
    monotone_after: float
    input_energy: float
    channel_output_entropy: float
    input_state: np.ndarray
    conditional_output_entropy: float | None = None
    f_registers: tuple = ()
    hat_systems: tuple = ()
    omega: CQEnsemble | None = None
    rho: CQEnsemble | None = None

    def scalars(self) -> dict:
        out = {
            "round": self.round,
            "monotone_before": self.monotone_before,
            "monotone_after": self.monotone_after,
            "input_energy": self.input_energy,
            "channel_output_entropy": self.channel_output_entropy,
        }
        if self.conditional_output_entropy is not None:
            out["conditional_output_entropy"] = self.conditional_output_entropy
        return out


@dataclass(frozen=True, eq=False)
class ProtocolTrace:
    kind: str
    n: int
    M: int
    rounds: tuple
    error_probability: float
    average_energy: float
    mutual_information: float
    joint: np.ndarray
    dims: tuple = ()
    channel: KrausChannel | ChannelMixture | None = field(default=None, repr=False)
    final: CQEnsemble | None = field(default=None, repr=False)

    @property
    def input_states(self) -> list[np.ndarray]:
        return [r.input_state for r in self.rounds]

    @property
    def average_input(self) -> np.ndarray:
        return sum(self.input_states) / self.n


def _check_caps(dim: int, cap: int, what: str) -> None:
    if dim > cap:
        raise DimensionCapExceeded(f"{what} dimension {dim} exceeds the cap {cap}")


def _input_stats(e: CQEnsemble, spec: ProtocolSpec) -> tuple[np.ndarray, float]:
    rho_a = sum(p * reduced_matrix(s, ["A"]) for p, s in e.entries.values())
    return rho_a, float(np.trace(spec.hamiltonian @ rho_a).real)


def _output_entropy(e: CQEnsemble) -> float:
    return matrix_entropy(sum(p * reduced_matrix(s, ["B"]) for p, s in e.entries.values()))


def _normalized(vec: PureState, step: str) -> PureState:
    norm = np.linalg.norm(vec.amplitudes)
    if abs(norm - 1.0) > TOL["eq"]:
        raise PurityLoss(f"{step}: isometric step changed the norm to {norm!r}")
    return PureState(vec.layout, vec.amplitudes / norm, check=False)


def _finish(spec: ProtocolSpec, kind: str, records: list, joint: np.ndarray,
            final: CQEnsemble | None, info: float) -> ProtocolTrace:
    M = spec.M
    eps = float(max(1.0 - np.trace(joint).real, 0.0))
    ideal = DensityMatrix.from_diag([("W", M), ("What", M)], np.eye(M).ravel() / M)
    actual = DensityMatrix(ideal.layout, np.diag(joint.ravel()), check=False)
    td = trace_distance(ideal, actual)
    if abs(td - eps) > TOL["eq"]:
        raise RuntimeError(f"error probability {eps} disagrees with trace distance {td}")
    energies = [r.input_energy for r in records]
    return ProtocolTrace(kind, spec.n, M, tuple(records), eps, sum(energies) / spec.n, info, joint,
                         (spec.dim_a, spec.dim_b), spec.channel, final)


# -- purified runs ------------------------------------------------------------


def _run_pure(spec: ProtocolSpec, mixture: bool, keep_copies: bool, dim_cap: int,
              vector_cap: int, keep_states: bool) -> ProtocolTrace:
    M, n = spec.M, spec.n
    a0 = spec.a_dims[0]
    b0 = spec.b_dims[0]
    if mixture:
        if not spec.is_mixture:
            raise TypeError("mixture simulation needs a ChannelMixture")
        comps = list(spec.channel.components)
    else:
        comps = [(1.0, as_kraus_channel(spec.channel))]
    env_n = max(len(ch.kraus) for _, ch in comps)
    channel_isos = [stinespring(ch, env_n).isometry for _, ch in comps]

    entries = {}
    for m, rho_m in enumerate(spec.codewords):
        psi = purify(DensityMatrix(SystemLayout.of(("Ap", a0)), rho_m), "RA")
        for f0, (p_f, sigma) in enumerate(spec.initial_bob):
            if p_f <= 0:
                continue
            phi = purify(DensityMatrix(SystemLayout.of(("Bp", b0)), sigma), "RB")
            vec = PureState(psi.layout.concat(phi.layout), np.kron(psi.amplitudes, phi.amplitudes), check=False)
            entries[(m, f0)] = (p_f / M, vec)
    registers = ["W", "F0'"]
    bob_hat = ["Bp", "RB"]
    e = CQEnsemble(tuple(registers), entries)
    records = []
    for i in range(1, n + 1):
        f_reg = registers.index(f"F{i - 1}'")
        if mixture:
            entries = {}
            for key, (p, vec) in e.items():
                for z, (w_z, _) in enumerate(comps):
                    if p * w_z >= TOL["p_min"]:
                        entries[key + (z,)] = (p * w_z, vec)
            registers.append(f"Z{i}")
            e = CQEnsemble(tuple(registers), entries)
        # Alice's isometric encoder, chosen by the latest feedback value
        encs = spec.encoders[i - 1]
        env_a = max(len(ch.kraus) for ch in encs)
        isos = [stinespring(ch, env_a).isometry for ch in encs]
        out = [("Ap", spec.a_dims[i]), ("A", spec.dim_a)] + ([(f"EA{i}", env_a)] if env_a > 1 else [])
        entries = {}
        for key, (p, vec) in e.items():
            u = isos[key[f_reg]]
            if env_a == 1:
                u = u.reshape(spec.a_dims[i] * spec.dim_a, -1)
            entries[key] = (p, _normalized(apply_operator(vec, u, "Ap", out), f"encoder {i}"))
        omega = CQEnsemble(tuple(registers), entries, check=False)
        _check_caps(omega.layout.dim, vector_cap, "purified vector")
        f_regs = tuple(r for r in registers if r != "W") if keep_copies else tuple(
            r for r in registers if r.startswith("Z"))
        _check_caps(omega.layout.dim_of(bob_hat) * spec.dim_b, dim_cap, "receiver-side state")
        before = cq.monotone(omega, "W", f_regs, bob_hat)
        rho_a, energy = _input_stats(omega, spec)

        # the channel, dilated; with a mixture the component is read from Z_i
        z_reg = registers.index(f"Z{i}") if mixture else None
        out = [("B", spec.dim_b)] + ([(f"E{i}", env_n)] if env_n > 1 else [])
        entries = {}
        for key, (p, vec) in omega.items():
            v = channel_isos[key[z_reg]] if mixture else channel_isos[0]
            entries[key] = (p, _normalized(apply_operator(vec, v, "A", out), f"channel use {i}"))
        rho = CQEnsemble(tuple(registers), entries, check=False)
        _check_caps(rho.layout.dim, vector_cap, "purified vector")
        after = cq.monotone(rho, "W", f_regs, ["B"] + bob_hat)
        s_out = _output_entropy(rho)
        s_cond = cq.conditional_entropy(rho, ["B"], [f"Z{i}"]) if mixture else None
        records.append(RoundRecord(i, before, after, energy, s_out, rho_a, s_cond, f_regs,
                                   tuple(bob_hat), omega if keep_states else None,
                                   rho if keep_states else None))

        if i < n:
            # Bob's decoder: one operator per outcome, environment kept by Bob
            inst = spec.decoders[i - 1]
            k_max = max(len(ops) for _, ops in inst.outcomes)
            dilations = []
            for _, ops in inst.outcomes:
                stack = np.zeros((inst.dim_out, k_max, inst.dim_in), dtype=complex)
                stack[:, :len(ops), :] = np.stack(ops, axis=1)
                dilations.append(stack.reshape(inst.dim_out * k_max, inst.dim_in))
            out = [("Bp", spec.b_dims[i])] + ([(f"DB{i}", k_max)] if k_max > 1 else [])
            entries = {}
            pruned = 0.0
            for key, (p, vec) in rho.items():
                for f, v in enumerate(dilations):
                    new = apply_operator(vec, v, ["B", "Bp"], out)
                    q = float(np.vdot(new.amplitudes, new.amplitudes).real)
                    if p * q < TOL["p_min"]:
                        pruned += p * q
                        continue
                    entries[key + (f,)] = (p * q, PureState(new.layout, new.amplitudes / math.sqrt(q), check=False))
            cq._prune_check(pruned)
            registers.append(f"F{i}'")
            if k_max > 1:
                bob_hat.append(f"DB{i}")
            e = CQEnsemble(tuple(registers), entries)

    # final measurement, dilated by the square roots of the POVM elements
    roots = [_psd_sqrt(el) for el in spec.povm]
    entries = {}
    pruned = 0.0
    for key, (p, vec) in rho.items():
        for w_hat, r in enumerate(roots):
            new = apply_operator(vec, r, ["B", "Bp"])
            q = float(np.vdot(new.amplitudes, new.amplitudes).real)
            if p * q < TOL["p_min"]:
                pruned += p * q
                continue
            entries[key + (w_hat,)] = (p * q, PureState(new.layout, new.amplitudes / math.sqrt(q), check=False))
    cq._prune_check(pruned)
    final = CQEnsemble(tuple(registers) + ("What",), entries)
    joint = np.zeros((M, M))
    for key, (p, _) in final.items():
        joint[key[0], key[-1]] += p
    info = cq.mutual_information(final, ["W"], ["What"])
    kind = "mixture" if mixture else "purified"
    return _finish(spec, kind, records, joint, final if keep_states else None, info)


def run_purified(spec: ProtocolSpec, keep_copies: bool = True, *, dim_cap: int = DEFAULT_DIM_CAP,
                 vector_cap: int = DEFAULT_VECTOR_CAP, keep_states: bool = True) -> ProtocolTrace:
    """Run the purified simulation; a mixture channel is used in flattened form.

    With ``keep_copies=False`` the monotone is evaluated without Bob's copies
    of the feedback, i.e. conditioned on the message alone.
    """
    return _run_pure(spec, False, keep_copies, dim_cap, vector_cap, keep_states)


def run_mixture_simulation(spec: ProtocolSpec, seed=None, *, dim_cap: int = DEFAULT_DIM_CAP,
                           vector_cap: int = DEFAULT_VECTOR_CAP, keep_states: bool = True) -> ProtocolTrace:
    """Purified run in which Bob draws the mixture component ``Z_i`` before each use.

    Every ``Z`` history is enumerated with its exact probability, so no
    sampling noise enters the trace and ``seed`` is accepted only for
    interface symmetry.  Encoders and decoders ignore ``Z``.
    """
    return _run_pure(spec, True, True, dim_cap, vector_cap, keep_states)


# -- original protocol --------------------------------------------------------


def _kraus_sum(rho: DensityMatrix, ops, on, out) -> DensityMatrix:
    parts = [apply_operator(rho, k, on, out) for k in ops]
    return DensityMatrix(parts[0].layout, sum(p.entries for p in parts), check=False)


def run_original(spec: ProtocolSpec, *, dim_cap: int = DEFAULT_DIM_CAP,
                 keep_states: bool = True) -> ProtocolTrace:
    """Run the protocol on mixed conditional states, without any dilation.

    Branches are indexed by the message and the feedback history.  The
    monotone columns evaluate the same formula on these (non-pure) states.
    """
    M, n = spec.M, spec.n
    channel = as_kraus_channel(spec.channel)
    entries = {}
    for m, rho_m in enumerate(spec.codewords):
        for f0, (p_f, sigma) in enumerate(spec.initial_bob):
            if p_f > 0:
                layout = SystemLayout.of(("Ap", rho_m.shape[0]), ("Bp", sigma.shape[0]))
                entries[(m, f0)] = (p_f / M, DensityMatrix(layout, np.kron(rho_m, sigma), check=False))
    registers = ["W", "F0'"]
    e = CQEnsemble(tuple(registers), entries)
    records = []
    for i in range(1, n + 1):
        f_reg = registers.index(f"F{i - 1}'")
        out = [("Ap", spec.a_dims[i]), ("A", spec.dim_a)]
        _check_caps(spec.a_dims[i] * max(spec.dim_a, spec.dim_b) * spec.b_dims[i - 1], dim_cap,
                    "conditional state")
        entries = {key: (p, _kraus_sum(s, spec.encoders[i - 1][key[f_reg]].kraus, "Ap", out))
                   for key, (p, s) in e.items()}
        omega = CQEnsemble(tuple(registers), entries, check=False)
        f_regs = tuple(r for r in registers if r != "W")
        before = cq.monotone(omega, "W", f_regs, ["Bp"])
        rho_a, energy = _input_stats(omega, spec)
        entries = {key: (p, _kraus_sum(s, channel.kraus, "A", [("B", spec.dim_b)]))
                   for key, (p, s) in omega.items()}
        rho = CQEnsemble(tuple(registers), entries, check=False)
        after = cq.monotone(rho, "W", f_regs, ["B", "Bp"])
        records.append(RoundRecord(i, before, after, energy, _output_entropy(rho), rho_a, None, f_regs,
                                   ("Bp",), omega if keep_states else None, rho if keep_states else None))
        if i < n:
            inst = spec.decoders[i - 1]
            rho = cq.apply_instrument(inst, rho, ["B", "Bp"], f"F{i}'", out=[("Bp", spec.b_dims[i])])
            # relabel instrument outcomes by position
            labels = {lb: j for j, lb in enumerate(inst.labels)}
            registers.append(f"F{i}'")
            e = CQEnsemble(tuple(registers), {k[:-1] + (labels[k[-1]],): v for k, v in rho.items()})
    joint = np.zeros((M, M))
    for key, (p, s) in rho.items():
        bob = reduced_matrix(s, ["B", "Bp"])
        for w_hat, el in enumerate(spec.povm):
            joint[key[0], w_hat] += p * float(np.trace(el @ bob).real)
    info = matrix_entropy(np.diag(joint.sum(axis=1))) + matrix_entropy(np.diag(joint.sum(axis=0))) \
        - matrix_entropy(np.diag(joint.ravel()))
    return _finish(spec, "original", records, joint, None, info)


# -- random protocols ---------------------------------------------------------


def random_instrument(d_in: int, d_out: int, outcomes: int, rng) -> Instrument:
    """Isometry into ``out (x) outcome (x) env`` followed by a readout of the outcome.

    The environment is only as large as needed to fit an isometry, so the
    instrument has a single Kraus operator per outcome whenever
    ``d_out * outcomes >= d_in``.
    """
    k = max(1, -(-d_in // (d_out * outcomes)))
    v = haar_isometry(d_out * outcomes * k, d_in, rng).reshape(d_out, outcomes, k, d_in)
    return Instrument(tuple((x, [v[:, x, j, :] for j in range(k)]) for x in range(outcomes)))


def random_spec(n: int, M: int, seed, *, f_size: int = 2, channel=None, mem_dim: int = 2,
                encoder_env: int = 2, channel_env: int = 2) -> ProtocolSpec:
    """Random protocol for the verification fleets.

    Haar pure codewords, random mixed initial states for Bob, random encoder
    channels, random instruments for feedback, and a projective final
    measurement in a Haar-random basis.  The default channel is a random qubit
    channel; the Hamiltonian is the number operator with a budget that every
    state meets.
    """
    rng = as_rng(seed)
    if channel is None:
        channel = random_channel(2, 2, channel_env, rng)
    da, db = channel.dim_in, channel.dim_out
    codewords = []
    for _ in range(M):
        v = haar_isometry(mem_dim, 1, rng)[:, 0]
        codewords.append(np.outer(v, v.conj()))
    probs = dirichlet(f_size, rng)
    initial_bob = [(p, random_density_matrix([("Bp", mem_dim)], rng).entries) for p in probs]
    encoders = [[random_channel(mem_dim, mem_dim * da, encoder_env, rng) for _ in range(f_size)]
                for _ in range(n)]
    decoders = [random_instrument(db * mem_dim, mem_dim, f_size, rng) for _ in range(n - 1)]
    d_final = db * mem_dim
    u = haar_unitary(d_final, rng)
    povm = [sum((np.outer(u[:, j], u[:, j].conj()) for j in range(w, d_final, M)),
                np.zeros((d_final, d_final), dtype=complex)) for w in range(M)]
    h = np.diag(np.arange(da, dtype=float))
    return ProtocolSpec(n, M, channel, codewords, initial_bob, encoders, decoders, povm, h, float(da - 1))


def noiseless_qubit_spec() -> ProtocolSpec:
    """One use of the identity qubit channel carrying one bit: codewords |0>, |1>."""
    codewords = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    # Alice's memory after encoding is trivial: the codeword moves into A
    encoders = [[KrausChannel(2, 2, [np.eye(2)])]]
    povm = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    channel = KrausChannel(2, 2, [np.eye(2)])
    return ProtocolSpec(1, 2, channel, codewords, [(1.0, np.eye(1))], encoders, [], povm,
                        np.diag([0.0, 1.0]), 1.0)
