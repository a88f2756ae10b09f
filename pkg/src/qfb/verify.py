"""Randomized checks of the monotone's properties and of the converse chains.

Every lemma check draws its instances from ``trial_rng(seed, t)`` so a trial
can be replayed on its own.  A margin is ``rhs - lhs`` of the inequality under
test: negative means violated.  Margins in ``(-tau_ineq, 0)`` count as
numerical zeros; below ``-tau_abort`` the instance is written to disk and
:class:`CounterexampleFound` is raised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cq, serialize
from .bounds import BoundReport, EnergyConstraint, binary_entropy, max_avg_output_entropy, max_output_entropy
from .channels import ChannelMixture, as_kraus_channel, make_erasure, random_channel
from .channels import apply as apply_channel
from .cq import CQEnsemble, OneWayLOCC
from .protocol import ProtocolTrace, run_mixture_simulation, run_purified, random_spec
from .sampling import dirichlet, haar_isometry, random_pure_state, trial_rng
from .states import PureState, SystemLayout, matrix_entropy, reduced_matrix
from .tolerances import TOL

log = logging.getLogger(__name__)


class CounterexampleFound(RuntimeError):
    def __init__(self, name: str, margin: float, path: Path | None):
        super().__init__(f"{name}: margin {margin:.3e} below abort threshold; instance at {path}")
        self.name, self.margin, self.path = name, margin, path


@dataclass
class CheckResult:
    name: str
    trials: int
    violations: int
    worst_margin: float
    seed: int | None
    margins: list | None = None
    numerical_zeros: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_json(self, with_margins: bool = False) -> dict:
        out = {
            "name": self.name,
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "seed": self.seed,
            "numerical_zeros": self.numerical_zeros,
            "details": self.details,
        }
        if with_margins and self.margins is not None:
            out["margins"] = list(self.margins)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CheckResult":
        return cls(data["name"], data["trials"], data["violations"], data["worst_margin"], data["seed"],
                   data.get("margins"), data.get("numerical_zeros", 0), data.get("details", {}))


def _tally(name: str, margins: list[float], seed, details=None) -> CheckResult:
    tau = TOL["ineq"]
    worst = min(margins) if margins else math.inf
    zeros = sum(1 for m in margins if -tau < m < 0)
    return CheckResult(name, len(margins), sum(1 for m in margins if m < -tau), float(worst), seed,
                       [float(m) for m in margins], zeros, details or {})


def _guard(name: str, margin: float, instance, replay_dir) -> None:
    if margin >= -TOL["abort"]:
        if margin < 0:
            log.debug("%s: numerical-zero margin %.3e", name, margin)
        return
    path = None
    if replay_dir is not None:
        path = Path(replay_dir) / f"{name}-counterexample.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        serialize.write_json(path, {"check": name, "margin": margin, "instance": instance()})
    raise CounterexampleFound(name, margin, path)


# -- random instances ---------------------------------------------------------


def random_1wlocc(da: int, db: int, da_out: int, db_out: int, outcomes: int, rng) -> OneWayLOCC:
    """``V^x = (I (x) <x|) V`` from one Haar isometry, paired with Haar ``U^x``."""
    outcomes = max(outcomes, -(-db // db_out))
    v = haar_isometry(db_out * outcomes, db, rng).reshape(db_out, outcomes, db)
    return OneWayLOCC(tuple((x, haar_isometry(da_out, da, rng), v[:, x, :]) for x in range(outcomes)))


def random_cq_pure(layout: SystemLayout, rng, w_sizes=(2, 3), f_sizes=(1, 2), extra: dict | None = None
                   ) -> CQEnsemble:
    """Ensemble over ``W F [extra registers]`` with Haar pure conditional states."""
    sizes = {"W": int(rng.choice(w_sizes)), "F": int(rng.choice(f_sizes))}
    sizes.update(extra or {})
    keys = list(np.ndindex(*sizes.values()))
    probs = dirichlet(len(keys), rng)
    entries = {tuple(int(v) for v in k): (float(p), random_pure_state(layout, rng)) for k, p in zip(keys, probs)}
    return CQEnsemble(tuple(sizes), entries)


def _dim(rng, dims: int) -> int:
    if dims < 2:
        raise ValueError("dims must be >= 2")
    return int(rng.integers(2, dims + 1))


def _apply_channel(e: CQEnsemble, channel_for, on: str, out: str) -> CQEnsemble:
    """``N^{key}`` on system ``on`` of every branch; output keeps the position of ``on``."""
    entries = {}
    for key, (p, state) in e.items():
        ch = channel_for(key)
        rho = state.to_density() if isinstance(state, PureState) else state
        entries[key] = (p, apply_channel(ch, rho, on, out))
    return CQEnsemble(e.registers, entries, check=False)


# -- lemma fleets -------------------------------------------------------------


def lemma1_margin(phi: PureState, m: OneWayLOCC, a: str = "A", b: str = "B") -> tuple[float, float]:
    """``(S(B)_phi, S(B'|X)_tau)`` for ``tau`` the 1W-LOCC output of ``phi``."""
    e = cq.quantum_only(phi)
    da_out, db_out = m.outcomes[0][1].shape[0], m.outcomes[0][2].shape[0]
    tau = cq.apply_1wlocc(m, e, a, b, "X", a_out=[("A'", da_out)], b_out=[("B'", db_out)])
    return matrix_entropy(reduced_matrix(phi, [b])), cq.conditional_entropy(tau, ["B'"], ["X"])


def check_lemma1(trials: int, dims: int, seed: int, *, replay_dir=None) -> CheckResult:
    margins = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        da, db = _dim(rng, dims), _dim(rng, dims)
        da_out, db_out = int(rng.integers(da, dims + 1)), _dim(rng, dims)
        phi = random_pure_state(SystemLayout.of(("A", da), ("B", db)), rng)
        m = random_1wlocc(da, db, da_out, db_out, int(rng.integers(1, 4)), rng)
        s_b, s_cond = lemma1_margin(phi, m)
        margin = s_b - s_cond
        _guard("lemma1", margin, lambda: {"phi": serialize.encode_state(phi), "locc": serialize.encode_locc(m)},
               replay_dir)
        margins.append(margin)
    return _tally("lemma1", margins, seed)


def lemma2_margin(tau: CQEnsemble, m: OneWayLOCC) -> float:
    da_out, db_out = m.outcomes[0][1].shape[0], m.outcomes[0][2].shape[0]
    theta = cq.apply_1wlocc(m, tau, "A", "B", "X", a_out=[("A'", da_out)], b_out=[("B'", db_out)])
    return cq.monotone(tau, "W", ["F"], ["B"]) - cq.monotone(theta, "W", ["F", "X"], ["B'"])


def check_lemma2(trials: int, dims: int, seed: int, *, replay_dir=None) -> CheckResult:
    margins = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        da, db = _dim(rng, dims), _dim(rng, dims)
        tau = random_cq_pure(SystemLayout.of(("A", da), ("B", db)), rng)
        m = random_1wlocc(da, db, int(rng.integers(da, dims + 1)), _dim(rng, dims), int(rng.integers(1, 4)), rng)
        margin = lemma2_margin(tau, m)
        _guard("lemma2", margin, lambda: {"tau": serialize.encode_ensemble(tau), "locc": serialize.encode_locc(m)},
               replay_dir)
        margins.append(margin)
    return _tally("lemma2", margins, seed)


def lemma3_margin(tau: CQEnsemble, channel_for, f_regs=("F",), cond=()) -> float:
    """``S(B|cond)_omega`` minus the increase of the monotone caused by the channel on ``A``."""
    omega = _apply_channel(tau, channel_for, "A", "B")
    f_regs = list(f_regs)
    increase = cq.monotone(omega, "W", f_regs, ["B", "B'"]) - cq.monotone(tau, "W", f_regs, ["B'"])
    bound = cq.conditional_entropy(omega, ["B"], list(cond)) if cond else cq.entropy(omega, ["B"])
    return bound - increase


def check_lemma3(trials: int, dims: int, seed: int, *, replay_dir=None) -> CheckResult:
    margins = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        da, dbp, db = _dim(rng, dims), _dim(rng, dims), _dim(rng, dims)
        tau = random_cq_pure(SystemLayout.of(("A", da), ("B'", dbp)), rng)
        ch = random_channel(da, db, _dim(rng, dims), rng)
        margin = lemma3_margin(tau, lambda key: ch)
        _guard("lemma3", margin, lambda: {"tau": serialize.encode_ensemble(tau),
                                          "channel": serialize.encode_channel(ch)}, replay_dir)
        margins.append(margin)
    return _tally("lemma3", margins, seed)


def check_lemma3_mixture(trials: int, dims: int, seed: int, *, replay_dir=None) -> CheckResult:
    """Amortized bound with a classical ``Z`` that selects the channel; the cap is ``S(B|Z)``."""
    margins = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        da, dbp, db = _dim(rng, dims), _dim(rng, dims), _dim(rng, dims)
        nz = int(rng.integers(1, 4))
        tau = random_cq_pure(SystemLayout.of(("A", da), ("B'", dbp)), rng, extra={"Z": nz})
        chans = [random_channel(da, db, _dim(rng, dims), rng) for _ in range(nz)]
        margin = lemma3_margin(tau, lambda key: chans[key[2]], ("F", "Z"), ("Z",))
        _guard("lemma3z", margin, lambda: {"tau": serialize.encode_ensemble(tau),
                                           "channels": [serialize.encode_channel(c) for c in chans]}, replay_dir)
        margins.append(margin)
    return _tally("lemma3z", margins, seed)


# -- converse chains ----------------------------------------------------------


def _certified(bound: BoundReport) -> float:
    # the optimizer value is attained; adding the Frank-Wolfe gap gives an upper bound on the sup
    return float(bound.value) + float(bound.duality_gap_estimate)


def _check_bound_matches(trace: ProtocolTrace, bound: BoundReport) -> None:
    d_in = trace.dims[0] if trace.dims else None
    if d_in is not None and bound.optimizer.dim != d_in:
        raise ValueError(f"bound computed for input dim {bound.optimizer.dim}, trace channel has {d_in}")


def _recheck_round(trace: ProtocolTrace, rng) -> None:
    r = trace.rounds[int(rng.integers(trace.n))]
    if r.omega is None:
        return
    before = cq.monotone(r.omega, "W", r.f_registers, r.hat_systems)
    after = cq.monotone(r.rho, "W", r.f_registers, ("B",) + tuple(r.hat_systems))
    drift = max(abs(before - r.monotone_before), abs(after - r.monotone_after))
    if drift > TOL["eq"]:
        raise RuntimeError(f"round {r.round}: recomputed monotone drifts by {drift:.3e}")


def _chain_links(trace: ProtocolTrace, cap: float, per_round_bound: list[float], mean_output: float,
                 feasible: bool) -> dict[str, float]:
    n, M, eps = trace.n, trace.M, trace.error_probability
    h2 = binary_entropy(eps)
    lhs = (1 - eps) * math.log2(M)
    increments = [r.monotone_after - r.monotone_before for r in trace.rounds]
    links = {
        "a_fano": trace.mutual_information + h2 - lhs,
        "a_start": -abs(trace.rounds[0].monotone_before),
        "a_final": trace.rounds[-1].monotone_after - trace.mutual_information,
    }
    for prev, nxt in zip(trace.rounds, trace.rounds[1:]):
        links[f"a_locc_{prev.round}"] = prev.monotone_after - nxt.monotone_before
    for r, inc, b in zip(trace.rounds, increments, per_round_bound):
        links[f"b_round_{r.round}"] = b - inc
    links["c_concavity"] = n * mean_output - sum(per_round_bound)
    if feasible:
        links["d_bound"] = n * cap - n * mean_output
    links["e_end_to_end"] = n * cap + h2 - lhs
    return links


def _feasible(ec: EnergyConstraint | None, rho: np.ndarray) -> bool:
    return ec is None or ec.unconstrained or ec.slack(rho) >= -TOL["eq"]


def check_theorem1_chain(trace: ProtocolTrace, bound: BoundReport, *, channel=None,
                         constraint: EnergyConstraint | None = None, seed: int = 0) -> CheckResult:
    """All links of the single-letter converse on one purified trace.

    ``a_*`` links cover Fano and the telescoping steps (zero start, 1W-LOCC
    monotonicity between rounds, data processing at the end); ``b_round_i`` is
    the per-use amortized bound; ``c_concavity``, ``d_bound`` and
    ``e_end_to_end`` follow.  ``d_bound`` is skipped if the average input
    violates the energy constraint.
    """
    _check_bound_matches(trace, bound)
    channel = as_kraus_channel(channel if channel is not None else trace.channel)
    if channel is None:
        raise ValueError("the chain needs the channel (pass channel= for decoded traces)")
    _recheck_round(trace, trial_rng(seed, 0))
    avg = trace.average_input
    mean_output = matrix_entropy(channel(avg))
    links = _chain_links(trace, _certified(bound), [r.channel_output_entropy for r in trace.rounds],
                         mean_output, _feasible(constraint, avg))
    return _tally("thm1", list(links.values()), seed, {"links": links})


def check_theorem2_chain(trace: ProtocolTrace, bound: BoundReport, *, channel=None,
                         constraint: EnergyConstraint | None = None, seed: int = 0) -> CheckResult:
    """Conditional chain for a mixture trace: per-use bound ``S(B_i|Z_i)``."""
    _check_bound_matches(trace, bound)
    mix = channel if channel is not None else trace.channel
    if not isinstance(mix, ChannelMixture):
        mix = ChannelMixture(((1.0, mix),))
    if any(r.conditional_output_entropy is None for r in trace.rounds):
        raise ValueError("trace has no conditional output entropies; run the mixture simulation")
    _recheck_round(trace, trial_rng(seed, 0))
    avg = trace.average_input
    mean_output = sum(w * matrix_entropy(ch(avg)) for w, ch in mix.components)
    links = _chain_links(trace, _certified(bound), [r.conditional_output_entropy for r in trace.rounds],
                         mean_output, _feasible(constraint, avg))
    return _tally("thm2", list(links.values()), seed, {"links": links})


def _merge(name: str, results: list[CheckResult], seed: int, details: dict) -> CheckResult:
    margins = [m for r in results for m in r.margins]
    out = _tally(name, margins, seed, details)
    out.trials = len(results)
    return out


def theorem1_fleet(protocols: int, seed: int, *, max_rounds: int = 3) -> CheckResult:
    """Random qubit protocols (``|F| = 2``, ``M`` in {2, 4}) through :func:`check_theorem1_chain`."""
    results = []
    for t in range(protocols):
        rng = trial_rng(seed, t)
        n, M = int(rng.integers(1, max_rounds + 1)), int(rng.choice([2, 4]))
        spec = random_spec(n, M, rng)
        ec = EnergyConstraint.of(spec.hamiltonian, spec.energy_budget)
        bound = max_output_entropy(spec.channel, ec)
        trace = run_purified(spec)
        results.append(check_theorem1_chain(trace, bound, constraint=ec, seed=t))
    return _merge("thm1", results, seed, {"protocols": protocols})


def mixture_deviation(spec, mixture_trace: ProtocolTrace | None = None, flat_trace: ProtocolTrace | None = None
                      ) -> float:
    """Largest deviation between a mixture trace with ``Z`` traced out and the flattened-channel trace.

    Compares, round by round, every receiver-side conditional state after the
    channel (given message and feedback copies), then the final joint
    distribution of message and decoded message.
    """
    mix = mixture_trace or run_mixture_simulation(spec)
    flat = flat_trace or run_purified(spec)
    worst = float(np.max(np.abs(mix.joint - flat.joint)))
    for rm, rf in zip(mix.rounds, flat.rounds):
        regs = [r for r in rf.rho.registers]
        systems = ["B"] + list(rf.hat_systems)
        a = cq.marginal(rm.rho, regs, systems)
        b = cq.marginal(rf.rho, regs, systems)
        if set(a) != set(b):
            return math.inf
        for k in a:
            worst = max(worst, abs(a[k][0] - b[k][0]), float(np.max(np.abs(a[k][1] - b[k][1]))))
    return worst


def theorem2_fleet(protocols: int, seed: int, *, channel: ChannelMixture | None = None,
                   max_rounds: int = 2) -> CheckResult:
    """Random protocols over a mixture channel (default: erasure, d=2, p=0.25).

    Each protocol is also run on the flattened channel; the largest
    deviation after marginalizing ``Z`` is reported in ``details``.
    """
    channel = channel or make_erasure(2, 0.25)
    results, deviations = [], []
    bound = None
    for t in range(protocols):
        rng = trial_rng(seed, t)
        n, M = int(rng.integers(1, max_rounds + 1)), int(rng.choice([2, 4]))
        spec = random_spec(n, M, rng, channel=channel)
        ec = EnergyConstraint.of(spec.hamiltonian, spec.energy_budget)
        if bound is None:
            bound = max_avg_output_entropy(channel, ec)
        trace = run_mixture_simulation(spec)
        results.append(check_theorem2_chain(trace, bound, constraint=ec, seed=t))
        deviations.append(mixture_deviation(spec, trace))
    return _merge("thm2", results, seed, {"protocols": protocols, "bound": bound.value,
                                          "max_marginal_deviation": max(deviations, default=0.0)})


SUITES = ("lemma1", "lemma2", "lemma3", "lemma3z", "thm1", "thm2")


def run_suite(name: str, *, trials: int = 500, dims: int = 4, seed: int = 0, protocols: int = 20,
              replay_dir=None) -> list[CheckResult]:
    """Run one named suite, or every suite for ``"all"``."""
    names = SUITES if name == "all" else (name,)
    out = []
    for s in names:
        if s == "lemma1":
            out.append(check_lemma1(trials, dims, seed, replay_dir=replay_dir))
        elif s == "lemma2":
            out.append(check_lemma2(trials, dims, seed, replay_dir=replay_dir))
        elif s == "lemma3":
            out.append(check_lemma3(trials, dims, seed, replay_dir=replay_dir))
        elif s == "lemma3z":
            out.append(check_lemma3_mixture(trials, dims, seed, replay_dir=replay_dir))
        elif s == "thm1":
            out.append(theorem1_fleet(protocols, seed))
        elif s == "thm2":
            out.append(theorem2_fleet(protocols, seed))
        else:
            raise ValueError(f"unknown suite {s!r}; choose from {SUITES + ('all',)}")
    return out
