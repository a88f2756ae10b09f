"""Classical-quantum ensembles, instruments and one-way LOCC maps.

Classical registers stay symbolic: an ensemble maps a tuple of register
values to ``(probability, state)``.  Entropies of any mix of registers ``R``
and quantum systems ``Q`` use

    S(RQ) = H(R) + sum_r p(r) S(rho_Q^r),

so no block matrix is formed unless :func:`flatten` is asked for.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import InitVar, dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .states import (
    DensityMatrix,
    LayoutError,
    PureState,
    State,
    SystemLayout,
    apply_operator,
    matrix_entropy,
    reduced_matrix,
    spectrum_entropy,
)
from .tolerances import TOL


@dataclass(frozen=True, eq=False)
class CQEnsemble:
    registers: tuple[str, ...]
    entries: Mapping[tuple, tuple[float, State]]
    check: InitVar[bool] = True

    def __post_init__(self, check):
        registers = tuple(str(r) for r in self.registers)
        object.__setattr__(self, "registers", registers)
        entries = {tuple(k): (float(p), s) for k, (p, s) in dict(self.entries).items()}
        if not entries:
            raise ValueError("empty ensemble")
        object.__setattr__(self, "entries", MappingProxyType(entries))
        if len(set(registers)) != len(registers):
            raise LayoutError(f"duplicate register names {registers}")
        layout = next(iter(entries.values()))[1].layout
        clash = set(registers) & set(layout.labels)
        if clash:
            raise LayoutError(f"names used as both register and system: {sorted(clash)}")
        if not check:
            return
        total = 0.0
        for key, (p, state) in entries.items():
            if len(key) != len(registers):
                raise ValueError(f"key {key} does not match registers {registers}")
            if p < 0:
                raise ValueError(f"negative probability {p} for {key}")
            if state.layout != layout:
                raise LayoutError("all conditional states must share one layout")
            total += p
        if abs(total - 1.0) > TOL["tr"]:
            raise ValueError(f"probabilities sum to {total!r}")

    @property
    def layout(self) -> SystemLayout:
        return next(iter(self.entries.values()))[1].layout

    @property
    def systems(self) -> tuple[str, ...]:
        return self.layout.labels

    def items(self):
        return self.entries.items()

    def probabilities(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries.values()])

    def alphabet(self, register: str) -> list:
        i = self.registers.index(register)
        return sorted({k[i] for k in self.entries}, key=_sort_key)


def _sort_key(v):
    return (type(v).__name__, v)


def from_states(register: str, probs: Sequence[float], states: Sequence[State]) -> CQEnsemble:
    """Single-register ensemble labelled 0, 1, ..."""
    return CQEnsemble((register,), {(i,): (p, s) for i, (p, s) in enumerate(zip(probs, states))})


def quantum_only(state: State) -> CQEnsemble:
    return CQEnsemble((), {(): (1.0, state)})


# -- entropic quantities ------------------------------------------------------


def _split(e: CQEnsemble, names: Iterable[str]) -> tuple[list[str], list[str]]:
    regs, systems = [], []
    for name in names:
        if name in e.registers:
            regs.append(name)
        elif name in e.systems:
            systems.append(name)
        else:
            raise LayoutError(f"{name!r} is neither a register nor a system of the ensemble")
    return regs, systems


class _Reduced:
    """Conditional reduced states on fixed systems, computed once per query."""

    def __init__(self, e: CQEnsemble, systems: Sequence[str]):
        self.e = e
        self.systems = list(systems)
        self.items = []
        for key, (p, state) in e.items():
            mat = reduced_matrix(state, self.systems) if self.systems else None
            self.items.append((key, p, mat))

    def entropy(self, regs: Sequence[str]) -> float:
        idx = [self.e.registers.index(r) for r in regs]
        groups: dict[tuple, list] = defaultdict(lambda: [0.0, 0.0])
        for key, p, mat in self.items:
            g = groups[tuple(key[i] for i in idx)]
            g[0] += p
            if mat is not None:
                g[1] = g[1] + p * mat
        probs = np.array([g[0] for g in groups.values()])
        h = spectrum_entropy(probs / probs.sum())
        if not self.systems:
            return h
        total = probs.sum()
        for p_r, mat in groups.values():
            if p_r > 0:
                h += (p_r / total) * matrix_entropy(mat / p_r)
        return h

    def conditional(self, regs: Sequence[str]) -> float:
        """Average entropy of the systems given ``regs``."""
        idx = [self.e.registers.index(r) for r in regs]
        groups: dict[tuple, list] = defaultdict(lambda: [0.0, 0.0])
        for key, p, mat in self.items:
            g = groups[tuple(key[i] for i in idx)]
            g[0] += p
            g[1] = g[1] + p * mat
        total = sum(g[0] for g in groups.values())
        return sum((p_r / total) * matrix_entropy(mat / p_r) for p_r, mat in groups.values() if p_r > 0)


def entropy(e: CQEnsemble, names: Iterable[str]) -> float:
    regs, systems = _split(e, names)
    return _Reduced(e, systems).entropy(regs)


def _is_constant(e: CQEnsemble, regs: Sequence[str]) -> bool:
    idx = [e.registers.index(r) for r in regs]
    return len({tuple(k[i] for i in idx) for k, (p, _) in e.items() if p > 0}) <= 1


def mutual_information(e: CQEnsemble, part_a: Iterable[str], part_b: Iterable[str]) -> float:
    """``I(A;B) = S(A) + S(B) - S(AB)`` in bits."""
    part_a, part_b = list(part_a), list(part_b)
    if set(part_a) & set(part_b):
        raise ValueError(f"overlapping parts {sorted(set(part_a) & set(part_b))}")
    regs_a, sys_a = _split(e, part_a)
    regs_b, sys_b = _split(e, part_b)
    # a deterministic classical side carries no correlation; return exact zero
    if (not sys_a and _is_constant(e, regs_a)) or (not sys_b and _is_constant(e, regs_b)):
        return 0.0
    ra = _Reduced(e, sys_a)
    rb = _Reduced(e, sys_b)
    rab = _Reduced(e, sys_a + sys_b) if sys_a and sys_b else (ra if sys_a else rb)
    return ra.entropy(regs_a) + rb.entropy(regs_b) - rab.entropy(regs_a + regs_b)


def conditional_entropy(e: CQEnsemble, target: Iterable[str], given: Iterable[str]) -> float:
    """``S(target | given)`` for quantum ``target`` and classical ``given``."""
    target, given = list(target), list(given)
    for name in target:
        if name not in e.systems:
            raise ValueError(f"target {name!r} is not a quantum system")
    for name in given:
        if name not in e.registers:
            raise ValueError(f"conditioning on {name!r}, which is not a classical register")
    return _Reduced(e, target).conditional(given)


def monotone(e: CQEnsemble, w: str | Sequence[str], f: Sequence[str], c: Sequence[str]) -> float:
    """``I(W; C F) + S(C | W F)``: classical correlation plus conditional entanglement."""
    w = [w] if isinstance(w, str) else list(w)
    f, c = list(f), list(c)
    return mutual_information(e, w, c + f) + conditional_entropy(e, c, w + f)


def marginal(e: CQEnsemble, registers: Sequence[str], systems: Sequence[str]) -> dict:
    """Reduced ensemble ``r -> (p(r), rho_Q^r)`` on registers ``r`` and systems ``Q``.

    Conditional states are returned as plain normalized matrices.
    """
    idx = [e.registers.index(r) for r in registers]
    groups: dict[tuple, list] = defaultdict(lambda: [0.0, 0.0])
    for key, (p, state) in e.items():
        g = groups[tuple(key[i] for i in idx)]
        g[0] += p
        g[1] = g[1] + p * reduced_matrix(state, systems)
    return {k: (p, m / p) for k, (p, m) in groups.items() if p > 0}


def flatten(e: CQEnsemble) -> DensityMatrix:
    """Embed the registers as diagonal blocks; registers come first in the layout."""
    alphabets = [e.alphabet(r) for r in e.registers]
    layout = SystemLayout(tuple((r, len(a)) for r, a in zip(e.registers, alphabets))).concat(e.layout)
    dq = e.layout.dim
    dc = int(np.prod([len(a) for a in alphabets], dtype=np.int64)) if alphabets else 1
    out = np.zeros((dc * dq, dc * dq), dtype=complex)
    for key, (p, state) in e.items():
        idx = int(np.ravel_multi_index(tuple(a.index(v) for a, v in zip(alphabets, key)),
                                       [len(a) for a in alphabets])) if alphabets else 0
        mat = state.to_density().entries if isinstance(state, PureState) else state.entries
        out[idx * dq:(idx + 1) * dq, idx * dq:(idx + 1) * dq] += p * mat
    return DensityMatrix(layout, out, check=False)


# -- instruments and 1W-LOCC --------------------------------------------------


def _ops_tuple(ops) -> tuple[np.ndarray, ...]:
    return tuple(np.array(k, dtype=np.complex128) for k in ops)


@dataclass(frozen=True, eq=False)
class Instrument:
    """Labelled CP maps ``x -> {K_{x,j}}`` whose sum map is trace preserving."""

    outcomes: tuple

    def __post_init__(self):
        outcomes = tuple((label, _ops_tuple(ops)) for label, ops in self.outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        shapes = {k.shape for _, ops in outcomes for k in ops}
        if len(shapes) != 1:
            raise ValueError(f"instrument operators must share one shape, got {shapes}")
        d_in = shapes.pop()[1]
        s = sum(k.conj().T @ k for _, ops in outcomes for k in ops)
        defect = np.max(np.abs(s - np.eye(d_in)))
        if defect > TOL["tp"]:
            raise ValueError(f"instrument sum map is not trace preserving (defect {defect:.3e})")

    @property
    def dim_in(self) -> int:
        return self.outcomes[0][1][0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.outcomes[0][1][0].shape[0]

    @property
    def labels(self) -> list:
        return [label for label, _ in self.outcomes]


@dataclass(frozen=True, eq=False)
class OneWayLOCC:
    """Receiver operator ``V^x`` paired with sender isometry ``U^x`` per outcome ``x``."""

    outcomes: tuple

    def __post_init__(self):
        outcomes = tuple((x, np.array(u, dtype=complex), np.array(v, dtype=complex))
                         for x, u, v in self.outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        for x, u, _ in outcomes:
            defect = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1])))
            if defect > TOL["tp"]:
                raise ValueError(f"sender map for outcome {x!r} is not an isometry ({defect:.3e})")
        s = sum(v.conj().T @ v for _, _, v in outcomes)
        defect = np.max(np.abs(s - np.eye(s.shape[0])))
        if defect > TOL["tp"]:
            raise ValueError(f"receiver operators do not sum to the identity ({defect:.3e})")


def _prune_check(pruned: float) -> None:
    if pruned > 1e-9:
        raise ValueError(f"pruned probability mass {pruned:.3e} exceeds 1e-9")


def _default_out(e: CQEnsemble, on: Sequence[str], op: np.ndarray, out):
    if out is not None:
        return [(str(lb), int(d)) for lb, d in out]
    d_on = e.layout.dim_of(on)
    if op.shape[0] != d_on:
        raise LayoutError("output factors must be given when the operator changes dimension")
    return [e.layout.factors[e.layout.index(lb)] for lb in on]


def apply_instrument(inst: Instrument, e: CQEnsemble, on: Sequence[str] | str,
                     new_register: str, out=None) -> CQEnsemble:
    """Measure ``on`` with ``inst``; the outcome lands in ``new_register``.

    Branches whose probability falls below ``p_min`` are dropped; the total
    dropped mass must stay below 1e-9.
    """
    on = [on] if isinstance(on, str) else list(on)
    if e.layout.dim_of(on) != inst.dim_in:
        raise LayoutError(f"instrument input dim {inst.dim_in} != dim of {on}")
    out = _default_out(e, on, inst.outcomes[0][1][0], out)
    entries = {}
    pruned = 0.0
    for key, (p, state) in e.items():
        for label, ops in inst.outcomes:
            if len(ops) == 1 and isinstance(state, PureState):
                vec = apply_operator(state, ops[0], on, out)
                q = float(np.vdot(vec.amplitudes, vec.amplitudes).real)
                new = PureState(vec.layout, vec.amplitudes / np.sqrt(q), check=False) if q > 0 else None
            else:
                rho = state.to_density() if isinstance(state, PureState) else state
                parts = [apply_operator(rho, k, on, out) for k in ops]
                mat = sum(pt.entries for pt in parts)
                q = float(np.trace(mat).real)
                new = DensityMatrix(parts[0].layout, mat / q, check=False) if q > 0 else None
            if p * q < TOL["p_min"]:
                pruned += p * q
                continue
            entries[key + (label,)] = (p * q, new)
    _prune_check(pruned)
    return CQEnsemble(e.registers + (new_register,), entries)


def _as_pure(state: State) -> PureState:
    if isinstance(state, PureState):
        return state
    evals, evecs = np.linalg.eigh(state.entries)
    if evals[-1] < 1 - TOL["eq"]:
        raise ValueError(f"conditional state is not pure (largest eigenvalue {evals[-1]:.3e})")
    return PureState(state.layout, evecs[:, -1], check=False)


def apply_1wlocc(m: OneWayLOCC, e: CQEnsemble, a: Sequence[str] | str, b: Sequence[str] | str,
                 x_register: str, a_out=None, b_out=None) -> CQEnsemble:
    """Apply ``sum_x U^x (x) V^x (x) |x><x|`` to conditionally pure states.

    ``U^x`` acts on systems ``a`` (the sender), ``V^x`` on ``b`` (the
    receiver).  Output factors default to the input ones.
    """
    a = [a] if isinstance(a, str) else list(a)
    b = [b] if isinstance(b, str) else list(b)
    if set(a) & set(b):
        raise LayoutError("sender and receiver systems overlap")
    _, u0, v0 = m.outcomes[0]
    a_out = _default_out(e, a, u0, a_out)
    b_out = _default_out(e, b, v0, b_out)
    entries = {}
    pruned = 0.0
    for key, (p, state) in e.items():
        psi = _as_pure(state)
        for x, u, v in m.outcomes:
            phi = apply_operator(apply_operator(psi, u, a, a_out), v, b, b_out)
            q = float(np.vdot(phi.amplitudes, phi.amplitudes).real)
            if p * q < TOL["p_min"]:
                pruned += p * q
                continue
            entries[key + (x,)] = (p * q, PureState(phi.layout, phi.amplitudes / np.sqrt(q), check=False))
    _prune_check(pruned)
    return CQEnsemble(e.registers + (x_register,), entries)
