"""Dense states on labeled tensor-product spaces and the entropic primitives.

Every state carries a :class:`SystemLayout`, an ordered list of
``(label, dim)`` factors.  Operations address subsystems by label and keep
the remaining factors in layout order; nothing is permuted implicitly.
All logarithms are base 2.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .tolerances import TOL


class LayoutError(ValueError):
    """Raised for unknown, duplicated or mismatched subsystem labels."""


@dataclass(frozen=True)
class SystemLayout:
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout {labels}")
        for label, dim in factors:
            if dim < 1:
                raise LayoutError(f"factor {label!r} has non-positive dimension {dim}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "SystemLayout":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def dim_of(self, labels: str | Iterable[str]) -> int:
        if isinstance(labels, str):
            labels = [labels]
        return int(np.prod([self.factors[self.index(lb)][1] for lb in labels], dtype=np.int64))

    def concat(self, other: "SystemLayout") -> "SystemLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"label collision: {sorted(clash)}")
        return SystemLayout(self.factors + other.factors)

    def select(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout of ``labels``, kept in this layout's order."""
        keep = set(labels)
        for label in keep:
            self.index(label)
        return SystemLayout(tuple(f for f in self.factors if f[0] in keep))

    def without(self, labels: Iterable[str]) -> "SystemLayout":
        drop = set(labels)
        for label in drop:
            self.index(label)
        return SystemLayout(tuple(f for f in self.factors if f[0] not in drop))


def _as_layout(layout) -> SystemLayout:
    if isinstance(layout, SystemLayout):
        return layout
    return SystemLayout(tuple(layout))


def _check_hermitian(m: np.ndarray, what: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {m.shape}")
    defect = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if defect > TOL["herm"]:
        raise ValueError(f"{what} is not Hermitian (defect {defect:.3e})")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix on ``layout``.

    Pass ``check=False`` to skip the eigenvalue validation when the caller
    constructs the matrix from operations already known to preserve it.
    """

    layout: SystemLayout
    entries: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "layout", _as_layout(self.layout))
        object.__setattr__(self, "entries", _frozen(self.entries))
        d = self.layout.dim
        if self.entries.shape != (d, d):
            raise LayoutError(f"entries shape {self.entries.shape} does not match layout dim {d}")
        if check:
            _check_hermitian(self.entries, "density matrix")
            tr = np.trace(self.entries).real
            if abs(tr - 1.0) > TOL["tr"]:
                raise ValueError(f"density matrix trace {tr!r} differs from 1")
            lam_min = np.linalg.eigvalsh(self.entries)[0]
            if lam_min < -TOL["psd"]:
                raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3e}")

    @property
    def dim(self) -> int:
        return self.layout.dim

    @classmethod
    def maximally_mixed(cls, layout) -> "DensityMatrix":
        layout = _as_layout(layout)
        return cls(layout, np.eye(layout.dim) / layout.dim)

    @classmethod
    def from_diag(cls, layout, probs) -> "DensityMatrix":
        return cls(layout, np.diag(np.asarray(probs, dtype=float)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.entries, self.entries)))


@dataclass(frozen=True, eq=False)
class PureState:
    layout: SystemLayout
    amplitudes: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "layout", _as_layout(self.layout))
        amps = _frozen(np.ravel(self.amplitudes))
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (self.layout.dim,):
            raise LayoutError(f"amplitude length {amps.size} does not match layout dim {self.layout.dim}")
        if check:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > TOL["tr"]:
                raise ValueError(f"pure state has norm {norm!r}")

    @property
    def dim(self) -> int:
        return self.layout.dim

    @classmethod
    def basis(cls, layout, index: int | Sequence[int]) -> "PureState":
        """Computational basis vector; ``index`` is flat or one digit per factor."""
        layout = _as_layout(layout)
        if not isinstance(index, (int, np.integer)):
            index = int(np.ravel_multi_index(tuple(index), layout.dims))
        amps = np.zeros(layout.dim, dtype=complex)
        amps[index] = 1.0
        return cls(layout, amps)

    def to_density(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(self.layout, np.outer(v, v.conj()), check=False)

    def purity(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class HermitianObservable:
    layout: SystemLayout
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "layout", _as_layout(self.layout))
        object.__setattr__(self, "entries", _frozen(self.entries))
        d = self.layout.dim
        if self.entries.shape != (d, d):
            raise LayoutError(f"entries shape {self.entries.shape} does not match layout dim {d}")
        _check_hermitian(self.entries, "observable")


State = Union[DensityMatrix, PureState]


# -- tensor-index helpers -----------------------------------------------------


def _positions(layout: SystemLayout, labels: Iterable[str]) -> list[int]:
    return [layout.index(label) for label in labels]


def apply_to_rows(arr: np.ndarray, dims: Sequence[int], on: Sequence[int], op: np.ndarray,
                  out_dims: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """Apply ``op`` to the tensor factors ``on`` of the row index of ``arr``.

    ``arr`` has shape ``(prod(dims),)`` or ``(prod(dims), k)``.  The output
    factors replace the ``on`` factors at the position of the first of them.
    Returns the new array and its row dimensions.
    """
    dims = list(dims)
    on = list(on)
    rest = [i for i in range(len(dims)) if i not in on]
    pos = sum(1 for i in rest if i < min(on)) if on else 0
    trailing = arr.shape[1:]
    t = arr.reshape(dims + list(trailing))
    t = np.moveaxis(t, on, list(range(len(on))))
    d_on = int(np.prod([dims[i] for i in on], dtype=np.int64))
    t = t.reshape((d_on, -1))
    t = op @ t
    out_dims = list(out_dims)
    rest_dims = [dims[i] for i in rest]
    t = t.reshape(out_dims + rest_dims + list(trailing))
    t = np.moveaxis(t, list(range(len(out_dims))), list(range(pos, pos + len(out_dims))))
    new_dims = rest_dims[:pos] + out_dims + rest_dims[pos:]
    d_new = int(np.prod(new_dims, dtype=np.int64))
    return t.reshape((d_new,) + tuple(trailing)), new_dims


def _replace_factors(layout: SystemLayout, on: Sequence[str], out) -> SystemLayout:
    on_set = set(on)
    first = min(layout.index(lb) for lb in on)
    rest = [f for f in layout.factors if f[0] not in on_set]
    pos = sum(1 for i, f in enumerate(layout.factors) if f[0] not in on_set and i < first)
    return SystemLayout(tuple(rest[:pos]) + tuple(out) + tuple(rest[pos:]))


def apply_operator(state: State, op: np.ndarray, on: str | Sequence[str], out=None) -> State:
    """Apply the linear map ``op`` to subsystems ``on`` of ``state``.

    ``out`` is a sequence of ``(label, dim)`` pairs for the output factors;
    by default the input factors are reused, which requires a square ``op``.
    For a density matrix the result is ``op rho op^dagger``; for a pure state
    ``op psi``.  The result is not renormalized and not validated.
    """
    if isinstance(on, str):
        on = [on]
    layout = state.layout
    pos = _positions(layout, on)
    d_on = int(np.prod([layout.dims[i] for i in pos], dtype=np.int64))
    op = np.asarray(op, dtype=complex)
    if op.shape[1] != d_on:
        raise LayoutError(f"operator with {op.shape[1]} columns applied to subsystems of dim {d_on}")
    if out is None:
        if op.shape[0] != d_on:
            raise LayoutError("non-square operator needs explicit output factors")
        out = [layout.factors[i] for i in pos]
    out = [(str(lb), int(d)) for lb, d in out]
    out_dims = [d for _, d in out]
    if int(np.prod(out_dims, dtype=np.int64)) != op.shape[0]:
        raise LayoutError(f"operator with {op.shape[0]} rows does not match output factors {out}")
    new_layout = _replace_factors(layout, on, out)
    if isinstance(state, PureState):
        vec, _ = apply_to_rows(state.amplitudes, layout.dims, pos, op, out_dims)
        return PureState(new_layout, vec, check=False)
    x, _ = apply_to_rows(state.entries, layout.dims, pos, op, out_dims)
    z, _ = apply_to_rows(x.conj().T, layout.dims, pos, op, out_dims)
    return DensityMatrix(new_layout, z.conj().T, check=False)


def reduced_matrix(state: State, keep: Iterable[str]) -> np.ndarray:
    """Reduced density matrix (as an array) on ``keep``, in layout order."""
    layout = state.layout
    keep_pos = sorted(_positions(layout, keep))
    dims = list(layout.dims)
    rest = [i for i in range(len(dims)) if i not in keep_pos]
    dk = int(np.prod([dims[i] for i in keep_pos], dtype=np.int64))
    if isinstance(state, PureState):
        t = state.amplitudes.reshape(dims) if dims else state.amplitudes
        t = np.moveaxis(t, keep_pos, list(range(len(keep_pos)))).reshape(dk, -1)
        return t @ t.conj().T
    n = len(dims)
    t = state.entries.reshape(dims + dims)
    t = np.moveaxis(t, keep_pos + [n + i for i in keep_pos],
                    list(range(2 * len(keep_pos))))
    dr = int(np.prod([dims[i] for i in rest], dtype=np.int64))
    t = t.reshape(dk, dk, dr, dr)
    return np.einsum("abjj->ab", t)


# -- public operations --------------------------------------------------------


def tensor(a: State, b: State) -> State:
    """Kronecker product of two states of the same kind on disjoint labels."""
    layout = a.layout.concat(b.layout)
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(layout, np.kron(a.amplitudes, b.amplitudes), check=False)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(layout, np.kron(a.entries, b.entries), check=False)
    raise TypeError("tensor() needs two states of the same kind")


def partial_trace(rho: State, discard: str | Iterable[str]) -> DensityMatrix:
    if isinstance(discard, str):
        discard = [discard]
    discard = set(discard)
    layout = rho.layout
    for label in discard:
        layout.index(label)
    if discard >= set(layout.labels):
        raise LayoutError("cannot trace out every subsystem")
    keep = [lb for lb in layout.labels if lb not in discard]
    return DensityMatrix(layout.select(keep), reduced_matrix(rho, keep), check=False)


def eigh(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with eigenvalues in descending order."""
    entries = m.entries if hasattr(m, "entries") else np.asarray(m, dtype=complex)
    _check_hermitian(entries, "matrix")
    evals, evecs = np.linalg.eigh(entries)
    return evals[::-1].copy(), evecs[:, ::-1].copy()


def spectrum_entropy(evals: np.ndarray) -> float:
    """Shannon entropy in bits of a (near-)probability vector.

    Entries in ``[-psd, clip]`` count as zero; anything more negative is an
    error rather than roundoff.
    """
    evals = np.asarray(evals, dtype=float)
    if evals.size and evals.min() < -TOL["psd"]:
        raise ValueError(f"negative eigenvalue {evals.min():.3e} below tolerance")
    p = evals[evals > TOL["clip"]]
    if p.size == 0:
        return 0.0
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def matrix_entropy(m: np.ndarray) -> float:
    return spectrum_entropy(np.linalg.eigvalsh(m))


def von_neumann_entropy(rho: State) -> float:
    if isinstance(rho, PureState):
        return 0.0
    return matrix_entropy(rho.entries)


def purify(rho: DensityMatrix, reference_label: str) -> PureState:
    """Canonical purification ``sum_i sqrt(l_i) |v_i>|i>``.

    The reference factor has the same dimension as ``rho`` so that
    purifications of states on a common layout share a common layout.
    """
    if reference_label in rho.layout.labels:
        raise LayoutError(f"reference label {reference_label!r} already in use")
    evals, evecs = eigh(rho)
    weights = np.sqrt(np.clip(evals, 0.0, None))
    d = rho.dim
    # amplitude of |j>|i> is sqrt(l_i) v_i[j]
    amps = (evecs * weights[None, :]).reshape(d * d)
    amps = amps / np.linalg.norm(amps)
    layout = rho.layout.concat(SystemLayout.of((reference_label, d)))
    return PureState(layout, amps)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.layout != sigma.layout:
        raise LayoutError("trace_distance needs states on the same layout")
    diff = rho.entries - sigma.entries
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def expectation(rho: State, h: HermitianObservable) -> float:
    if rho.layout != h.layout:
        raise LayoutError("expectation needs state and observable on the same layout")
    if isinstance(rho, PureState):
        v = rho.amplitudes
        val = np.vdot(v, h.entries @ v)
    else:
        val = np.trace(h.entries @ rho.entries)
    if abs(val.imag) > TOL["herm"] * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def purity(state: State) -> float:
    return state.purity()
