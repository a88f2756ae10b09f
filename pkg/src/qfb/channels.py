"""Quantum channels in Kraus form, their dilations and named constructors."""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass

import numpy as np

from .sampling import as_rng, haar_isometry
from .states import (
    DensityMatrix,
    HermitianObservable,
    LayoutError,
    PureState,
    SystemLayout,
    apply_operator,
)
from .tolerances import TOL


def _kraus_tuple(ops) -> tuple[np.ndarray, ...]:
    out = []
    for k in ops:
        arr = np.array(k, dtype=np.complex128)
        arr.flags.writeable = False
        out.append(arr)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    dim_in: int
    dim_out: int
    kraus: tuple
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "kraus", _kraus_tuple(self.kraus))
        if not self.kraus:
            raise ValueError("a channel needs at least one Kraus operator")
        for k in self.kraus:
            if k.shape != (self.dim_out, self.dim_in):
                raise ValueError(
                    f"Kraus operator of shape {k.shape}, expected {(self.dim_out, self.dim_in)}")
        object.__setattr__(self, "_stack", np.stack(self.kraus))
        if check and self.tp_defect() > TOL["tp"]:
            raise ValueError(f"Kraus operators are not trace preserving (defect {self.tp_defect():.3e})")

    def tp_defect(self) -> float:
        """Max-norm distance of sum K^dagger K from the identity."""
        k = self._stack
        s = np.einsum("kji,kjl->il", k.conj(), k)
        return float(np.max(np.abs(s - np.eye(self.dim_in))))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a bare ``dim_in x dim_in`` matrix."""
        k = self._stack
        return (k @ rho @ k.conj().transpose(0, 2, 1)).sum(axis=0)

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        k = self._stack
        return (k.conj().transpose(0, 2, 1) @ g @ k).sum(axis=0)


@dataclass(frozen=True, eq=False)
class ChannelMixture:
    """Convex combination ``sum_x w_x N^x`` of channels with common dimensions."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), ch) for w, ch in self.components)
        if not comps:
            raise ValueError("empty mixture")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > TOL["tr"]:
            raise ValueError(f"mixture weights {weights.tolist()} are not a distribution")
        d_in, d_out = comps[0][1].dim_in, comps[0][1].dim_out
        for _, ch in comps:
            if (ch.dim_in, ch.dim_out) != (d_in, d_out):
                raise ValueError("mixture components must share input and output dimensions")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def channels(self) -> list[KrausChannel]:
        return [ch for _, ch in self.components]

    @property
    def dim_in(self) -> int:
        return self.components[0][1].dim_in

    @property
    def dim_out(self) -> int:
        return self.components[0][1].dim_out

    def flatten(self) -> KrausChannel:
        """Single Kraus channel equal to the mixture (zero-weight parts dropped)."""
        ops = [math.sqrt(w) * k for w, ch in self.components if w > 0 for k in ch.kraus]
        return KrausChannel(self.dim_in, self.dim_out, ops)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(w * ch(rho) for w, ch in self.components)


@dataclass(frozen=True, eq=False)
class IsometricDilation:
    isometry: np.ndarray
    dim_in: int
    dim_out: int
    dim_env: int

    def __post_init__(self):
        v = np.array(self.isometry, dtype=np.complex128)
        v.flags.writeable = False
        object.__setattr__(self, "isometry", v)
        if v.shape != (self.dim_out * self.dim_env, self.dim_in):
            raise ValueError(f"isometry shape {v.shape} inconsistent with dimensions")
        defect = np.max(np.abs(v.conj().T @ v - np.eye(self.dim_in)))
        if defect > TOL["tp"]:
            raise ValueError(f"not an isometry (defect {defect:.3e})")


def as_kraus_channel(ch) -> KrausChannel:
    return ch.flatten() if isinstance(ch, ChannelMixture) else ch


def apply(ch: KrausChannel | ChannelMixture, rho, on: str, out_label: str | None = None) -> DensityMatrix:
    """Apply ``ch`` to subsystem ``on``, identity elsewhere.

    The output factor takes the label ``out_label`` (default: ``on``) and the
    position of ``on`` in the layout.
    """
    ch = as_kraus_channel(ch)
    if isinstance(rho, PureState):
        rho = rho.to_density()
    if rho.layout.dim_of(on) != ch.dim_in:
        raise LayoutError(f"channel input dim {ch.dim_in} != dim of {on!r} ({rho.layout.dim_of(on)})")
    out = [(out_label or on, ch.dim_out)]
    parts = [apply_operator(rho, k, on, out) for k in ch.kraus]
    total = sum(p.entries for p in parts)
    return DensityMatrix(parts[0].layout, total, check=False)


def stinespring(ch: KrausChannel, dim_env: int | None = None) -> IsometricDilation:
    """``V = sum_i K_i (x) |i>_E`` with output ordering (out, env).

    ``dim_env`` may exceed the number of Kraus operators; the extra
    environment levels are left unpopulated.
    """
    ch = as_kraus_channel(ch)
    n = len(ch.kraus)
    dim_env = n if dim_env is None else dim_env
    if dim_env < n:
        raise ValueError(f"dim_env {dim_env} smaller than the Kraus rank {n}")
    stack = np.zeros((ch.dim_out, dim_env, ch.dim_in), dtype=complex)
    stack[:, :n, :] = np.stack(ch.kraus, axis=1)
    return IsometricDilation(stack.reshape(ch.dim_out * dim_env, ch.dim_in), ch.dim_in, ch.dim_out, dim_env)


def adjoint_apply(ch: KrausChannel, g) -> HermitianObservable:
    """Heisenberg-picture map ``G -> sum_i K_i^dagger G K_i``."""
    ch = as_kraus_channel(ch)
    if isinstance(g, HermitianObservable):
        label = g.layout.labels[0] if len(g.layout.labels) == 1 else "in"
        mat = g.entries
    else:
        label, mat = "in", np.asarray(g, dtype=complex)
    if mat.shape != (ch.dim_out, ch.dim_out):
        raise LayoutError(f"observable of shape {mat.shape} on a channel with output dim {ch.dim_out}")
    res = ch.adjoint(mat)
    return HermitianObservable(SystemLayout.of((label, ch.dim_in)), 0.5 * (res + res.conj().T))


# -- named channels -----------------------------------------------------------


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel(d, d, [np.eye(d)])


def make_erasure(d: int, p: float) -> ChannelMixture:
    """Erasure channel as a mixture: keep (weight 1-p) or erase (weight p).

    The output has dimension ``d + 1``; the erasure flag is basis vector ``d``.
    """
    if d < 2:
        raise ValueError("erasure channel needs d >= 2")
    p = _check_prob("erasure probability", p)
    embed = np.zeros((d + 1, d))
    embed[:d, :d] = np.eye(d)
    erase = []
    for j in range(d):
        k = np.zeros((d + 1, d))
        k[d, j] = 1.0
        erase.append(k)
    return ChannelMixture(((1.0 - p, KrausChannel(d, d + 1, [embed])),
                           (p, KrausChannel(d, d + 1, erase))))


def depolarizing(d: int, q: float) -> KrausChannel:
    """``rho -> (1-q) rho + q I/d``."""
    q = _check_prob("depolarizing parameter", q)
    ops = []
    if q < 1:
        ops.append(math.sqrt(1 - q) * np.eye(d))
    if q > 0:
        for i in range(d):
            for j in range(d):
                k = np.zeros((d, d))
                k[i, j] = math.sqrt(q / d)
                ops.append(k)
    return KrausChannel(d, d, ops)


def dephasing(p: float) -> KrausChannel:
    """Qubit phase flip ``rho -> (1-p) rho + p Z rho Z``."""
    p = _check_prob("dephasing probability", p)
    return KrausChannel(2, 2, [math.sqrt(1 - p) * np.eye(2), math.sqrt(p) * np.diag([1.0, -1.0])])


def amplitude_damping(gamma: float) -> KrausChannel:
    gamma = _check_prob("damping rate", gamma)
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1 - gamma)]])
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel(2, 2, [k0, k1])


def truncated_pure_loss(eta: float, n_cutoff: int) -> KrausChannel:
    """Beamsplitter of transmissivity ``eta`` with a vacuum environment.

    Fock space truncated at ``n_cutoff`` photons (dimension ``n_cutoff + 1``).
    ``K_k |n> = sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k>``: k photons are lost
    to the environment.  Photon number never increases, so the truncated map
    is exactly trace preserving on the truncated input space.
    """
    eta = _check_prob("transmissivity", eta)
    if n_cutoff < 0:
        raise ValueError("n_cutoff must be non-negative")
    d = n_cutoff + 1
    ops = []
    for k in range(d):
        op = np.zeros((d, d))
        for n in range(k, d):
            op[n - k, n] = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        if np.any(op):
            ops.append(op)
    return KrausChannel(d, d, ops)


def number_operator(dim: int, label: str = "A") -> HermitianObservable:
    return HermitianObservable(SystemLayout.of((label, dim)), np.diag(np.arange(dim, dtype=float)))


_NAMED = {
    "identity": lambda d: identity_channel(int(d)),
    "depolarizing": lambda d, q: depolarizing(int(d), q),
    "dephasing": dephasing,
    "amplitude_damping": amplitude_damping,
    "truncated_pure_loss": lambda eta, n_cutoff: truncated_pure_loss(eta, int(n_cutoff)),
}


def make_named(name: str, **params) -> KrausChannel:
    """Build a named channel, e.g. ``make_named("depolarizing", d=2, q=0.5)``."""
    try:
        factory = _NAMED[name]
    except KeyError:
        raise ValueError(f"unknown channel {name!r}; choose from {sorted(_NAMED)}") from None
    return factory(**params)


def random_channel(dim_in: int, dim_out: int, dim_env: int, seed) -> KrausChannel:
    """Kraus operators cut from a Haar isometry ``C^dim_in -> C^dim_out (x) C^dim_env``."""
    for name, d in (("dim_in", dim_in), ("dim_out", dim_out), ("dim_env", dim_env)):
        if d < 1:
            raise ValueError(f"{name} must be >= 1")
    v = haar_isometry(dim_out * dim_env, dim_in, as_rng(seed))
    v = v.reshape(dim_out, dim_env, dim_in)
    return KrausChannel(dim_in, dim_out, [v[:, e, :] for e in range(dim_env)])


def fock_leakage(ch: KrausChannel, rho: np.ndarray) -> float:
    """Probability weight lost by ``ch`` on input ``rho`` (trace defect)."""
    return float(1.0 - np.trace(ch(rho)).real)
