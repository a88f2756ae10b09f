"""Maximum (average) output entropy by Frank-Wolfe, plus the rate formula.

The objective ``rho -> sum_x p_x S(N^x(rho))`` is concave, so conditional
gradient ascent over the energy-capped state space converges to the global
maximum; the linear-maximization step also yields a duality-gap estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelMixture, KrausChannel
from .states import DensityMatrix, HermitianObservable, SystemLayout, matrix_entropy
from .tolerances import TOL

GOLDEN = (math.sqrt(5) - 1) / 2


class InfeasibleConstraint(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EnergyConstraint:
    """``Tr{H rho} <= budget``, or no constraint at all."""

    hamiltonian: np.ndarray | None = None
    budget: float = math.inf
    unconstrained: bool = True

    def __post_init__(self):
        if self.unconstrained:
            return
        h = self.hamiltonian
        if isinstance(h, HermitianObservable):
            h = h.entries
        h = np.array(h, dtype=complex)
        h = 0.5 * (h + h.conj().T)
        object.__setattr__(self, "hamiltonian", h)
        lam_min = np.linalg.eigvalsh(h)[0]
        if self.budget < lam_min - TOL["eq"]:
            raise InfeasibleConstraint(
                f"energy budget {self.budget} is below the ground energy {lam_min}")

    @classmethod
    def none(cls) -> "EnergyConstraint":
        return cls()

    @classmethod
    def of(cls, hamiltonian, budget: float) -> "EnergyConstraint":
        return cls(hamiltonian, float(budget), False)

    def energy(self, rho: np.ndarray) -> float:
        if self.unconstrained:
            return 0.0
        return float(np.trace(self.hamiltonian @ rho).real)

    def slack(self, rho: np.ndarray) -> float | None:
        return None if self.unconstrained else self.budget - self.energy(rho)


@dataclass(frozen=True, eq=False)
class BoundReport:
    value: float
    optimizer: DensityMatrix
    iterations: int
    duality_gap_estimate: float
    constraint_slack: float | None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        diag = np.real(np.diag(self.optimizer.entries))
        return {
            "value_bits": float(self.value),
            "iterations": int(self.iterations),
            "gap": float(self.duality_gap_estimate),
            "optimizer_diag": [float(x) for x in diag],
            "constraint_slack": None if self.constraint_slack is None else float(self.constraint_slack),
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_json(cls, data: dict) -> "BoundReport":
        diag = np.asarray(data["optimizer_diag"], dtype=float)
        optimizer = DensityMatrix(SystemLayout.of(("A", diag.size)), np.diag(diag), check=False)
        return cls(float(data["value_bits"]), optimizer, int(data["iterations"]), float(data["gap"]),
                   data["constraint_slack"], dict(data.get("diagnostics", {})))


# -- objective and gradient ---------------------------------------------------


def _components(ch) -> tuple[list[KrausChannel], np.ndarray]:
    if isinstance(ch, ChannelMixture):
        return ch.channels, ch.weights
    return [ch], np.ones(1)


def avg_output_entropy(ch: KrausChannel | ChannelMixture, rho: np.ndarray) -> float:
    """``sum_x p_x S(N^x(rho))``; for a plain channel just ``S(N(rho))``."""
    rho = rho.entries if isinstance(rho, DensityMatrix) else rho
    chans, weights = _components(ch)
    return float(sum(w * matrix_entropy(c(rho)) for c, w in zip(chans, weights) if w > 0))


def _log2_clipped(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    logs = np.log2(np.maximum(evals, TOL["log"]))
    return (evecs * logs) @ evecs.conj().T


def entropy_gradient(ch: KrausChannel | ChannelMixture, rho: np.ndarray) -> np.ndarray:
    """Gradient of the objective at ``rho``, as a Hermitian matrix.

    ``-sum_x p_x N^x†(log2 N^x(rho)) - I/ln 2``; the identity term does not
    affect trace-preserving directions but makes directional derivatives exact.
    """
    rho = rho.entries if isinstance(rho, DensityMatrix) else rho
    chans, weights = _components(ch)
    d = rho.shape[0]
    g = -np.eye(d) / math.log(2)
    for c, w in zip(chans, weights):
        if w > 0:
            g = g - w * c.adjoint(_log2_clipped(c(rho)))
    return 0.5 * (g + g.conj().T)


# -- linear maximization over the feasible set --------------------------------


def _top(m: np.ndarray) -> np.ndarray:
    _, evecs = np.linalg.eigh(m)
    return evecs[:, -1]


def _energy_of(h: np.ndarray, v: np.ndarray) -> float:
    return float(np.vdot(v, h @ v).real)


def linear_maximizer(g: np.ndarray, ec: EnergyConstraint) -> np.ndarray:
    """State ``sigma`` maximizing ``Tr{G sigma}`` subject to the energy cap.

    Extreme points under one linear constraint have rank at most two: the top
    eigenvector of ``G - lam H`` for a bisected multiplier ``lam``, mixed with
    its neighbour across the energy budget.
    """
    v = _top(g)
    if ec.unconstrained:
        return np.outer(v, v.conj())
    h, budget = ec.hamiltonian, ec.budget
    if _energy_of(h, v) <= budget:
        return np.outer(v, v.conj())
    h_evals, h_evecs = np.linalg.eigh(h)
    if budget <= h_evals[0] + 1e-12:
        ground = h_evecs[:, h_evals <= h_evals[0] + 1e-12]
        u = ground @ _top(ground.conj().T @ g @ ground)
        return np.outer(u, u.conj())
    scale = max(np.max(np.abs(g)), 1.0) / max(h_evals[-1] - h_evals[0], 1e-300)
    lam_lo, lam_hi = 0.0, scale
    v_lo, v_hi = v, _top(g - lam_hi * h)
    for _ in range(200):
        if _energy_of(h, v_hi) <= budget:
            break
        lam_lo, v_lo = lam_hi, v_hi
        lam_hi *= 2.0
        v_hi = _top(g - lam_hi * h)
    for _ in range(200):
        if lam_hi - lam_lo <= 1e-13 * max(lam_hi, 1.0):
            break
        mid = 0.5 * (lam_lo + lam_hi)
        vm = _top(g - mid * h)
        if _energy_of(h, vm) > budget:
            lam_lo, v_lo = mid, vm
        else:
            lam_hi, v_hi = mid, vm
    e_lo, e_hi = _energy_of(h, v_lo), _energy_of(h, v_hi)
    t = 0.0 if e_lo <= e_hi else min(max((budget - e_hi) / (e_lo - e_hi), 0.0), 1.0)
    return t * np.outer(v_lo, v_lo.conj()) + (1 - t) * np.outer(v_hi, v_hi.conj())


def _initial_state(d: int, ec: EnergyConstraint) -> np.ndarray:
    rho = np.eye(d, dtype=complex) / d
    if ec.unconstrained or ec.energy(rho) <= ec.budget:
        return rho
    h_evals, h_evecs = np.linalg.eigh(ec.hamiltonian)
    ground = h_evecs[:, h_evals <= h_evals[0] + 1e-12]
    proj = ground @ ground.conj().T / ground.shape[1]
    e_mix, e_gnd = ec.energy(rho), ec.energy(proj)
    s = (ec.budget - e_gnd) / (e_mix - e_gnd)
    s = min(max(s, 0.0), 1.0)
    return s * rho + (1 - s) * proj


def _golden_max(f, hi: float = 1.0, tol: float = 1e-10) -> tuple[float, float]:
    """Maximize a concave ``f`` on ``[0, hi]`` by golden-section search."""
    a, b = 0.0, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(hi, 1.0):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = max((fc, c), (fd, d), (f(hi), hi), (f(0.0), 0.0))
    return best[1], best[0]


def _inner(g: np.ndarray, m: np.ndarray) -> float:
    return float(np.real(np.vdot(g, m)))


def _frank_wolfe(ch, ec: EnergyConstraint, max_iter: int, gap_tol: float) -> BoundReport:
    """Away-step Frank-Wolfe with exact (golden-section) line search.

    The iterate is kept as a convex combination of atoms so weight can be
    moved off poor atoms; plain Frank-Wolfe stalls near interior optima.
    """
    d = ch.dim_in
    if not ec.unconstrained and ec.hamiltonian.shape != (d, d):
        raise ValueError(f"Hamiltonian shape {ec.hamiltonian.shape} does not match input dim {d}")
    rho = _initial_state(d, ec)
    atoms = [rho.copy()]
    weights = [1.0]
    value = avg_output_entropy(ch, rho)
    it = 0
    for it in range(1, max_iter + 1):
        g = entropy_gradient(ch, rho)
        sigma = linear_maximizer(g, ec)
        fw_gap = _inner(g, sigma - rho)
        if fw_gap <= gap_tol:
            break
        scores = [_inner(g, a) for a in atoms]
        j = int(np.argmin(scores))
        away_gap = _inner(g, rho) - scores[j]
        if fw_gap >= away_gap or weights[j] >= 1.0:
            direction, hi, away = sigma - rho, 1.0, False
        else:
            direction, hi, away = rho - atoms[j], weights[j] / (1.0 - weights[j]), True
        gamma, new_value = _golden_max(lambda t: avg_output_entropy(ch, rho + t * direction), hi)
        if gamma == 0.0 or new_value <= value:
            break
        if away:
            weights = [(1.0 + gamma) * w for w in weights]
            weights[j] -= gamma
            if gamma >= hi or weights[j] <= 1e-15:
                del atoms[j], weights[j]
        elif gamma >= 1.0:
            atoms, weights = [sigma], [1.0]
        else:
            weights = [(1.0 - gamma) * w for w in weights] + [gamma]
            atoms.append(sigma)
        rho = rho + gamma * direction
        rho = 0.5 * (rho + rho.conj().T)
        value = new_value
    g = entropy_gradient(ch, rho)
    gap = max(_inner(g, linear_maximizer(g, ec) - rho), 0.0)
    optimizer = DensityMatrix(SystemLayout.of(("A", d)), rho, check=False)
    return BoundReport(value, optimizer, it, gap, ec.slack(rho))


def max_output_entropy(ch: KrausChannel, ec: EnergyConstraint | None = None, *,
                       max_iter: int = 500, gap_tol: float = 1e-6) -> BoundReport:
    """Energy-constrained maximum output entropy of ``ch`` (bits per use)."""
    if isinstance(ch, ChannelMixture):
        ch = ch.flatten()
    return _frank_wolfe(ch, ec or EnergyConstraint.none(), max_iter, gap_tol)


def max_avg_output_entropy(mix: ChannelMixture, ec: EnergyConstraint | None = None, *,
                           max_iter: int = 500, gap_tol: float = 1e-6) -> BoundReport:
    """Energy-constrained maximum of ``sum_x p_x S(N^x(rho))``."""
    if isinstance(mix, KrausChannel):
        mix = ChannelMixture(((1.0, mix),))
    return _frank_wolfe(mix, ec or EnergyConstraint.none(), max_iter, gap_tol)


def binary_entropy(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"binary_entropy needs a probability, got {eps}")
    if eps in (0.0, 1.0):
        return 0.0
    return -eps * math.log2(eps) - (1 - eps) * math.log2(1 - eps)


def g_function(x: float) -> float:
    """Entropy in bits of a thermal bosonic state with mean photon number ``x``."""
    if x < 0:
        raise ValueError(f"g(x) needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def feedback_rate_bound(n: int, epsilon: float, bound_per_use: float) -> float:
    """Largest ``log2 M`` allowed for ``n`` uses at error ``epsilon``.

    From ``(1 - eps) log2 M <= n * bound + h2(eps)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    return (n * bound_per_use + binary_entropy(epsilon)) / (1.0 - epsilon)


def fock_tail_mass(report: BoundReport) -> float:
    """Population of the highest Fock level in the optimizer."""
    return float(np.real(report.optimizer.entries[-1, -1]))
