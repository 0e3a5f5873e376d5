"""Free and basis-changed Pruefer phases and the per-block phase-shift maps.

Phase-shift maps are evaluated in the orientation-normalized frame of the
normal form: positive rotation always means moving into the spectrum for
energies above a lower band edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import polar

from . import _kernels
from .model import DisorderWord, ModelEnsemble, PeriodicBlock
from .normal_form import BandEdgeNormalForm
from .spectral import bands_below

HALF_PI = 0.5 * math.pi


class SingularMatrix(ValueError):
    pass


class WordTooShort(ValueError):
    pass


@dataclass(frozen=True)
class PruferState:
    theta_lift: float
    log_amplitude: float
    site_n: int


@dataclass(frozen=True, eq=False)
class PruferTrajectory:
    theta: np.ndarray
    log_amplitude: np.ndarray

    def __len__(self):
        return len(self.theta)

    def states(self) -> list[PruferState]:
        return [PruferState(float(a), float(b), n) for n, (a, b) in enumerate(zip(self.theta, self.log_amplitude))]


def periodic_coefficients(block: PeriodicBlock, steps: int) -> tuple[np.ndarray, np.ndarray]:
    return np.resize(np.array(block.hoppings), steps), np.resize(np.array(block.potentials), steps)


def free_prufer_evolve(t, v, energy: float, theta0: float, steps: int) -> PruferTrajectory:
    """Free Pruefer phases theta(0..steps) for per-site coefficients t(n), v(n).

    (R cos theta, R sin theta) tracks (t(n) u(n), u(n-1)) with
    (t(0) u(0), u(-1)) = (cos theta0, sin theta0); consecutive phases differ
    by an amount in (-pi/2, 3pi/2).
    """
    t = np.ascontiguousarray(t, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if len(t) < steps or len(v) < steps:
        raise ValueError("coefficient stream shorter than the number of steps")
    theta = np.empty(steps + 1)
    logr = np.empty(steps + 1)
    _kernels.free_prufer(t, v, float(energy), float(theta0), int(steps), theta, logr)
    return PruferTrajectory(theta, logr)


def free_prufer_final(t, v, energy: float, theta0: float, steps: int | None = None) -> tuple[float, float]:
    """Final (phase lift, log amplitude) without storing the trajectory."""
    t = np.ascontiguousarray(t, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    steps = len(t) if steps is None else steps
    return _kernels.free_prufer(t, v, float(energy), float(theta0), int(steps), np.empty(1), np.empty(1))


def _polar_parts(M: np.ndarray):
    """M = U P with U orthogonal, P positive definite; returns (U, A, B, Q)."""
    U, P = polar(M)
    return U, 0.5 * (P[0, 0] + P[1, 1]), 0.5 * (P[0, 0] - P[1, 1]), 0.5 * (P[0, 1] + P[1, 0])


def _displacement(theta, A, B, Q):
    """Continuous angle from x(theta) to P x(theta); lies in (-pi/2, pi/2)."""
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    return np.arctan2(Q * c2 - B * s2, A + B * c2 + Q * s2)


@dataclass(frozen=True, eq=False)
class AngleLift:
    """Continuous lift of theta -> arg(M (cos theta, sin theta)) with value at 0 in [-pi, pi)."""
    matrix: np.ndarray
    sign: int
    offset: float
    A: float
    B: float
    Q: float

    @classmethod
    def of(cls, M) -> "AngleLift":
        M = np.asarray(M, dtype=float)
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if det == 0 or not np.isfinite(det):
            raise SingularMatrix(f"det = {det}")
        U, A, B, Q = _polar_parts(M)
        sign = 1 if det > 0 else -1
        # U is a rotation by phi (sign +1) or a reflection about the axis at angle phi/2
        phi = math.atan2(U[1, 0], U[0, 0])
        m0 = phi + sign * _displacement(0.0, A, B, Q)
        offset = phi + 2 * math.pi * math.floor((m0 + math.pi) / (2 * math.pi)) * -1
        return cls(M, sign, offset, A, B, Q)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.offset + self.sign * (theta + _displacement(theta, self.A, self.B, self.Q))

    def derivative_bounds(self) -> tuple[float, float]:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return float(s[1] / s[0]), float(s[0] / s[1])

    def inverse(self, psi: float) -> float:
        """Lift value theta with self(theta) == psi (orientation-preserving only)."""
        if self.sign < 0:
            raise ValueError("inverse lift implemented for det > 0")
        inv = AngleLift.of(np.linalg.inv(self.matrix))
        theta = float(inv(psi))
        theta += math.pi * round((psi - float(self(theta))) / math.pi)
        return theta


def angle_lift_m(M, theta):
    return AngleLift.of(M)(theta)


@dataclass(frozen=True, eq=False)
class PhaseShiftMap:
    """S(theta) = theta + d(theta) + phi + k pi for one block at one energy offset.

    ``subtract`` is the integer j with L N_sigma(E_nu) = j, removed as j pi.
    """
    sigma: int
    epsilon: float
    matrix: np.ndarray
    A: float
    B: float
    Q: float
    phi: float
    k: int
    subtract: int

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta + _displacement(theta, self.A, self.B, self.Q) + self.phi + self.k * math.pi


def modified_phase_lift(nf: BandEdgeNormalForm, epsilon: float) -> AngleLift:
    """Map from free Pruefer phase to the modified phase at offset epsilon."""
    return AngleLift.of(np.linalg.inv(nf.oriented_basis(epsilon)))


def edge_label(nf: BandEdgeNormalForm, sigma: int, block: PeriodicBlock) -> int:
    """Integer L N_sigma(E_nu)."""
    if sigma == nf.edge.owner:
        return int(nf.edge.ids_at_edge * block.period)
    return bands_below(block, nf.edge.energy)


def phase_shift_faithful(nf: BandEdgeNormalForm, block: PeriodicBlock, subtract: int, epsilon: float,
                         theta: float) -> float:
    """S via the definition: conjugate the per-site free Pruefer lift by the
    oriented basis change, then remove subtract * pi.

    The modified vector is M'^-1 (t u(n), u(n-1)), so that the block action in
    modified coordinates is M'^-1 T M'.
    """
    m = modified_phase_lift(nf, epsilon)
    psi0 = m.inverse(theta)
    t, v = periodic_coefficients(block, block.period)
    lift, _ = free_prufer_final(t, v, nf.edge.energy + epsilon, psi0)
    return float(m(lift)) - subtract * math.pi


def build_phase_map(nf: BandEdgeNormalForm, sigma: int, block: PeriodicBlock, epsilon: float) -> PhaseShiftMap:
    G = nf.conjugated(epsilon, block)
    U, A, B, Q = _polar_parts(G)
    phi_u = math.atan2(U[1, 0], U[0, 0])
    subtract = edge_label(nf, sigma, block)
    exact = phase_shift_faithful(nf, block, subtract, epsilon, 0.0)
    raw = phi_u + float(_displacement(0.0, A, B, Q))
    turns = (exact - raw) / math.pi
    k = round(turns)
    if abs(turns - k) > 1e-6:
        raise RuntimeError(f"lift mismatch {turns - k:.3g} half-turns for block {sigma}")
    shift = math.floor((phi_u + HALF_PI) / math.pi)
    return PhaseShiftMap(sigma, epsilon, G, A, B, Q, phi_u - shift * math.pi, k + shift, subtract)


def phase_shift(psmap: PhaseShiftMap, theta):
    return psmap(theta)


def closed_form_shift(nf: BandEdgeNormalForm, epsilon: float, theta):
    """Owner-block phase shift from the tangent/cotangent formula.

    In the oriented frame (o = orientation sign)

        tan S = (-o kappa cos t + lam sin t) / (lam (1 - kappa) cos t + o sin t).

    The branch is pinned by S(0) = arctan(-o kappa / (lam (1 - kappa))) (valid
    for kappa < 1, continuous from the parabolic fixed point) and by
    monotonicity: S(t) - S(0) has the sign of t for |t| < pi.
    """
    k = nf.kappa(epsilon)
    if not k < 1:
        raise ValueError("closed form branch pinned only for kappa < 1")
    lam, o = nf.lam, nf.orientation
    theta = np.asarray(theta, dtype=float)
    turns = np.floor((theta + HALF_PI) / math.pi)
    t = theta - turns * math.pi
    num = -o * k * np.cos(t) + lam * np.sin(t)
    den = lam * (1 - k) * np.cos(t) + o * np.sin(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        use_tan = np.abs(den) >= np.abs(num)
        base = np.where(use_tan, np.arctan(num / den), HALF_PI - np.arctan(den / num))
    s0 = math.atan(-o * k / (lam * (1 - k)))
    # representative of base mod pi in (s0, s0 + pi) for t > 0, (s0 - pi, s0) for t < 0
    above = base + math.pi * np.ceil((s0 - base) / math.pi)
    above = np.where(above == s0, above + math.pi, above)
    rep = np.where(t > 0, above, np.where(t < 0, above - math.pi, s0))
    return rep + turns * math.pi


def count_fixed_points(f, grid_points: int = 20001, tol: float = 1e-13) -> int:
    """Fixed points of a lifted map in one period [-pi/2, pi/2)."""
    theta = np.linspace(-HALF_PI, HALF_PI, grid_points)[:-1]
    d = f(theta) - theta
    d = np.where(np.abs(d) <= tol, 0.0, d)
    n = 0
    m = len(d)
    for i in range(m):
        a, b = d[i], d[(i + 1) % m]
        if a == 0.0:
            n += 1
        elif b != 0.0 and a * b < 0:
            n += 1
    return n


@dataclass(frozen=True, eq=False)
class PhaseDynamics:
    """All block maps of an ensemble at one energy offset, packed for iteration."""
    maps: tuple[PhaseShiftMap | None, ...]
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    PHI: np.ndarray
    K: np.ndarray

    @classmethod
    def build(cls, nf: BandEdgeNormalForm, ensemble: ModelEnsemble, epsilon: float) -> "PhaseDynamics":
        n = len(ensemble.blocks)
        maps = [None] * n
        arrs = np.zeros((4, n))
        K = np.zeros(n, dtype=np.int64)
        for i in ensemble.support:
            mp = build_phase_map(nf, i, ensemble.blocks[i], epsilon)
            maps[i] = mp
            arrs[:, i] = mp.A, mp.B, mp.Q, mp.phi
            K[i] = mp.k
        return cls(tuple(maps), arrs[0].copy(), arrs[1].copy(), arrs[2].copy(), arrs[3].copy(), K)

    def run(self, indices: np.ndarray, theta: float, count: int = 0) -> tuple[float, int]:
        """Advance a reduced phase in [-pi/2, pi/2) plus half-turn counter."""
        th, c = _kernels.rotate_word(np.ascontiguousarray(indices, dtype=np.int64), self.A, self.B, self.Q,
                                     self.PHI, self.K, float(theta), np.int64(count))
        return float(th), int(c)


def reduce_phase(theta: float) -> tuple[float, int]:
    n = math.floor((theta + HALF_PI) / math.pi)
    return theta - n * math.pi, n


def iterate_dynamics(word: DisorderWord, nf: BandEdgeNormalForm, ensemble: ModelEnsemble, epsilon: float,
                     theta0: float, blocks_m: int, trajectory: bool = False):
    """Compose the block maps along the word; returns the final lifted phase.

    With ``trajectory=True`` returns ``(final, array of m + 1 lifted phases)``.
    """
    if len(word) < blocks_m:
        raise WordTooShort(f"word has {len(word)} letters, need {blocks_m}")
    dyn = PhaseDynamics.build(nf, ensemble, epsilon)
    frac, count = reduce_phase(theta0)
    if not trajectory:
        frac, count = dyn.run(word.indices[:blocks_m], frac, count)
        return count * math.pi + frac
    path = np.empty(blocks_m + 1)
    path[0] = theta0
    for i in range(blocks_m):
        frac, count = dyn.run(word.indices[i:i + 1], frac, count)
        path[i + 1] = count * math.pi + frac
    return path[-1], path
