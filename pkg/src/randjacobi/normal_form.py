"""Energy-dependent basis change bringing the owner's transfer matrix near a
band edge into the form

    N(kappa) = [[lam (1 - kappa), 1], [-kappa, lam]],   kappa = 2 - lam Tr T(E_nu + eps).

Construction: fix the principal vector w at eps = 0, (T_0 - lam) w = v, and set
M_eps = ((T_eps - lam) w | w).  With lam^2 = 1, det T = 1 and
Tr T_eps = lam (2 - kappa), Cayley-Hamilton gives T^2 - lam T = lam (1 - kappa) T - 1, so

    T m1 = (T^2 - lam T) w = lam (1 - kappa) T w - w = lam (1 - kappa) m1 - kappa m2,
    T m2 = (T - lam) w + lam w = m1 + lam m2,

which is exactly T M = M N(kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelEnsemble, transfer_matrix
from .spectral import BandEdge, PARABOLIC_TOL, cached_bands, find_shared_edges

KAPPA_MAX = 0.5


class DegenerateBasis(ValueError):
    pass


class NoValidRadius(ValueError):
    pass


def normal_form_matrix(kappa: float, lam: float) -> np.ndarray:
    return np.array([[lam * (1.0 - kappa), 1.0], [-kappa, lam]])


@dataclass(frozen=True, eq=False)
class BandEdgeNormalForm:
    edge: BandEdge
    v: np.ndarray
    w: np.ndarray
    epsilon0: float | None = None

    @classmethod
    def build(cls, edge: BandEdge, principal_vector=None, epsilon0: float | None = None) -> "BandEdgeNormalForm":
        T0 = transfer_matrix(edge.block, edge.energy)
        R = T0 - edge.lam * np.eye(2)
        if principal_vector is None:
            v = edge.eigenvector
            w = np.linalg.pinv(R) @ v
        else:
            w = np.asarray(principal_vector, dtype=float)
            v = R @ w
            if np.linalg.norm(v) < 1e-12 * max(1.0, np.linalg.norm(w)):
                raise DegenerateBasis("principal vector lies in the eigenspace")
        return cls(edge, v, w, epsilon0)

    def with_epsilon0(self, epsilon0: float) -> "BandEdgeNormalForm":
        return replace(self, epsilon0=epsilon0)

    @property
    def lam(self) -> float:
        return self.edge.lam

    @property
    def det0(self) -> float:
        return float(self.v[0] * self.w[1] - self.v[1] * self.w[0])

    @property
    def orientation(self) -> int:
        return 1 if self.det0 > 0 else -1

    def transfer(self, epsilon: float, block=None) -> np.ndarray:
        return transfer_matrix(block or self.edge.block, self.edge.energy + epsilon)

    def kappa(self, epsilon: float) -> float:
        return 2.0 - self.lam * float(np.trace(self.transfer(epsilon)))

    def basis(self, epsilon: float, check: bool = True) -> np.ndarray:
        T = self.transfer(epsilon)
        m1 = (T - self.lam * np.eye(2)) @ self.w
        M = np.column_stack([m1, self.w])
        if check and abs(np.linalg.det(M)) < 0.5 * abs(self.det0):
            raise DegenerateBasis(f"|det M| = {abs(np.linalg.det(M))} at eps = {epsilon}")
        return M

    def oriented_basis(self, epsilon: float, check: bool = True) -> np.ndarray:
        """M_eps with its second column flipped when det M_eps < 0."""
        M = self.basis(epsilon, check)
        if self.orientation < 0:
            M = M * np.array([1.0, -1.0])
        return M

    def conjugated(self, epsilon: float, block=None) -> np.ndarray:
        """Orientation-normalized M'^-1 T_sigma(E_nu + eps) M'."""
        M = self.oriented_basis(epsilon)
        return np.linalg.solve(M, self.transfer(epsilon, block) @ M)

    def residual(self, epsilon: float) -> float:
        M = self.basis(epsilon, check=False)
        G = np.linalg.solve(M, self.transfer(epsilon) @ M)
        return float(np.max(np.abs(G - normal_form_matrix(self.kappa(epsilon), self.lam))))


def kappa(nf: BandEdgeNormalForm, epsilon: float) -> float:
    return nf.kappa(epsilon)


def normal_form_basis(nf: BandEdgeNormalForm, epsilon: float) -> np.ndarray:
    return nf.basis(epsilon)


def fixed_directions(G: np.ndarray) -> list[float]:
    """Projective fixed points of a hyperbolic matrix, as angles in [-pi/2, pi/2)."""
    vals, vecs = np.linalg.eig(G)
    if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
        return []
    out = []
    for k in range(2):
        ang = math.atan2(vecs[1, k].real, vecs[0, k].real)
        out.append((ang + math.pi / 2) % math.pi - math.pi / 2)
    return out


def _other_edges_distance(edge: BandEdge, ensemble: ModelEnsemble) -> float:
    dist = math.inf
    for i in ensemble.support:
        for x in cached_bands(ensemble.blocks[i]).edges:
            if i == edge.owner and abs(x - edge.energy) < 1e-12:
                continue
            dist = min(dist, abs(x - edge.energy))
    return dist


def epsilon0_calibrate(edge: BandEdge, ensemble: ModelEnsemble, grid_points: int = 65,
                       refine: int = 20) -> float:
    """Largest tested radius on which the normal form and hyperbolicity conditions hold.

    Conditions checked on a grid of [-eps0, eps0]: every other supported
    block hyperbolic; |det M_eps| >= |det M_0| / 2 and |kappa| <= KAPPA_MAX;
    kappa > 0 exactly on the spectral side; fixed directions of the other
    conjugated maps at least half their eps = 0 distance away from 0.
    """
    cand = next((c for c in find_shared_edges(ensemble)
                 if c.edge.owner == edge.owner and abs(c.edge.energy - edge.energy) < 1e-9), None)
    if cand is None or not cand.ok:
        why = "; ".join(cand.violations) if cand else "not an edge of the ensemble"
        raise NoValidRadius(f"edge at E={edge.energy}: {why}")
    nf = BandEdgeNormalForm.build(edge)
    others = [ensemble.blocks[i] for i in ensemble.support if i != edge.owner]

    def min_angle(eps):
        angs = [abs(a) for b in others for a in fixed_directions(nf.conjugated(eps, b))]
        return min(angs, default=math.inf)

    margin = 0.5 * min_angle(0.0) if others else 0.0
    if others and not margin > 0:
        raise NoValidRadius("fixed direction of another block at angle 0")

    def valid(eps0):
        for eps in np.linspace(-eps0, eps0, grid_points):
            E = edge.energy + eps
            for b in others:
                if abs(np.trace(transfer_matrix(b, E))) <= 2.0 + PARABOLIC_TOL:
                    return False
            if abs(np.linalg.det(nf.basis(eps, check=False))) < 0.5 * abs(nf.det0):
                return False
            k = nf.kappa(eps)
            if abs(k) > KAPPA_MAX:
                return False
            if eps != 0 and (k > 0) != (eps * edge.sign > 0):
                return False
            if others and min_angle(eps) < margin:
                return False
        return True

    top = 0.5 * _other_edges_distance(edge, ensemble)
    good, bad = None, top
    if valid(top):
        return top
    x = top
    for _ in range(40):
        x *= 0.5
        if valid(x):
            good = x
            break
        bad = x
    if good is None:
        raise NoValidRadius(f"no valid radius down to {x:.3g}")
    for _ in range(refine):
        mid = 0.5 * (good + bad)
        if valid(mid):
            good = mid
        else:
            bad = mid
    return good


def calibrated_normal_form(edge: BandEdge, ensemble: ModelEnsemble) -> BandEdgeNormalForm:
    return BandEdgeNormalForm.build(edge, epsilon0=epsilon0_calibrate(edge, ensemble))
