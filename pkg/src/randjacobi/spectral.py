"""Band structure, trace classification and periodic IDS of single blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .model import ModelEnsemble, PeriodicBlock, transfer_matrix, validate_ensemble

PARABOLIC_TOL = 1e-9
EDGE_TOL = 1e-12


class NotUnimodular(ValueError):
    pass


class SearchIntervalTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class ClassifiedEnergy:
    kind: str
    trace: float
    rotation_eta: float | None = None
    lam: float | None = None


def classify(T: np.ndarray, tol: float = PARABOLIC_TOL) -> ClassifiedEnergy:
    det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
    if abs(det - 1.0) > 1e-8 * max(1.0, float(np.abs(T).max()) ** 2):
        raise NotUnimodular(f"det = {det!r}")
    tr = float(T[0, 0] + T[1, 1])
    gap = abs(tr) - 2.0
    if abs(gap) <= tol:
        return ClassifiedEnergy("parabolic", tr, lam=math.copysign(1.0, tr))
    if gap < 0:
        return ClassifiedEnergy("elliptic", tr, rotation_eta=math.acos(tr / 2))
    root = math.sqrt(tr * tr - 4.0)
    lam = (tr + math.copysign(root, tr)) / 2
    return ClassifiedEnergy("hyperbolic", tr, lam=lam)


def trace_and_derivative(block: PeriodicBlock, energies) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Tr T(E) and d/dE Tr T(E)."""
    E = np.asarray(energies, dtype=float)
    a, b, c, d = np.ones_like(E), np.zeros_like(E), np.zeros_like(E), np.ones_like(E)
    da, db, dc, dd = (np.zeros_like(E) for _ in range(4))
    for t, v in zip(block.hoppings, block.potentials):
        p = (v - E) / t
        # A = [[p, -t], [1/t, 0]], dA = [[-1/t, 0], [0, 0]]
        na, nb = p * a - t * c, p * b - t * d
        nc, nd = a / t, b / t
        nda = -a / t + p * da - t * dc
        ndb = -b / t + p * db - t * dd
        ndc, ndd = da / t, db / t
        a, b, c, d = na, nb, nc, nd
        da, db, dc, dd = nda, ndb, ndc, ndd
    return a + d, da + dd


def gershgorin_interval(block: PeriodicBlock) -> tuple[float, float]:
    t = np.array(block.hoppings)
    v = np.array(block.potentials)
    radius = t + np.roll(t, -1)
    return float(np.min(v - radius)), float(np.max(v + radius))


@dataclass(frozen=True)
class BandStructure:
    bands: tuple[tuple[float, float], ...]
    edge_lambdas: tuple[tuple[float, float], ...]
    touching: tuple[float, ...] = ()

    @property
    def edges(self) -> list[float]:
        return [e for band in self.bands for e in band]


def band_structure(block: PeriodicBlock, search_interval: tuple[float, float] | None = None,
                   tol: float = EDGE_TOL, density: float | None = None) -> BandStructure:
    """Locate all bands {E : |Tr T(E)| <= 2} of a periodic block.

    The trace is monotone between consecutive critical points, so each
    monotone piece contributes at most one root of Tr = 2 and one of Tr = -2.
    Critical points with |Tr| = 2 are closed gaps (touching bands).
    """
    L = block.period
    lo, hi = gershgorin_interval(block)
    margin = 1e-3 * max(1.0, hi - lo)
    lo, hi = lo - margin, hi + margin
    if search_interval is not None:
        lo, hi = search_interval
    ends, _ = trace_and_derivative(block, [lo, hi])
    if np.any(np.abs(ends) <= 2.0):
        raise SearchIntervalTooSmall(f"|Tr| <= 2 at an end of [{lo}, {hi}]")
    if density is None:
        density = 8.0 * L * L
    n = max(64, int(math.ceil(density * (hi - lo))) + 1)
    grid = np.linspace(lo, hi, n)
    tr, dtr = trace_and_derivative(block, grid)

    def dtrace(x):
        return trace_and_derivative(block, [x])[1][0]

    def trace(x):
        return trace_and_derivative(block, [x])[0][0]

    crit = []
    for i in np.nonzero(np.sign(dtr[:-1]) * np.sign(dtr[1:]) < 0)[0]:
        crit.append(brentq(dtrace, grid[i], grid[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps))
    for i in np.nonzero(dtr == 0.0)[0]:
        if 0 < i < n - 1:
            crit.append(float(grid[i]))
    crit = sorted(set(crit))

    edges: list[float] = []
    touching: list[float] = []
    knots = [lo, *crit, hi]
    for x in crit:
        if abs(abs(trace(x)) - 2.0) <= PARABOLIC_TOL:
            touching.append(x)
            edges += [x, x]
    for a, b in zip(knots[:-1], knots[1:]):
        for level in (2.0, -2.0):
            fa, fb = trace(a) - level, trace(b) - level
            if a in touching and abs(fa) <= 2 * PARABOLIC_TOL or b in touching and abs(fb) <= 2 * PARABOLIC_TOL:
                continue
            if fa * fb < 0:
                edges.append(brentq(lambda x: trace(x) - level, a, b, xtol=tol, rtol=4 * np.finfo(float).eps))
    edges.sort()
    if len(edges) != 2 * L:
        raise RuntimeError(f"found {len(edges)} band edges for period {L}; refine the grid density")
    bands = tuple((edges[2 * j], edges[2 * j + 1]) for j in range(L))
    lams = tuple((math.copysign(1.0, trace(a)), math.copysign(1.0, trace(b))) for a, b in bands)
    return BandStructure(bands, lams, tuple(touching))


_BANDS_CACHE: dict[PeriodicBlock, BandStructure] = {}


def cached_bands(block: PeriodicBlock) -> BandStructure:
    bs = _BANDS_CACHE.get(block)
    if bs is None:
        bs = _BANDS_CACHE[block] = band_structure(block)
    return bs


def ids_periodic(block: PeriodicBlock, energy: float, bands: BandStructure | None = None) -> float:
    """IDS of the periodic operator from the band index and the Floquet phase."""
    bands = bands or cached_bands(block)
    L = block.period
    for j, (a, b) in enumerate(bands.bands, start=1):
        if energy < a:
            return (j - 1) / L
        if energy <= b:
            tr = trace_and_derivative(block, [energy])[0][0]
            eta = math.acos(min(1.0, max(-1.0, tr / 2)))
            # lower edge at Tr = +2 means the trace decreases across the band
            if bands.edge_lambdas[j - 1][0] < 0:
                eta = math.pi - eta
            return (j - 1) / L + eta / (L * math.pi)
    return 1.0


def bands_below(block: PeriodicBlock, energy: float, tol: float = 1e-9) -> int:
    """Number of complete bands below ``energy`` (gap label numerator)."""
    return sum(1 for a, b in cached_bands(block).bands if b <= energy + tol)


@dataclass(frozen=True)
class BandEdge:
    energy: float
    owner: int
    block: PeriodicBlock = field(repr=False)
    side: str
    lam: float
    direction: float
    band_index: int

    @property
    def sign(self) -> int:
        """+1 if energies above the edge lie in the spectrum, else -1."""
        return 1 if self.side == "lower" else -1

    @property
    def ids_at_edge(self) -> Fraction:
        j = self.band_index - 1 if self.side == "lower" else self.band_index
        return Fraction(j, self.block.period)

    @property
    def eigenvector(self) -> np.ndarray:
        return np.array([math.cos(self.direction), math.sin(self.direction)])


def parabolic_eigenvector(T: np.ndarray, lam: float) -> np.ndarray:
    R = T - lam * np.eye(2)
    row = R[0] if np.hypot(*R[0]) >= np.hypot(*R[1]) else R[1]
    v = np.array([-row[1], row[0]])
    return v / np.linalg.norm(v)


def _direction(v: np.ndarray) -> float:
    ang = math.atan2(v[1], v[0])
    while ang >= math.pi / 2:
        ang -= math.pi
    while ang < -math.pi / 2:
        ang += math.pi
    return ang


def make_edge(block: PeriodicBlock, owner: int, band_index: int, side: str) -> BandEdge:
    bs = cached_bands(block)
    E = bs.bands[band_index - 1][0 if side == "lower" else 1]
    T = transfer_matrix(block, E)
    lam = math.copysign(1.0, np.trace(T))
    return BandEdge(E, owner, block, side, lam, _direction(parabolic_eigenvector(T, lam)), band_index)


def delta_ids_periodic(edge: BandEdge, epsilon: float) -> float:
    """Periodic delta-N of the owner block, taken on the spectral side of the edge."""
    if epsilon == 0:
        return 0.0
    s = edge.sign
    return s * (ids_periodic(edge.block, edge.energy + s * epsilon) - ids_periodic(edge.block, edge.energy))


@dataclass(frozen=True)
class EdgeCandidate:
    edge: BandEdge
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def projective_separation(T: np.ndarray, v: np.ndarray) -> float:
    """|sin| of the angle between v and T v."""
    Tv = T @ v
    return abs(v[0] * Tv[1] - v[1] * Tv[0]) / (np.linalg.norm(v) * np.linalg.norm(Tv))


def find_shared_edges(ensemble: ModelEnsemble, tol: float = 1e-9) -> list[EdgeCandidate]:
    """Check every band edge of every supported block against the edge hypotheses.

    Hypotheses: (a) boundary of the union of spectra, (b) edge of exactly one
    block, (c) the owner's parabolic eigenvector is not an eigenvector of the
    other blocks' transfer matrices at that energy.
    """
    validate_ensemble(ensemble)
    support = ensemble.support
    structures = {i: cached_bands(ensemble.blocks[i]) for i in support}
    out = []
    for nu in support:
        bs = structures[nu]
        for j, (a, b) in enumerate(bs.bands, start=1):
            for side, E in (("lower", a), ("upper", b)):
                if any(abs(E - x) <= tol for x in bs.touching):
                    continue
                edge = make_edge(ensemble.blocks[nu], nu, j, side)
                why = []
                for sigma in support:
                    if sigma == nu:
                        continue
                    other = structures[sigma]
                    if any(abs(E - x) <= tol for x in other.edges):
                        why.append(f"(b) also a band edge of block {sigma}")
                    elif any(lo + tol < E < hi - tol for lo, hi in other.bands):
                        why.append(f"(a) inside a band of block {sigma}")
                    T = transfer_matrix(ensemble.blocks[sigma], E)
                    if projective_separation(T, edge.eigenvector) <= tol:
                        why.append(f"(c) eigenvector shared with block {sigma}")
                out.append(EdgeCandidate(edge, tuple(why)))
    out.sort(key=lambda c: c.edge.energy)
    return out


def select_edge(ensemble: ModelEnsemble, which: str) -> BandEdge:
    """Resolve an edge given as ``'block:side'``, ``'block:band:side'`` or an energy."""
    cands = find_shared_edges(ensemble)
    parts = which.split(":")
    if len(parts) == 1:
        E = float(which)
        best = min(cands, key=lambda c: abs(c.edge.energy - E))
        chosen = best
    else:
        ref = parts[0]
        idx = next((i for i, b in enumerate(ensemble.blocks) if b.label == ref), None)
        if idx is None:
            idx = int(ref)
        side = parts[-1]
        mine = [c for c in cands if c.edge.owner == idx and c.edge.side == side]
        if len(parts) == 3:
            mine = [c for c in mine if c.edge.band_index == int(parts[1])]
        ok = [c for c in mine if c.ok]
        if not (ok or mine):
            raise ValueError(f"no {side} edge for block {ref!r}")
        chosen = (ok or mine)[0]
    if not chosen.ok:
        raise ValueError(f"edge at E={chosen.edge.energy} fails hypotheses: {'; '.join(chosen.violations)}")
    return chosen.edge
