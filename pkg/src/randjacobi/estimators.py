"""Monte Carlo estimates of the IDS near a band edge.

Two independent routes: mean rotation of the phase-shift dynamics, and
Sturm eigenvalue counting on finite truncated chains.  Replicas use derived
streams (seed, replica) and are combined with exact summation, so results
do not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import GENERATOR_VERSION, ModelEnsemble, chain_coefficients, iter_word_chunks
from .normal_form import BandEdgeNormalForm
from .prufer import PhaseDynamics, free_prufer_final, reduce_phase
from .spectral import BandEdge

MIN_REPLICAS = 8
MIN_ROTATIONS = 10
STURM_STREAM = 1 << 20
LYAPUNOV_STREAM = 2 << 20


@dataclass(frozen=True)
class IdsEstimate:
    value: float
    std_error: float
    method: str
    iterations: int
    replicas: int
    seed: int
    epsilon: float | None = None
    warnings: tuple[str, ...] = ()
    samples: tuple[float, ...] = field(default=(), repr=False)

    def record(self) -> dict:
        return {
            "method": self.method, "epsilon": self.epsilon, "value": self.value, "std_error": self.std_error,
            "m" if self.method == "rotation" else "n": self.iterations, "replicas": self.replicas,
            "seed": self.seed, "generator": GENERATOR_VERSION, "warnings": list(self.warnings),
        }


def jackknife(samples) -> tuple[float, float]:
    """Replica mean and its jackknife standard error."""
    x = [float(s) for s in samples]
    n = len(x)
    total = math.fsum(x)
    mean = total / n
    if n < 2:
        return mean, math.nan
    loo = [(total - xi) / (n - 1) for xi in x]
    loo_mean = math.fsum(loo) / n
    return mean, math.sqrt((n - 1) / n * math.fsum((y - loo_mean) ** 2 for y in loo))


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _rotation_replica(dyn: PhaseDynamics, ensemble, seed, stream, blocks_m, theta0):
    frac, count = reduce_phase(theta0)
    for chunk in iter_word_chunks(ensemble, seed, blocks_m, stream):
        frac, count = dyn.run(chunk, frac, count)
    # total lift minus theta0, keeping the integer part exact
    return count * math.pi + (frac - theta0), count


def rotation_ids(ensemble: ModelEnsemble, nf: BandEdgeNormalForm, epsilon: float, blocks_m: int,
                 replicas: int = MIN_REPLICAS, seed: int = 0, theta0: float = 0.0, workers: int = 1) -> IdsEstimate:
    """delta-N from the mean rotation of the phase-shift dynamics.

    ``epsilon`` > 0 is measured into the spectrum: the maps are built at
    E_nu + sign * epsilon and the rotation is multiplied by the same sign.
    """
    if replicas < 1:
        raise ValueError("replicas must be positive")
    s = nf.edge.sign
    L = ensemble.period
    dyn = PhaseDynamics.build(nf, ensemble, s * epsilon)
    runs = _map(_rotation_replica, [(dyn, ensemble, seed, r, blocks_m, theta0) for r in range(replicas)], workers)
    vals = [s * shift / (blocks_m * L * math.pi) for shift, _ in runs]
    mean, se = jackknife(vals)
    warnings = []
    fewest = min(abs(c) for _, c in runs)
    if fewest < MIN_ROTATIONS:
        warnings.append(f"BudgetTooSmall: a replica completed only {fewest} half-turns")
    if replicas < MIN_REPLICAS:
        warnings.append(f"fewer than {MIN_REPLICAS} replicas")
    return IdsEstimate(mean, se, "rotation", blocks_m, replicas, seed, epsilon, tuple(warnings), tuple(vals))


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix with diagonal v(1..n) and couplings -t(2..n)."""
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diagonal)

    @classmethod
    def from_word(cls, ensemble: ModelEnsemble, indices) -> "TridiagonalOperator":
        t, v = chain_coefficients(ensemble, np.asarray(indices))
        return cls(v, t[1:])

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) - np.diag(self.off_diagonal, 1) - np.diag(self.off_diagonal, -1)

    def _pivmin(self) -> float:
        scale = np.max(np.abs(self.diagonal)) + 2 * (np.max(np.abs(self.off_diagonal)) if self.size > 1 else 0)
        return 1e-14 * max(scale, 1.0)

    def counts(self, energies) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues strictly below each energy, and zero-pivot perturbations used."""
        off2 = np.zeros(self.size)
        off2[1:] = np.asarray(self.off_diagonal) ** 2
        return _kernels.sturm_pair_counts(np.ascontiguousarray(self.diagonal, dtype=float), off2,
                                          np.atleast_1d(np.asarray(energies, dtype=float)), self._pivmin())


def sturm_count(op: TridiagonalOperator, energy: float) -> int:
    if op.size < 1:
        raise ValueError("empty operator")
    return int(op.counts([energy])[0][0])


def _sturm_replica(ensemble, seed, stream, sites_n, energies):
    word = np.concatenate(list(iter_word_chunks(ensemble, seed, sites_n // ensemble.period, stream)))
    counts, _ = TridiagonalOperator.from_word(ensemble, word).counts(energies)
    return counts


def _check_sites(ensemble, sites_n):
    if sites_n <= 0 or sites_n % ensemble.period:
        raise ValueError(f"sites_n = {sites_n} must be a positive multiple of L = {ensemble.period}")


def empirical_ids(ensemble: ModelEnsemble, energy: float, sites_n: int, replicas: int = MIN_REPLICAS,
                  seed: int = 0, workers: int = 1) -> IdsEstimate:
    _check_sites(ensemble, sites_n)
    jobs = [(ensemble, seed, STURM_STREAM + r, sites_n, np.array([energy])) for r in range(replicas)]
    vals = [c[0] / sites_n for c in _map(_sturm_replica, jobs, workers)]
    mean, se = jackknife(vals)
    return IdsEstimate(mean, se, "sturm", sites_n, replicas, seed, None, (), tuple(vals))


def delta_ids_empirical(ensemble: ModelEnsemble, edge: BandEdge, epsilon: float, sites_n: int,
                        replicas: int = 16, seed: int = 0, workers: int = 1) -> IdsEstimate:
    """Paired difference of eigenvalue counts at E_nu + sign*epsilon and E_nu on the same chains."""
    _check_sites(ensemble, sites_n)
    s = edge.sign
    energies = np.array([edge.energy, edge.energy + s * epsilon])
    jobs = [(ensemble, seed, STURM_STREAM + r, sites_n, energies) for r in range(replicas)]
    vals = [s * int(c[1] - c[0]) / sites_n for c in _map(_sturm_replica, jobs, workers)]
    mean, se = jackknife(vals)
    return IdsEstimate(mean, se, "sturm", sites_n, replicas, seed, epsilon, (), tuple(vals))


def delta_ids_empirical_grid(ensemble: ModelEnsemble, edge: BandEdge, epsilons, sites_n: int,
                             replicas: int = 16, seed: int = 0, workers: int = 1) -> list[IdsEstimate]:
    """Same as ``delta_ids_empirical`` for several offsets, sharing one chain per replica."""
    _check_sites(ensemble, sites_n)
    s = edge.sign
    eps = [float(e) for e in epsilons]
    energies = np.array([edge.energy] + [edge.energy + s * e for e in eps])
    jobs = [(ensemble, seed, STURM_STREAM + r, sites_n, energies) for r in range(replicas)]
    counts = _map(_sturm_replica, jobs, workers)
    out = []
    for i, e in enumerate(eps, start=1):
        vals = [s * int(c[i] - c[0]) / sites_n for c in counts]
        mean, se = jackknife(vals)
        out.append(IdsEstimate(mean, se, "sturm", sites_n, replicas, seed, e, (), tuple(vals)))
    return out


def _lyapunov_replica(ensemble, seed, stream, sites_n, energy):
    word = np.concatenate(list(iter_word_chunks(ensemble, seed, sites_n // ensemble.period, stream)))
    t, v = chain_coefficients(ensemble, word)
    _, logr = free_prufer_final(t, v, energy, 0.0)
    return logr / sites_n


def lyapunov_estimate(ensemble: ModelEnsemble, energy: float, sites_n: int, replicas: int = MIN_REPLICAS,
                      seed: int = 0, workers: int = 1) -> IdsEstimate:
    """Lyapunov exponent per site from the growth of the Pruefer amplitude."""
    _check_sites(ensemble, sites_n)
    jobs = [(ensemble, seed, LYAPUNOV_STREAM + r, sites_n, energy) for r in range(replicas)]
    vals = _map(_lyapunov_replica, jobs, workers)
    mean, se = jackknife(vals)
    return IdsEstimate(mean, se, "lyapunov", sites_n, replicas, seed, None, (), tuple(float(x) for x in vals))
