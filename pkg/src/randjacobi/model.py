"""Periodic Jacobi blocks, ensembles, transfer matrices and disorder words.

A block of period L is given by hoppings t(1..L) > 0 and potentials v(1..L).
Its operator acts as

    (H psi)(n) = -t(n+1) psi(n+1) + v(n) psi(n) - t(n) psi(n-1),

and solutions are propagated on the vector x(n) = (t(n) psi(n), psi(n-1)).
Matrices are plain ``(2, 2)`` float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

#: Identifies the disorder stream so that stored outputs can be regenerated.
GENERATOR_VERSION = f"numpy-{np.__version__}/PCG64/SeedSequence(seed,spawn_key=(stream,))/searchsorted-v1"

WORD_CHUNK = 1 << 20


class ModelError(ValueError):
    """Base class for invalid model input."""


class NonPositiveHopping(ModelError):
    pass


class PeriodMismatch(ModelError):
    pass


class BadProbabilities(ModelError):
    pass


@dataclass(frozen=True)
class PeriodicBlock:
    label: str
    hoppings: tuple[float, ...]
    potentials: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "hoppings", tuple(float(x) for x in self.hoppings))
        object.__setattr__(self, "potentials", tuple(float(x) for x in self.potentials))

    @property
    def period(self) -> int:
        return len(self.hoppings)

    @classmethod
    def constant(cls, label: str, t: float = 1.0, v: float = 0.0) -> "PeriodicBlock":
        return cls(label, (t,), (v,))


@dataclass(frozen=True)
class ModelEnsemble:
    blocks: tuple[PeriodicBlock, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))

    @property
    def period(self) -> int:
        return self.blocks[0].period

    @property
    def support(self) -> list[int]:
        """Indices of blocks with nonzero probability."""
        return [i for i, p in enumerate(self.probabilities) if p > 0]

    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-block hopping and potential tables of shape ``(n_blocks, L)``."""
        t = np.array([b.hoppings for b in self.blocks], dtype=float)
        v = np.array([b.potentials for b in self.blocks], dtype=float)
        return t, v


def validate_ensemble(ensemble: ModelEnsemble) -> ModelEnsemble:
    if not ensemble.blocks:
        raise PeriodMismatch("ensemble has no blocks")
    L = ensemble.blocks[0].period
    for i, b in enumerate(ensemble.blocks):
        if b.period < 1 or len(b.potentials) != b.period:
            raise PeriodMismatch(
                f"block {i} ({b.label!r}): {len(b.hoppings)} hoppings vs {len(b.potentials)} potentials"
            )
        if b.period != L:
            raise PeriodMismatch(f"block {i} ({b.label!r}) has period {b.period}, expected {L}")
        for k, t in enumerate(b.hoppings):
            if not t > 0 or not np.isfinite(t):
                raise NonPositiveHopping(f"block {i} ({b.label!r}): hopping t({k + 1}) = {t}")
        if not all(np.isfinite(b.potentials)):
            raise ModelError(f"block {i} ({b.label!r}): non-finite potential")
    p = ensemble.probabilities
    if len(p) != len(ensemble.blocks):
        raise BadProbabilities(f"{len(p)} probabilities for {len(ensemble.blocks)} blocks")
    for i, x in enumerate(p):
        if not x >= 0:
            raise BadProbabilities(f"probability p[{i}] = {x} is negative")
    if abs(sum(p) - 1.0) > 1e-12:
        raise BadProbabilities(f"probabilities sum to {sum(p)!r}, not 1")
    if not any(x > 0 for x in p):
        raise BadProbabilities("no block has positive probability")
    return ensemble


def one_step_matrix(block: PeriodicBlock, site_k: int, energy: float, t_next: float | None = None) -> np.ndarray:
    """Single-site transfer matrix A_k(E) for 1-based site index ``site_k``.

    Maps (t(k) psi(k), psi(k-1)) to (t(k+1) psi(k+1), psi(k)).  The next
    hopping t(k+1) multiplies psi(k+1) on the left-hand side and therefore
    cancels from the matrix; ``t_next`` is accepted for signature symmetry.
    """
    t = block.hoppings[site_k - 1]
    v = block.potentials[site_k - 1]
    return np.array([[(v - energy) / t, -t], [1.0 / t, 0.0]])


def transfer_matrix(block: PeriodicBlock, energy: float, t_next_first: float | None = None) -> np.ndarray:
    """Full-period product A_L ... A_1."""
    T = np.eye(2)
    for k in range(1, block.period + 1):
        T = one_step_matrix(block, k, energy) @ T
    return T


def transfer_matrix_derivative(block: PeriodicBlock, energy: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (T, dT/dE) by the product rule."""
    T = np.eye(2)
    dT = np.zeros((2, 2))
    for k in range(1, block.period + 1):
        A = one_step_matrix(block, k, energy)
        dA = np.array([[-1.0 / block.hoppings[k - 1], 0.0], [0.0, 0.0]])
        dT = dA @ T + A @ dT
        T = A @ T
    return T, dT


def word_transfer_matrix(ensemble: ModelEnsemble, indices: Sequence[int], energy: float) -> np.ndarray:
    T = np.eye(2)
    for i in indices:
        T = transfer_matrix(ensemble.blocks[i], energy) @ T
    return T


@dataclass(frozen=True)
class DisorderWord:
    seed: int
    indices: np.ndarray = field(repr=False)
    stream: int = 0

    def __len__(self) -> int:
        return len(self.indices)


def _generator(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def iter_word_chunks(ensemble: ModelEnsemble, seed: int, length: int, stream: int = 0,
                     chunk: int = WORD_CHUNK) -> Iterator[np.ndarray]:
    """Yield the disorder word in chunks; concatenation equals ``sample_word``."""
    cdf = np.cumsum(ensemble.probabilities)
    cdf[-1] = np.inf
    top = len(ensemble.blocks) - 1
    rng = _generator(seed, stream)
    done = 0
    while done < length:
        n = min(chunk, length - done)
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        np.minimum(idx, top, out=idx)
        yield idx.astype(np.int64)
        done += n


def sample_word(ensemble: ModelEnsemble, seed: int, length: int, stream: int = 0) -> DisorderWord:
    if length < 0:
        raise ValueError("length must be nonnegative")
    if length == 0:
        return DisorderWord(seed, np.zeros(0, dtype=np.int64), stream)
    return DisorderWord(seed, np.concatenate(list(iter_word_chunks(ensemble, seed, length, stream))), stream)


def chain_coefficients(ensemble: ModelEnsemble, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Site hoppings t(n) and potentials v(n) of the juxtaposed blocks.

    ``t[n]`` couples site n-1 to site n and belongs to the block containing n.
    """
    t_tab, v_tab = ensemble.tables()
    return t_tab[indices].ravel(), v_tab[indices].ravel()
