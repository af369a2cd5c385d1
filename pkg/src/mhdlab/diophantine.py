"""Diophantine background vectors: certification, region classification, Poincare check.

The non-resonance condition ``|b.k| >= c / |k|^r`` cannot be verified on all
of ``Z^n``; ``estimate_constant`` certifies it on the finite box
``0 < |k|_inf <= K`` by exhaustive enumeration, and every consumer carries
that box radius along with the constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, ContractError
from .spectral import SpectralField, directional_derivative, sobolev_norm

__all__ = [
    "BackgroundField",
    "Region",
    "estimate_constant",
    "certify",
    "classify_mode",
    "discriminant",
    "verify_poincare",
    "golden_vector",
    "record_modes",
]

PHI = (1 + math.sqrt(5)) / 2


class Region:
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"


@dataclass(frozen=True)
class BackgroundField:
    """Equilibrium field with its exponent and the certified constant."""

    b_tilde: tuple[float, ...]
    r: float
    c_hat: float
    K_cert: int
    argmin: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "b_tilde", tuple(float(v) for v in self.b_tilde))
        n = len(self.b_tilde)
        if n not in (2, 3):
            raise ConfigurationError(f"background must have 2 or 3 components, got {n}", "background")
        if not self.r > n - 1:
            raise ConfigurationError(f"r must exceed n - 1 = {n - 1}, got {self.r}", "r")
        if self.c_hat < 0:
            raise ConfigurationError("certified constant must be nonnegative", "c_hat")

    @property
    def n(self) -> int:
        return len(self.b_tilde)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.b_tilde))

    @property
    def is_certified(self) -> bool:
        return self.c_hat > 0


def golden_vector(n: int) -> tuple[float, ...]:
    """``(1, phi)`` in 2D, ``(1, 2^(1/3), 2^(2/3))`` in 3D."""
    if n == 2:
        return (1.0, PHI)
    if n == 3:
        return (1.0, 2.0 ** (1.0 / 3.0), 2.0 ** (2.0 / 3.0))
    raise ContractError(f"no golden vector for dimension {n}")


def _half_space_slabs(n: int, K: int) -> Iterator[np.ndarray]:
    """Integer modes with ``0 < |k|_inf <= K`` and first nonzero entry positive.

    Yields ``(m, n)`` integer arrays, one slab per value of ``k_1``, in
    increasing ``k_1``.  Every nonzero mode appears exactly once up to sign.
    """
    rng = np.arange(-K, K + 1)
    for k1 in range(0, K + 1):
        rest = np.stack(np.meshgrid(*([rng] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
        if k1 == 0:
            # first nonzero entry among the rest must be positive
            lead = np.zeros(len(rest), dtype=np.int64)
            for j in range(n - 2, -1, -1):
                lead = np.where(rest[:, j] != 0, rest[:, j], lead)
            rest = rest[lead > 0]
        yield np.column_stack([np.full(len(rest), k1), rest])


def estimate_constant(b_tilde, r: float, K_max: int) -> tuple[float, tuple[int, ...]]:
    """Exhaustive ``min |b.k| |k|^r`` over ``0 < |k|_inf <= K_max``.

    ``|k|`` is Euclidean.  Since the weight is even in ``k`` only the half
    space with positive leading entry is scanned.  Ties are broken by smaller
    ``|k|``, then lexicographically.  A zero result flags a resonant vector.
    Any ``r >= 0`` is accepted so that borderline exponents such as ``r = 1``
    in 2D can be probed; ``BackgroundField`` enforces ``r > n - 1``.
    """
    b = np.asarray(b_tilde, dtype=float)
    n = b.size
    if K_max < 1:
        raise ContractError("K_max must be at least 1")
    if r < 0:
        raise ContractError("weight exponent r must be nonnegative")
    best = (math.inf, math.inf, None)
    for slab in _half_space_slabs(n, K_max):
        if not len(slab):
            continue
        norm = np.sqrt(np.sum(slab.astype(float) ** 2, axis=1))
        val = np.abs(slab @ b) * norm**r
        vmin = val.min()
        if vmin > best[0]:
            continue
        cand = np.flatnonzero(val == vmin)
        order = np.lexsort(tuple(slab[cand, j] for j in range(n - 1, -1, -1)) + (norm[cand],))
        i = cand[order[0]]
        key = (float(vmin), float(norm[i]), tuple(int(v) for v in slab[i]))
        if key < best:
            best = key
    return best[0], best[2]


def certify(b_tilde, r: float, K_cert: int) -> BackgroundField:
    c_hat, argmin = estimate_constant(b_tilde, r, K_cert)
    return BackgroundField(tuple(b_tilde), r, c_hat, K_cert, argmin)


def record_modes(b_tilde, r: float, K_max: int) -> list[tuple[tuple[int, ...], float, float, float]]:
    """Modes that set a new running minimum of ``|b.k| |k|^r`` as ``|k|`` grows.

    Rows are ``(k, |b.k|, |k|, weighted value)`` sorted by ``|k|``; the last
    row is the certified minimum.  For ``(1, phi)`` these are Fibonacci pairs.
    """
    b = np.asarray(b_tilde, dtype=float)
    ks = np.concatenate(list(_half_space_slabs(b.size, K_max)))
    norm = np.sqrt(np.sum(ks.astype(float) ** 2, axis=1))
    bk = np.abs(ks @ b)
    val = bk * norm**r
    order = np.lexsort(tuple(ks[:, j] for j in range(b.size - 1, -1, -1)) + (norm,))
    rows = []
    current = math.inf
    for i in order:
        if val[i] < current:
            current = val[i]
            rows.append((tuple(int(v) for v in ks[i]), float(bk[i]), float(norm[i]), float(val[i])))
    return rows


def discriminant(k, b_tilde) -> float:
    """``1 - 4 (b.k)^2 / |k|^4``."""
    k = np.asarray(k, dtype=float)
    ksq = float(k @ k)
    if ksq == 0:
        raise ContractError("the zero mode has no region")
    bk = float(np.dot(np.asarray(b_tilde, dtype=float), k))
    return 1.0 - 4.0 * bk * bk / (ksq * ksq)


def classify_mode(k, b_tilde) -> str:
    """Low (S1), medium (S2) or high (S3) frequency region of mode ``k``.

    Boundaries: ``D == 0`` goes to S1 and ``D == 1/4`` goes to S2.
    """
    return _region(discriminant(k, b_tilde))


def _region(D: float) -> str:
    if D <= 0:
        return Region.S1
    if D <= 0.25:
        return Region.S2
    return Region.S3


def classify_array(ksq: np.ndarray, bk: np.ndarray) -> np.ndarray:
    """Vectorised region codes 1/2/3 (0 for ``k = 0``)."""
    D = np.ones_like(ksq, dtype=float)
    nz = ksq > 0
    D[nz] = 1.0 - 4.0 * bk[nz] ** 2 / ksq[nz] ** 2
    codes = np.where(D <= 0, 1, np.where(D <= 0.25, 2, 3))
    return np.where(nz, codes, 0)


def verify_poincare(f: SpectralField, bg: BackgroundField, s: float) -> tuple[bool, float]:
    """Check ``||f||_{Hdot^s} <= ||b.grad f||_{Hdot^{s+r}} / c_hat``.

    Returns ``(holds, ratio)`` with ``ratio = ||f||_{Hdot^s} / ||b.grad f||_{Hdot^{s+r}}``.
    """
    if not f.is_mean_zero():
        raise ContractError("Poincare check needs a mean-zero field")
    if f.support_kmax() > bg.K_cert:
        raise ContractError(
            f"field support |k|_inf = {f.support_kmax()} exceeds certified radius {bg.K_cert}")
    if f.grid.n != bg.n:
        raise ConfigurationError("field and background dimensions differ")
    num = sobolev_norm(f, s)
    den = sobolev_norm(directional_derivative(f, bg.b_tilde), s + bg.r)
    if den == 0:
        raise ContractError("directional derivative vanishes; ratio undefined")
    ratio = num / den
    holds = bg.c_hat > 0 and ratio * bg.c_hat <= 1.0 + 1e-12
    return bool(holds), float(ratio)
