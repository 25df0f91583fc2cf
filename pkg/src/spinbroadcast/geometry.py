"""Coupling matrices of concrete spin arrangements and the equal-moment subset search.

Register spins sit on a line at positions ``(i - 1) d0`` for ``i = 1..K`` and
couple to environment spins through the isotropic law ``g0 / r^3``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .model import CouplingMatrix, DimensionError, RegisterLabel

__all__ = [
    "CylinderSpec",
    "CloudSpec",
    "QuadraticConditions",
    "SubsetSearchCapError",
    "collective_coupling",
    "cylindrical_coupling",
    "quadratic_dfs_conditions",
    "full_quadratic_c",
    "equal_moment_subsets",
    "saw_pulse",
    "saw_pulse_coupling",
    "saw_pulse_fractions",
    "rational_rank",
    "random_cloud_positions",
    "random_cloud_coupling",
    "combine_blocks",
]

SUBSET_CAP = 24
TAYLOR_RATIO = 10.0


@dataclass(frozen=True)
class CylinderSpec:
    """``K`` coaxial circles of ``L`` spins each, radius ``r0``, spacing ``d0``.

    The register spin ``i`` sits on the axis in the plane of circle ``i``.
    ``r0 > 10 K d0`` is required unless ``allow_wide`` is set.
    """

    K: int
    L: int
    g0: float = 1.0
    r0: float = 100.0
    d0: float = 1.0
    allow_wide: bool = False

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be positive")
        if self.r0 <= 0 or self.d0 <= 0:
            raise ValueError("r0 and d0 must be positive")
        if not self.allow_wide and not self.r0 > TAYLOR_RATIO * self.K * self.d0:
            raise ValueError(
                f"r0={self.r0} must exceed {TAYLOR_RATIO:g} K d0={TAYLOR_RATIO * self.K * self.d0}; "
                "set allow_wide to override"
            )

    def to_dict(self) -> dict:
        return {"K": self.K, "L": self.L, "g0": self.g0, "r0": self.r0, "d0": self.d0, "allow_wide": self.allow_wide}

    @classmethod
    def from_dict(cls, d: dict) -> "CylinderSpec":
        return cls(**d)


def collective_coupling(K: int, gs: Sequence[float]) -> CouplingMatrix:
    """Every register spin couples identically: ``g[i, j] = gs[j]``."""
    gs = np.asarray(gs, dtype=float)
    return CouplingMatrix(np.tile(gs, (K, 1)))


def cylindrical_coupling(spec: CylinderSpec, exact: bool = False) -> CouplingMatrix:
    """Coupling of the register to the cylinder spins; column ``m * L + l`` is spin ``l`` of circle ``m``.

    The Taylor form keeps the first correction in ``(i - m) d0 / r0``.
    """
    i = np.arange(spec.K)[:, None]
    m = np.repeat(np.arange(spec.K), spec.L)[None, :]
    x2 = ((i - m) * spec.d0) ** 2
    if exact:
        g = spec.g0 / (spec.r0**2 + x2) ** 1.5
    else:
        g = spec.g0 / spec.r0**3 * (1.0 - 1.5 * x2 / spec.r0**2)
    return CouplingMatrix(g)


class QuadraticConditions(NamedTuple):
    """Moments of ``d = e1 - e2``: ``a = sum d_i``, ``b = sum i d_i``, ``c0 = sum i^2 d_i`` (1-based i)."""

    a: int
    b: int
    c0: int


def quadratic_dfs_conditions(e1: RegisterLabel, e2: RegisterLabel) -> QuadraticConditions:
    if e1.K != e2.K:
        raise DimensionError("labels must have equal length")
    d = [x - y for x, y in zip(e1.bits, e2.bits)]
    return QuadraticConditions(
        sum(d),
        sum(i * x for i, x in enumerate(d, 1)),
        sum(i * i * x for i, x in enumerate(d, 1)),
    )


def full_quadratic_c(cond: QuadraticConditions, spec: CylinderSpec) -> float:
    """Constant term including the offset ``-(2/3) (r0/d0)^2 a``; equals ``c0`` when ``a = 0``."""
    return cond.c0 - (2.0 / 3.0) * (spec.r0 / spec.d0) ** 2 * cond.a


class SubsetSearchCapError(RuntimeError):
    pass


def _ternary_int(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(3**n)
    digits = (idx[:, None] // 3 ** np.arange(n)[None, :]) % 3
    return np.where(digits == 2, -1, digits).astype(np.int64)


def _solutions_with_max(m: int) -> list[np.ndarray]:
    """All ``d`` on ``1..m`` with ``d_m = +1`` whose zeroth, first and second moments vanish."""
    pos = np.arange(1, m, dtype=np.int64)
    h = len(pos) // 2
    A, B = _ternary_int(h), _ternary_int(len(pos) - h)
    pa, pb = pos[:h], pos[h:]
    ka = np.stack([A.sum(1), A @ pa, A @ pa**2], axis=1)
    kb = np.stack([B.sum(1), B @ pb, B @ pb**2], axis=1)
    target = -np.array([1, m, m * m], dtype=np.int64)
    # encode keys as single integers for a sorted join
    lo = np.minimum(ka.min(0), (target - kb).min(0))
    span = np.maximum(ka.max(0), (target - kb).max(0)) - lo + 1
    code = lambda k: ((k[:, 0] - lo[0]) * span[1] + (k[:, 1] - lo[1])) * span[2] + (k[:, 2] - lo[2])
    ca, cb = code(ka), code(target - kb)
    order = np.argsort(ca, kind="stable")
    ca_sorted = ca[order]
    left = np.searchsorted(ca_sorted, cb, "left")
    right = np.searchsorted(ca_sorted, cb, "right")
    out = []
    for ib in np.flatnonzero(right > left):
        for ia in order[left[ib] : right[ib]]:
            out.append(np.concatenate([A[ia], B[ib], [1]]))
    return out


def equal_moment_subsets(K: int, limit: int | None = None, cap: int = SUBSET_CAP) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Disjoint pairs of subsets of ``{1..K}`` with equal size, sum and sum of squares.

    Pairs are grouped by their largest element and searched in increasing
    order, so ``limit`` stops early; the cap applies to the largest element
    actually searched.  In each pair the set holding the smallest element comes
    first.  Overlapping sets are equivalent to their disjoint parts, so only
    disjoint pairs are listed.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if limit is None and K > cap:
        raise SubsetSearchCapError(f"K={K} exceeds the full-search cap {cap}")
    found: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for m in range(1, K + 1):
        if m > cap:
            raise SubsetSearchCapError(f"no early stop before the cap {cap}")
        level = []
        for d in _solutions_with_max(m):
            d = d if d[np.flatnonzero(d)[0]] > 0 else -d
            a = tuple(int(i) + 1 for i in np.flatnonzero(d == 1))
            b = tuple(int(i) + 1 for i in np.flatnonzero(d == -1))
            level.append((a, b))
        found.extend(sorted(level))
        if limit is not None and len(found) >= limit:
            return found[:limit]
    return found


def saw_pulse(j, mu, sigma):
    """Tent of height 1 at ``mu`` falling to 0 at ``mu +/- sigma/2``."""
    return np.maximum(0.0, 1.0 - 2.0 * np.abs(np.asarray(j, dtype=float) - mu) / sigma)


def saw_pulse_coupling(K: int, N: int, sigma: float) -> CouplingMatrix:
    """``g[i, j] = f(j)`` centred at ``mu_i = (N/K)(i - 1) + 1`` for environment positions ``j = 1..N``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    j = np.arange(1, N + 1)[None, :]
    mu = (N / K) * np.arange(K)[:, None] + 1.0
    return CouplingMatrix(saw_pulse(j, mu, sigma))


def saw_pulse_fractions(K: int, N: int, sigma) -> list[list[Fraction]]:
    """Exact rational entries of :func:`saw_pulse_coupling` (``sigma`` converted exactly)."""
    sigma = Fraction(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rows = []
    for i in range(K):
        mu = Fraction(N, K) * i + 1
        rows.append([max(Fraction(0), 1 - 2 * abs(j - mu) / sigma) for j in range(1, N + 1)])
    return rows


def rational_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """Rank by exact Gaussian elimination over the rationals."""
    m = [list(map(Fraction, r)) for r in rows]
    rank, ncols = 0, len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][c] != 0:
                f = m[r][c] / m[rank][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[rank])]
        rank += 1
    return rank


@dataclass(frozen=True)
class CloudSpec:
    """Randomly placed environment spins, uniform in an axis-aligned box.

    The default box spans the register along x with a margin of ``K d0`` on
    every side; ``cutoff`` (default ``d0 / 10``) is the minimal allowed distance
    between any two spins.
    """

    g0: float = 1.0
    d0: float = 1.0
    box_low: tuple[float, float, float] | None = None
    box_high: tuple[float, float, float] | None = None
    cutoff: float | None = None

    def box(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        w = K * self.d0
        lo = np.array(self.box_low if self.box_low is not None else (-w, -w, -w), dtype=float)
        hi = np.array(self.box_high if self.box_high is not None else ((K - 1) * self.d0 + w, w, w), dtype=float)
        if np.any(hi <= lo):
            raise ValueError("box_high must exceed box_low in every coordinate")
        return lo, hi

    @property
    def min_distance(self) -> float:
        return self.d0 / 10.0 if self.cutoff is None else self.cutoff

    def to_dict(self) -> dict:
        return {
            "g0": self.g0,
            "d0": self.d0,
            "box_low": None if self.box_low is None else list(self.box_low),
            "box_high": None if self.box_high is None else list(self.box_high),
            "cutoff": self.min_distance,
        }


def register_positions(K: int, d0: float) -> np.ndarray:
    return np.stack([np.arange(K) * d0, np.zeros(K), np.zeros(K)], axis=1)


def random_cloud_positions(K: int, N: int, spec: CloudSpec, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Environment positions at least ``cutoff`` from the register and from each other."""
    lo, hi = spec.box(K)
    placed = [*register_positions(K, spec.d0)]
    env = []
    for _ in range(N):
        for _ in range(max_tries):
            p = lo + (hi - lo) * rng.random(3)
            if np.min(np.linalg.norm(np.asarray(placed) - p, axis=1)) >= spec.min_distance:
                break
        else:
            raise RuntimeError("could not place a spin; box too small for the cutoff")
        placed.append(p)
        env.append(p)
    return np.array(env).reshape(N, 3)


def random_cloud_coupling(K: int, N: int, spec: CloudSpec, rng: np.random.Generator) -> CouplingMatrix:
    """``g0 / dist^3`` couplings to randomly placed environment spins."""
    env = random_cloud_positions(K, N, spec, rng)
    reg = register_positions(K, spec.d0)
    dist = np.linalg.norm(reg[:, None, :] - env[None, :, :], axis=2)
    return CouplingMatrix(spec.g0 / dist**3)


def combine_blocks(*blocks: CouplingMatrix) -> CouplingMatrix:
    """Place environment blocks side by side (same register)."""
    if len({b.K for b in blocks}) != 1:
        raise DimensionError("blocks must share the register size")
    return CouplingMatrix(np.hstack([b.entries for b in blocks]))
