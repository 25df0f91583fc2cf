"""Ensemble sampling, large-environment bounds and long-time averages."""
from __future__ import annotations

import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats as sps
from scipy.integrate import trapezoid

from .factors import coherence_abs2_log, overlap_log
from .model import CentralState, EnvSpin, spin_arrays

__all__ = [
    "EnsembleSpec",
    "DiscrepancyReport",
    "DiscrepancyCapError",
    "LLNBounds",
    "EnsembleRow",
    "member_rng",
    "hs_eigenvalue",
    "haar_beta",
    "sample_env_spin",
    "sample_env_params",
    "random_central_state",
    "kappa",
    "chi",
    "lln_bounds",
    "long_time_bounds",
    "timescales",
    "min_discrepancy",
    "time_avg_overlap_sq",
    "time_avg_gamma_sq",
    "numeric_time_average",
    "time_average_remainder",
    "cos_product_identity_check",
    "expected_sin2_uniform",
    "ensemble_member",
    "run_lln_ensemble",
    "ensemble_csv",
    "proportion_test",
]

DISCREPANCY_CAP = 30
COS_IDENTITY_CAP = 20


@dataclass(frozen=True)
class EnsembleSpec:
    """Distribution of couplings plus the seed of the ensemble.

    ``coupling_dist`` is ``"uniform01"``, ``"custom"`` (uniform on
    ``[low, high]``) or ``"moments"`` (only the second moment ``g2bar`` is
    known; such ensembles can evaluate bounds but cannot sample couplings).
    Spin states always follow the Haar / Hilbert-Schmidt pair.
    """

    coupling_dist: str = "uniform01"
    seed: int = 0
    low: float = 0.0
    high: float = 1.0
    moment2: float | None = None

    def __post_init__(self):
        if self.coupling_dist not in ("uniform01", "custom", "moments"):
            raise ValueError(f"unknown coupling distribution {self.coupling_dist!r}")
        if self.coupling_dist == "custom" and not self.high > self.low:
            raise ValueError("custom coupling range needs high > low")
        if self.coupling_dist == "moments" and self.moment2 is None:
            raise ValueError("moments distribution needs moment2")
        g2 = self.g2bar
        if not (np.isfinite(g2) and g2 > 0):
            raise ValueError(f"second moment of couplings must be positive and finite, got {g2}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def g2bar(self) -> float:
        if self.coupling_dist == "uniform01":
            return 1.0 / 3.0
        if self.coupling_dist == "custom":
            a, b = self.low, self.high
            return (a * a + a * b + b * b) / 3.0
        return float(self.moment2)

    def sample_couplings(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.coupling_dist == "uniform01":
            return rng.random(n)
        if self.coupling_dist == "custom":
            return self.low + (self.high - self.low) * rng.random(n)
        raise ValueError("a moments-only ensemble cannot sample couplings")


def member_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for ensemble member ``index``; independent of worker layout."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def hs_eigenvalue(v):
    """Inverse CDF of the eigenvalue density ``3 (2 lam - 1)^2`` on [0, 1]."""
    return 0.5 * (1.0 + np.cbrt(2.0 * np.asarray(v, dtype=float) - 1.0))


def haar_beta(u):
    """Inverse CDF of the Haar marginal ``sin(beta) / 2`` on [0, pi]."""
    return np.arccos(1.0 - 2.0 * np.asarray(u, dtype=float))


def sample_env_params(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    """Vectorized draw of ``n`` spin parameter sets: lam, alpha, beta, gamma_euler."""
    u = rng.random((4, n))
    return {
        "lam": hs_eigenvalue(u[0]),
        "alpha": 2 * np.pi * u[1],
        "beta": haar_beta(u[2]),
        "gamma_euler": 2 * np.pi * u[3],
    }


def sample_env_spin(rng: np.random.Generator) -> EnvSpin:
    p = sample_env_params(rng, 1)
    return EnvSpin(float(p["lam"][0]), float(p["alpha"][0]), float(p["beta"][0]), float(p["gamma_euler"][0]))


def sample_env_spins(rng: np.random.Generator, n: int) -> list[EnvSpin]:
    p = sample_env_params(rng, n)
    return [
        EnvSpin(float(p["lam"][j]), float(p["alpha"][j]), float(p["beta"][j]), float(p["gamma_euler"][j]))
        for j in range(n)
    ]


def random_central_state(K: int, rng: np.random.Generator) -> CentralState:
    """Hilbert-Schmidt random register state."""
    d = 2**K
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x @ x.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return CentralState(rho / np.trace(rho).real)


def kappa(spin: EnvSpin, g: float, t: float) -> float:
    return spin.overlap_coefficient * np.sin(g * t) ** 2


def chi(spin: EnvSpin, g: float, t: float) -> float:
    return np.sin(g * t) ** 2 * (1.0 - spin.zeta**2)


class LLNBounds(NamedTuple):
    b_bound: float
    gamma2_bound: float
    valid: bool = True


def lln_bounds(N_mac: int, N_dis: int, g2bar: float, t: float) -> LLNBounds:
    """Short-time decay envelopes of the overlap and of ``|gamma|^2``.

    ``valid`` reports whether ``t * sqrt(g2bar) < 0.3``, i.e. the short-time regime.
    """
    x = g2bar * t * t
    return LLNBounds(
        float(np.exp(-0.2 * N_mac * x)),
        float(np.exp(-0.8 * N_dis * x)),
        bool(t * np.sqrt(g2bar) < 0.3),
    )


def long_time_bounds(N_mac: int, N_dis: int) -> LLNBounds:
    """Asymptotic envelopes for couplings uniform on [0, 1]."""
    return LLNBounds(float(np.exp(-N_mac / 10.0)), float(np.exp(-0.4 * N_dis)), True)


def timescales(N_mac: int, N_dis: int, g2bar: float, epsilon: float) -> tuple[float, float]:
    """Orthogonalization and decoherence times ``(t_B, t_D)`` at confidence ``epsilon``.

    ``t_D`` uses the number of unobserved spins ``N_dis``, as the bound on
    ``|gamma|^2`` it is solved from does; a form with the total ``N`` in its
    place also circulates and would underestimate ``t_D`` when few spins are
    unobserved.
    """
    if N_mac <= 0 or N_dis <= 0:
        raise ValueError("N_mac and N_dis must be positive")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    L = np.log(1.0 / epsilon)
    return float(np.sqrt(5 * L / (g2bar * N_mac))), float(np.sqrt(5 * L / (4 * g2bar * N_dis)))


class DiscrepancyCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscrepancyReport:
    value: float
    witness: tuple[int, ...] | None
    impartitionable: bool
    justification: str = "exhaustive"


def _signed_sums(a: np.ndarray) -> np.ndarray:
    n = len(a)
    signs = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1)
    return signs @ a if n else np.zeros(1)


def min_discrepancy(
    couplings: Sequence[float],
    cap: int = DISCREPANCY_CAP,
    allow_sampled: bool = False,
    rtol: float = 1e-12,
) -> DiscrepancyReport:
    """Minimum of ``|sum_i s_i a_i|`` over sign vectors, with a witness.

    Exhaustive via meet-in-the-middle over the two halves of the list.  Values
    below ``rtol * sum|a_i|`` count as zero (a partition exists).  Above the cap
    a :class:`DiscrepancyCapError` is raised unless ``allow_sampled`` is set, in
    which case continuously sampled inputs are reported impartitionable without
    proof.
    """
    a = np.asarray(couplings, dtype=float)
    n = len(a)
    if n == 0:
        return DiscrepancyReport(0.0, (), False)
    if n > cap:
        if allow_sampled:
            return DiscrepancyReport(float("nan"), None, True, "sampled-continuous")
        raise DiscrepancyCapError(f"{n} values exceed the exhaustive search cap {cap}")
    # first sign fixed to +1 (global flip symmetry)
    h = (n - 1) // 2
    left, right = a[1 : 1 + h], a[1 + h :]
    ls = a[0] + _signed_sums(left)
    rs = _signed_sums(right)
    order = np.argsort(rs, kind="stable")
    rs_sorted = rs[order]
    pos = np.searchsorted(rs_sorted, -ls)
    best, best_pair = np.inf, (0, 0)
    for off in (-1, 0):
        p = np.clip(pos + off, 0, len(rs_sorted) - 1)
        vals = np.abs(ls + rs_sorted[p])
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_pair = float(vals[i]), (i, int(order[p[i]]))
    li, ri = best_pair
    bits = lambda idx, m: [1 - 2 * ((idx >> (m - 1 - q)) & 1) for q in range(m)]
    witness = tuple([1] + bits(li, len(left)) + bits(ri, len(right)))
    value = abs(float(np.dot(witness, a)))
    return DiscrepancyReport(value, witness, value > rtol * float(np.sum(np.abs(a))))


def time_avg_overlap_sq(spins: Sequence[EnvSpin]) -> float:
    """Long-time average of the squared macrofraction overlap (impartitionable couplings)."""
    c2 = np.array([s.overlap_coefficient for s in spins])
    return float(np.prod(1.0 - 0.5 * c2))


def time_avg_gamma_sq(spins: Sequence[EnvSpin]) -> float:
    """Long-time average of ``|gamma|^2`` (impartitionable couplings)."""
    z2 = np.array([s.zeta**2 for s in spins])
    return float(np.prod(0.5 * (1.0 + z2)))


def numeric_time_average(
    series_fn: Callable[[np.ndarray], np.ndarray],
    T: float,
    steps: int = 1000,
    omega_max: float | None = None,
) -> float:
    """Trapezoid-rule mean of ``series_fn`` over ``[0, T]``.

    ``series_fn`` receives an array of times.  With ``omega_max`` the step is
    refined to ``pi / (10 omega_max)`` when that is finer than ``T / steps``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if steps < 1000:
        raise ValueError("steps must be at least 1000")
    dt = T / steps
    if omega_max:
        dt = min(dt, np.pi / (10.0 * omega_max))
    n = int(np.ceil(T / dt))
    t = np.linspace(0.0, T, n + 1)
    return float(trapezoid(np.asarray(series_fn(t), dtype=float), t) / T)


def time_average_remainder(const, amp, freqs, T: float) -> float:
    """Rigorous bound on ``|mean_[0,T] f - prod(const)|`` for ``f = prod_i (const_i + amp_i cos(freqs_i t))``.

    Expanding the product into cosines of signed frequency sums, each
    non-constant term averages to at most ``min(1, 1/(|nu| T))`` in magnitude.
    Exponential in the number of factors; meant for a handful of spins.
    """
    const, amp, freqs = (np.asarray(x, dtype=float) for x in (const, amp, freqs))
    n = len(freqs)
    total = 0.0
    for r in range(1, n + 1):
        for S in itertools.combinations(range(n), r):
            mask = np.zeros(n, dtype=bool)
            mask[list(S)] = True
            weight = np.prod(np.abs(amp[mask])) * np.prod(np.abs(const[~mask]))
            nu = np.abs(_signed_sums(freqs[mask]))
            with np.errstate(divide="ignore"):
                per = np.where(nu > 0, np.minimum(1.0, 1.0 / (nu * T)), 1.0)
            total += weight * per.mean()
    return float(total)


def cos_product_identity_check(alphas: Sequence[float]) -> tuple[float, float]:
    """Both sides of ``prod cos a_i = 2^-N sum_signs cos(sum s_i a_i)``."""
    a = np.asarray(alphas, dtype=float)
    if len(a) > COS_IDENTITY_CAP:
        raise DiscrepancyCapError(f"{len(a)} angles exceed the cap {COS_IDENTITY_CAP}")
    lhs = float(np.prod(np.cos(a)))
    rhs = float(np.mean(np.cos(_signed_sums(a))))
    return lhs, rhs


def expected_sin2_uniform(t: float) -> float:
    """``E[sin^2(g t)]`` for ``g`` uniform on [0, 1]."""
    return 0.5 - np.sin(2 * t) / (4 * t)


@dataclass(frozen=True)
class EnsembleRow:
    seed: int
    member: int
    N_mac: int
    N_dis: int
    t: float
    log_B: float
    log_gamma_abs2: float
    half_kappa_sum: float
    chi_sum: float
    b_bound: float
    gamma2_bound: float

    @property
    def B(self) -> float:
        return float(np.exp(self.log_B))

    @property
    def gamma_abs2(self) -> float:
        return float(np.exp(self.log_gamma_abs2))

    @property
    def within_b(self) -> bool:
        return self.log_B <= np.log(self.b_bound)

    @property
    def within_gamma(self) -> bool:
        return self.log_gamma_abs2 <= np.log(self.gamma2_bound)

    @property
    def within_bound(self) -> bool:
        return self.within_b and self.within_gamma


def ensemble_member(
    spec: EnsembleSpec,
    index: int,
    N_mac: int,
    N_dis: int,
    t_values: Sequence[float],
    regime: str = "short",
) -> list[EnsembleRow]:
    """One random environment (single central spin) evaluated at every ``t``."""
    rng = member_rng(spec.seed, index)
    n = N_mac + N_dis
    p = sample_env_params(rng, n)
    g = spec.sample_couplings(rng, n)
    pol = 2 * p["lam"] - 1
    c2 = pol**2 * np.sin(p["beta"]) ** 2
    zeta = pol * np.cos(p["beta"])
    t = np.asarray(t_values, dtype=float)
    gm, gd = g[:N_mac], g[N_mac:]
    log_b = overlap_log(c2[:N_mac], gm, t)
    log_g2 = coherence_abs2_log(zeta[N_mac:], gd, t)
    s2m = np.sin(t[:, None] * gm) ** 2
    s2d = np.sin(t[:, None] * gd) ** 2
    half_kappa = 0.5 * np.sum(c2[:N_mac] * s2m, axis=1)
    chis = np.sum(s2d * (1 - zeta[N_mac:] ** 2), axis=1)
    rows = []
    for i, ti in enumerate(t):
        if regime == "short":
            bb = lln_bounds(N_mac, N_dis, spec.g2bar, float(ti))
        elif regime == "long":
            bb = long_time_bounds(N_mac, N_dis)
        else:
            raise ValueError(f"unknown regime {regime!r}")
        rows.append(
            EnsembleRow(
                spec.seed, index, N_mac, N_dis, float(ti),
                float(log_b[i]), float(log_g2[i]), float(half_kappa[i]), float(chis[i]),
                bb.b_bound, bb.gamma2_bound,
            )
        )
    return rows


def run_lln_ensemble(
    spec: EnsembleSpec,
    N_mac: int,
    N_dis: int,
    t_values: Sequence[float],
    members: int,
    regime: str = "short",
    threads: int | None = None,
) -> list[EnsembleRow]:
    """Evaluate ``members`` independent environments; rows ordered by (member, t)."""
    job = lambda i: ensemble_member(spec, i, N_mac, N_dis, t_values, regime)
    if threads == 1:
        chunks = [job(i) for i in range(members)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, range(members)))
    return [row for chunk in chunks for row in chunk]


ENSEMBLE_COLUMNS = (
    "seed", "member", "N_mac", "N_dis", "t", "B", "gamma_abs2",
    "b_bound", "gamma2_bound", "within_bound", "log_B", "log_gamma_abs2",
)


def ensemble_csv(rows: Sequence[EnsembleRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(ENSEMBLE_COLUMNS) + "\n")
    for r in rows:
        buf.write(
            f"{r.seed},{r.member},{r.N_mac},{r.N_dis},{r.t:.17g},{r.B:.17g},{r.gamma_abs2:.17g},"
            f"{r.b_bound:.17g},{r.gamma2_bound:.17g},{int(r.within_bound)},{r.log_B:.17g},{r.log_gamma_abs2:.17g}\n"
        )
    return buf.getvalue()


def proportion_test(successes: int, n: int, p0: float = 0.95, alpha: float = 0.01) -> tuple[bool, float]:
    """Accept ``P(success) >= p0`` unless a one-sided binomial test rejects it at level ``alpha``."""
    pvalue = float(sps.binomtest(successes, n, p0, alternative="less").pvalue)
    return pvalue >= alpha, pvalue
