"""Randomized setups and the comparisons run by the command-line scenarios."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import factors, oracle, stats, structure
from .model import CentralState, CouplingMatrix, EnvSpin, Partition, all_labels


@dataclass(frozen=True)
class Setup:
    state: CentralState
    spins: list[EnvSpin]
    G: CouplingMatrix
    partition: Partition


def random_partition(rng: np.random.Generator, N: int, n_macs: int | None = None) -> Partition:
    """Random disjoint macrofractions (each non-empty); leftover spins are unobserved."""
    if n_macs is None:
        n_macs = int(rng.integers(1, min(3, N) + 1))
    n_obs = int(rng.integers(n_macs, N + 1))
    perm = rng.permutation(N)[:n_obs]
    cuts = np.sort(rng.choice(np.arange(1, n_obs), size=n_macs - 1, replace=False)) if n_macs > 1 else []
    macs = [tuple(int(j) for j in chunk) for chunk in np.split(perm, cuts)]
    return Partition(N, tuple(macs))


def random_setup(
    rng: np.random.Generator,
    K: int,
    N: int,
    partition: Partition | None = None,
    coupling_scale: float = 1.0,
) -> Setup:
    spins = stats.sample_env_spins(rng, N)
    G = CouplingMatrix(coupling_scale * rng.random((K, N)))
    state = stats.random_central_state(K, rng)
    if partition is None:
        partition = random_partition(rng, N)
    return Setup(state, spins, G, partition)


def label_pairs(K: int):
    return list(itertools.combinations(list(all_labels(K)), 2))


def oracle_equivalence(setup: Setup, times: Sequence[float], full_route: bool = True) -> dict:
    """Largest deviations between closed forms and the exact simulator.

    Per-macrofraction overlaps and decoherence factors are compared with the
    explicit conditional-state route; with ``full_route`` every off-diagonal
    block of the evolved, partially traced joint state is compared with
    ``sigma gamma (x) conditional block`` as well.
    """
    s = setup
    err_b = err_g = err_blk = 0.0
    for t in times:
        reduced = oracle.reduced_register_env_state(s.state, s.spins, s.G, s.partition, t) if full_route else None
        for e1, e2 in label_pairs(s.G.K):
            for k, mac in enumerate(s.partition.macrofractions):
                b = factors.pair_overlap(s.G, s.partition, s.spins, e1, e2, k, t)
                err_b = max(err_b, abs(b - oracle.exact_pair_overlap(s.spins, s.G, mac, e1, e2, t)))
            g = factors.pair_decoherence(s.G, s.partition, s.spins, e1, e2, t)
            g_exact = oracle.exact_pair_decoherence(s.spins, s.G, s.partition.unobserved, e1, e2, t)
            err_g = max(err_g, abs(g - g_exact))
            if reduced is not None:
                closed = s.state.coefficient(e1, e2) * g * structure.conditional_block(
                    s.spins, s.G, s.partition.observed, e1, e2, t
                )
                err_blk = max(err_blk, float(np.max(np.abs(reduced.block(e1, e2) - closed))))
    return {"max_overlap_error": err_b, "max_decoherence_error": err_g, "max_block_error": err_blk}


def sbs_bound_rows(setup: Setup, times: Sequence[float]) -> list[dict]:
    """Trace distance of the exact state to the explicit SBS candidate against the error bound."""
    s = setup
    plus, minus = all_labels(1)
    rows = []
    for t in times:
        rho = oracle.reduced_register_env_state(s.state, s.spins, s.G, s.partition, t)
        cand = structure.sbs_candidate(s.state, s.spins, s.G, s.partition, t)
        dist = oracle.trace_distance_to_sbs(rho, cand)
        gam = abs(factors.pair_decoherence(s.G, s.partition, s.spins, plus, minus, t))
        bs = [factors.pair_overlap(s.G, s.partition, s.spins, plus, minus, k, t) for k in range(s.partition.f_times_M)]
        bound = factors.sbs_error_bound(s.state, min(gam, 1.0), np.minimum(bs, 1.0))
        rows.append({"t": float(t), "distance": dist, "bound": float(bound)})
    return rows


def impartitionable_spins(rng: np.random.Generator, n: int, T: float, rel: float = 0.01, max_tries: int = 10_000):
    """Draw ``n`` spins and couplings whose finite-``T`` averages are provably within ``rel`` of the limits.

    Returns ``(spins, couplings, tries)``.
    """
    for tries in range(1, max_tries + 1):
        spins = stats.sample_env_spins(rng, n)
        g = rng.random(n)
        if stats.min_discrepancy(2 * g).impartitionable and _remainders(spins, g, T) <= rel:
            return spins, g, tries
    raise RuntimeError("no configuration met the remainder criterion")


def _remainders(spins, g, T) -> float:
    c2 = np.array([s.overlap_coefficient for s in spins])
    z2 = np.array([s.zeta**2 for s in spins])
    cb, cg = stats.time_avg_overlap_sq(spins), stats.time_avg_gamma_sq(spins)
    rb = stats.time_average_remainder(1 - c2 / 2, c2 / 2, 2 * g, T) / cb
    rg = stats.time_average_remainder((1 + z2) / 2, (1 - z2) / 2, 2 * g, T) / cg
    return max(rb, rg)


def time_average_case(spins, g, T: float, steps: int = 200_000) -> dict:
    """Closed-form long-time averages against trapezoid averages over ``[0, T]``."""
    c2 = np.array([s.overlap_coefficient for s in spins])
    z2 = np.array([s.zeta**2 for s in spins])
    g = np.asarray(g, dtype=float)
    wmax = 2 * float(np.sum(g))
    nb = stats.numeric_time_average(lambda t: np.prod(1 - c2 * np.sin(np.outer(t, g)) ** 2, axis=1), T, steps, wmax)
    ng = stats.numeric_time_average(lambda t: np.prod(1 - (1 - z2) * np.sin(np.outer(t, g)) ** 2, axis=1), T, steps, wmax)
    cb, cg = stats.time_avg_overlap_sq(spins), stats.time_avg_gamma_sq(spins)
    return {
        "closed_overlap_sq": cb,
        "numeric_overlap_sq": nb,
        "closed_gamma_sq": cg,
        "numeric_gamma_sq": ng,
        "remainder_bound": _remainders(spins, g, T),
    }
