"""Decoherence-free / orthogonalization-free pairs and regime-specific asymptotic states.

A register pair ``(e1, e2)`` only enters through the frequencies
``omega_j = sum_i (e1_i - e2_i) g_ij``.  A pair is strong-DFS when ``omega``
vanishes on every unobserved spin and OFS when it vanishes on every observed
spin; both depend only on ``d = (e1 - e2) / 2`` which lies in ``{0, +1, -1}^K``.
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .factors import UnsupportedCaseError, decoherence_factor, pair_decoherence, pair_frequencies
from .model import (
    CentralState,
    CouplingMatrix,
    DimensionError,
    EnvSpin,
    Partition,
    RegisterLabel,
    all_labels,
)
from .oracle import DEFAULT_MAX_DIM, DensityMatrix, ResourceCapError

__all__ = [
    "PairKind",
    "PairClass",
    "DegeneratePairError",
    "PairCapError",
    "classify_pair",
    "kernel_differences",
    "pairs_from_difference",
    "find_dfs_pairs",
    "find_ofs_pairs",
    "extra_decoherence_factor",
    "conditional_block",
    "sbs_candidate",
    "asymptotic_state",
    "scan_report",
]

PAIR_CAP = 20
BRUTE_FORCE_MAX_K = 12
DEFAULT_TOL = 1e-12


class PairKind(enum.Enum):
    GENERIC = "generic"
    OFS_AND_STRONG_DFS = "ofs_and_strong_dfs"
    DECOHERE_NO_ORTH = "decohere_no_orth"
    ORTH_NO_DECOHERE = "orth_no_decohere"
    MIXED = "mixed"


class DegeneratePairError(ValueError):
    pass


class PairCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairClass:
    kind: PairKind
    weak_dfs: bool
    structural_zero: bool = False

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "weak_dfs": self.weak_dfs, "structural_zero": self.structural_zero}


def _structural_zero(G: CouplingMatrix, d: np.ndarray, j: int) -> bool:
    """True when ``sum_i d_i g_ij`` cancels because equal entries carry opposite signs."""
    col = G.entries[:, j]
    for value in np.unique(col):
        if value != 0.0 and d[col == value].sum() != 0:
            return False
    return True


def classify_pair(
    G: CouplingMatrix,
    partition: Partition,
    e1: RegisterLabel,
    e2: RegisterLabel,
    spins: Sequence[EnvSpin] | None = None,
    tol: float = DEFAULT_TOL,
) -> PairClass:
    """Regime of the pair from the zero pattern of its frequencies.

    An unobserved spin keeps ``|gamma_j| = 1`` when ``omega_j = 0`` or
    ``zeta_j**2 = 1``; the weak-DFS flag uses ``zeta_j**2`` rather than only
    ``zeta_j = 1``, since a spin fully polarized along ``-z`` decoheres nothing
    either.  Without ``spins`` the flag falls back to the strong condition.
    ``structural_zero`` is set when at least one frequency is zero and every
    zero is an exact cancellation between repeated coupling values.
    """
    if e1 == e2:
        raise DegeneratePairError("classification needs two distinct labels")
    if partition.N != G.N:
        raise DimensionError("partition and coupling matrix disagree on N")
    omega = pair_frequencies(G, e1, e2)
    zero = np.abs(omega) < tol * G.scale if G.scale > 0 else np.ones(G.N, dtype=bool)
    obs = np.zeros(G.N, dtype=bool)
    obs[list(partition.observed)] = True
    if zero.all():
        kind = PairKind.OFS_AND_STRONG_DFS
    elif not zero.any():
        kind = PairKind.GENERIC
    elif zero[obs].all() and not zero[~obs].any():
        kind = PairKind.DECOHERE_NO_ORTH
    elif not zero[obs].any() and zero[~obs].all():
        kind = PairKind.ORTH_NO_DECOHERE
    else:
        kind = PairKind.MIXED
    unobs = np.flatnonzero(~obs)
    if spins is None:
        weak = bool(zero[unobs].all())
    else:
        weak = all(zero[j] or abs(spins[j].zeta ** 2 - 1.0) < tol for j in unobs)
    d = 0.5 * (e1.as_array() - e2.as_array())
    zeros = np.flatnonzero(zero)
    structural = bool(zeros.size) and all(_structural_zero(G, d, j) for j in zeros)
    return PairClass(kind, weak, structural)


def _ternary(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product((0.0, 1.0, -1.0), repeat=n)))


def _canonical(d: np.ndarray) -> bool:
    nz = np.flatnonzero(d)
    return nz.size > 0 and d[nz[0]] > 0


def kernel_differences(
    block: np.ndarray, scale: float, tol: float = DEFAULT_TOL, cap: int = PAIR_CAP
) -> list[tuple[int, ...]]:
    """Nonzero ``d`` in ``{0, +1, -1}^K`` (first nonzero entry +1) with ``|2 d @ block| < tol * scale``.

    Small registers are enumerated directly; larger ones split the rows in two
    halves and match partial sums with a k-d tree.
    """
    block = np.asarray(block, dtype=float)
    K = block.shape[0]
    if K > cap:
        raise PairCapError(f"register of {K} spins exceeds the pair-search cap {cap}")
    thr = tol * scale if scale > 0 else np.inf
    if block.shape[1] == 0:
        cands = _ternary(K)
    elif K <= BRUTE_FORCE_MAX_K:
        D = _ternary(K)
        cands = D[np.all(np.abs(2.0 * D @ block) < thr, axis=1)]
    else:
        h = K // 2
        DA, DB = _ternary(h), _ternary(K - h)
        VA, VB = 2.0 * DA @ block[:h], 2.0 * DB @ block[h:]
        tree = cKDTree(VB)
        found = []
        for ia, hits in enumerate(tree.query_ball_point(-VA, r=thr, p=np.inf)):
            for ib in hits:
                found.append(np.concatenate([DA[ia], DB[ib]]))
        cands = np.array(found).reshape(-1, K)
        if len(cands):
            cands = cands[np.all(np.abs(2.0 * cands @ block) < thr, axis=1)]
    out = [tuple(int(x) for x in d) for d in cands if _canonical(d)]
    return sorted(out, reverse=True)


def pairs_from_difference(d: Sequence[int]) -> list[tuple[RegisterLabel, RegisterLabel]]:
    """All label pairs with ``(e1 - e2) / 2 = d``; free positions take both values."""
    d = list(d)
    free = [i for i, x in enumerate(d) if x == 0]
    out = []
    for vals in itertools.product((1, -1), repeat=len(free)):
        b1 = list(d)
        b2 = [-x for x in d]
        for i, v in zip(free, vals):
            b1[i] = b2[i] = v
        out.append((RegisterLabel(tuple(b1)), RegisterLabel(tuple(b2))))
    return out


def _find_pairs(G: CouplingMatrix, cols: Sequence[int], tol: float, cap: int):
    diffs = kernel_differences(G.entries[:, list(cols)], G.scale, tol, cap)
    return [p for d in diffs for p in pairs_from_difference(d)]


def find_dfs_pairs(
    G: CouplingMatrix, partition: Partition, tol: float = DEFAULT_TOL, cap: int = PAIR_CAP
) -> list[tuple[RegisterLabel, RegisterLabel]]:
    """Unordered pairs whose frequencies vanish on every unobserved spin (strong DFS)."""
    return _find_pairs(G, partition.unobserved, tol, cap)


def find_ofs_pairs(
    G: CouplingMatrix, partition: Partition, tol: float = DEFAULT_TOL, cap: int = PAIR_CAP
) -> list[tuple[RegisterLabel, RegisterLabel]]:
    """Unordered pairs whose frequencies vanish on every observed spin."""
    return _find_pairs(G, partition.observed, tol, cap)


def extra_decoherence_factor(
    mac_spins: Sequence[EnvSpin], e1: RegisterLabel, e2: RegisterLabel, G_mac: CouplingMatrix, t: float
) -> complex:
    """Factor ``prod_j Tr[U_e1 rho_j U_e2^dagger]`` picked up when an observed macrofraction is traced out.

    ``G_mac`` holds the coupling columns of the macrofraction's spins.
    """
    omega = pair_frequencies(G_mac, e1, e2)
    return decoherence_factor(list(mac_spins), -0.5 * omega, t)


def _spin_matrix(spin: EnvSpin) -> np.ndarray:
    rho00 = 0.5 * (1.0 + spin.zeta)
    rho01 = spin.theta * np.exp(1j * spin.alpha)
    return np.array([[rho00, rho01], [np.conj(rho01), 1.0 - rho00]])


def conditional_block(
    spins: Sequence[EnvSpin], G: CouplingMatrix, indices: Sequence[int], e1: RegisterLabel, e2: RegisterLabel, t: float
) -> np.ndarray:
    """``(x)_j U_e1 rho_j U_e2^dagger`` over ``indices`` (in the given order)."""
    if not len(indices):
        return np.ones((1, 1), dtype=complex)
    h1 = e1.as_array() @ G.entries[:, list(indices)]
    h2 = e2.as_array() @ G.entries[:, list(indices)]
    mats = []
    for j, a, b in zip(indices, h1, h2):
        u1 = np.exp(-0.5j * t * a * np.array([1.0, -1.0]))
        u2 = np.exp(-0.5j * t * b * np.array([1.0, -1.0]))
        mats.append(u1[:, None] * _spin_matrix(spins[j]) * u2.conj()[None, :])
    return reduce(np.kron, mats)


def _reorder(op: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Permute qubit factors listed in ``order`` into ascending index order."""
    n = len(order)
    if n <= 1:
        return op
    perm = list(np.argsort(order))
    t = op.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def _trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def _best_split(rp: np.ndarray, rm: np.ndarray, sp: float, sm: float) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonally supported approximants of two states.

    For a sweep of ratios ``c`` (including the Helstrom ratio ``sm / sp``) the
    space is split along the eigenvectors of ``rp - c rm`` at its sign change
    (and one vector either side); the split with the smallest weighted
    trace-distance cost wins.
    """
    d = rp.shape[0]
    ratios = np.concatenate([np.geomspace(1e-4, 1e4, 81), [sm / sp if sp > 0 else 1.0]])
    best, out = np.inf, (rp, rm)
    for c in ratios:
        w, v = np.linalg.eigh(rp - c * rm)
        n_pos = int(np.sum(w > 0))
        for m in sorted({min(d - 1, max(1, n_pos + k)) for k in (-1, 0, 1)}):
            V = v[:, d - m :]
            P = V @ V.conj().T
            Q = np.eye(d) - P
            a, b = P @ rp @ P, Q @ rm @ Q
            ta, tb = np.trace(a).real, np.trace(b).real
            if ta < 1e-14 or tb < 1e-14:
                continue
            a, b = (a + a.conj().T) / (2 * ta), (b + b.conj().T) / (2 * tb)
            cost = sp * _trace_distance(rp, a) + sm * _trace_distance(rm, b)
            if cost < best:
                best, out = cost, (a, b)
    return out


def _check_dim(K: int, n_obs: int, max_dim: int):
    dim = 2 ** (K + n_obs)
    if dim > max_dim:
        raise ResourceCapError(dim, max_dim)


def sbs_candidate(
    state: CentralState,
    spins: Sequence[EnvSpin],
    G: CouplingMatrix,
    partition: Partition,
    t: float,
    max_dim: int = DEFAULT_MAX_DIM,
) -> DensityMatrix:
    """Explicit SBS state close to the register + observed state of a single central spin.

    Each macrofraction's two conditional states are replaced by orthogonally
    supported approximants; off-diagonal blocks are dropped.  The register
    collapsed onto either branch is also a (single-term) SBS state, and the
    closest of the three to the true state is returned, so its distance is an
    upper bound on the optimal SBS distance.
    """
    if state.K != 1:
        raise UnsupportedCaseError("orthogonalized SBS candidates are built for a single central spin only")
    _check_dim(1, len(partition.observed), max_dim)
    plus, minus = RegisterLabel((1,)), RegisterLabel((-1,))
    sp, sm = state.sigma_plus, state.sigma_minus
    parts = {plus: [], minus: []}
    order = [j for m in partition.macrofractions for j in m]
    for mac in partition.macrofractions:
        rp = conditional_block(spins, G, mac, plus, plus, t)
        rm = conditional_block(spins, G, mac, minus, minus, t)
        a, b = _best_split(rp, rm, sp, sm)
        parts[plus].append(a)
        parts[minus].append(b)
    n = len(order)
    obs = sorted(order)
    size = 2**n
    split = np.zeros((2 * size, 2 * size), dtype=complex)
    exact = np.zeros_like(split)
    for e1 in (plus, minus):
        b1 = slice(e1.index * size, (e1.index + 1) * size)
        for e2 in (plus, minus):
            b2 = slice(e2.index * size, (e2.index + 1) * size)
            gam = 1.0 if e1 == e2 else pair_decoherence(G, partition, spins, e1, e2, t)
            exact[b1, b2] = state.coefficient(e1, e2) * gam * conditional_block(spins, G, obs, e1, e2, t)
        w = sp if e1 == plus else sm
        split[b1, b1] = w * _reorder(reduce(np.kron, parts[e1], np.ones((1, 1))), order)
    # a register collapsed onto one branch is trivially SBS and wins when that branch dominates
    best, out = _trace_distance(exact, split), split
    for e in (plus, minus):
        blk = slice(e.index * size, (e.index + 1) * size)
        diag = exact[blk, blk]
        tr = np.trace(diag).real
        if tr <= 0:
            continue
        collapsed = np.zeros_like(split)
        collapsed[blk, blk] = diag / tr
        dist = _trace_distance(exact, collapsed)
        if dist < best:
            best, out = dist, collapsed
    return DensityMatrix(out, (2,) * (1 + n))


def asymptotic_state(
    case: PairClass | PairKind,
    state: CentralState,
    spins: Sequence[EnvSpin],
    G: CouplingMatrix,
    partition: Partition,
    t: float,
    protected: Iterable[tuple[RegisterLabel, RegisterLabel]] = (),
    max_dim: int = DEFAULT_MAX_DIM,
) -> DensityMatrix:
    """Idealized register + observed state for one of the four regimes.

    Diagonal blocks are ``sigma_ee (x)_j U_e rho_j U_e^dagger``.  Off-diagonal
    blocks are kept, as evolved, only for the ``protected`` pairs of the
    ``OFS_AND_STRONG_DFS`` and ``ORTH_NO_DECOHERE`` regimes, where they are
    required; every other coherence is dropped.  Passing more than one protected pair builds the multi-block
    generalization.  ``GENERIC`` with a single central spin returns
    :func:`sbs_candidate`.
    """
    kind = case.kind if isinstance(case, PairClass) else PairKind(case)
    protected = list(protected)
    if kind is PairKind.MIXED:
        raise UnsupportedCaseError("no asymptotic form for pairs with mixed zero patterns")
    if kind in (PairKind.OFS_AND_STRONG_DFS, PairKind.ORTH_NO_DECOHERE) and not protected:
        raise ValueError(f"{kind.value} needs at least one protected pair")
    if kind is PairKind.GENERIC and state.K == 1:
        return sbs_candidate(state, spins, G, partition, t, max_dim)
    K = G.K
    obs = list(partition.observed)
    _check_dim(K, len(obs), max_dim)
    n = 2 ** len(obs)
    out = np.zeros((2**K * n, 2**K * n), dtype=complex)
    blocks = [(e, e) for e in all_labels(K)]
    if kind is not PairKind.OFS_AND_STRONG_DFS and kind is not PairKind.ORTH_NO_DECOHERE:
        protected = []
    for e1, e2 in protected:
        blocks += [(e1, e2), (e2, e1)]
    for e1, e2 in blocks:
        s = state.coefficient(e1, e2)
        if e1 != e2:
            omega = pair_frequencies(G, e1, e2)[list(partition.unobserved)]
            s *= decoherence_factor([spins[j] for j in partition.unobserved], -0.5 * omega, t)
        r, c = e1.index * n, e2.index * n
        out[r : r + n, c : c + n] = s * conditional_block(spins, G, obs, e1, e2, t)
    return DensityMatrix(out, (2,) * (K + len(obs)))


def scan_report(
    G: CouplingMatrix,
    partition: Partition,
    spins: Sequence[EnvSpin] | None = None,
    tol: float = DEFAULT_TOL,
    cap: int = PAIR_CAP,
) -> dict:
    """Structured listing of every DFS or OFS pair with its class flags.

    A block without spins (no unobserved or no observed spins) is skipped
    when the other block is not empty, since every pair would qualify.
    """
    diffs = {}
    blocks = [("dfs", partition.unobserved), ("ofs", partition.observed)]
    # an empty block makes every pair qualify vacuously; list those only if nothing else is searched
    searched = [(label, cols) for label, cols in blocks if cols] or blocks
    for label, cols in searched:
        for d in kernel_differences(G.entries[:, list(cols)], G.scale, tol, cap):
            diffs.setdefault(d, set()).add(label)
    entries = []
    for d in sorted(diffs, reverse=True):
        for e1, e2 in pairs_from_difference(d):
            cls = classify_pair(G, partition, e1, e2, spins, tol)
            entries.append(
                {
                    "e1": str(e1),
                    "e2": str(e2),
                    "difference": [2 * x for x in d],
                    "found_by": sorted(diffs[d]),
                    **cls.to_dict(),
                }
            )
    return {
        "K": G.K,
        "N": G.N,
        "partition": partition.to_dict(),
        "tolerance": tol,
        "searched": [label for label, _ in searched],
        "n_pairs": len(entries),
        "pairs": entries,
    }


def scan_report_text(report: dict) -> str:
    return json.dumps(report, indent=2)
