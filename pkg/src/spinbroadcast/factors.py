"""Closed-form overlap (orthogonalization) and decoherence factors.

Frequency convention
--------------------
The per-spin primitives (:func:`single_spin_overlap`, :func:`macrofraction_overlap`,
:func:`decoherence_factor`) take the angular rate at which a single environment
spin's conditional states precess relative to each other, i.e. ``g_j`` for a
single central spin.  For a register pair the relative precession rate of spin
``j`` is half the pair frequency ``omega_j = sum_i (e1_i - e2_i) g_ij``; the
register-level helpers :func:`pair_overlap` and :func:`pair_decoherence` apply
that factor and fix the phase so that ``pair_decoherence(e1, e2)`` equals
``prod_j Tr[U_e1 rho_j U_e2^dagger]`` exactly.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .model import (
    CentralState,
    CouplingMatrix,
    DimensionError,
    EnvSpin,
    Partition,
    RegisterLabel,
    spin_arrays,
)

__all__ = [
    "EmptyMacrofractionWarning",
    "UnsupportedCaseError",
    "FactorSeries",
    "pair_frequencies",
    "single_spin_overlap",
    "macrofraction_overlap",
    "log_macrofraction_overlap",
    "decoherence_factor",
    "log_abs2_decoherence_factor",
    "overlap_log",
    "coherence_abs2_log",
    "pair_overlap",
    "pair_decoherence",
    "sbs_error_bound",
    "factor_sweep",
]

# Switch to log-space accumulation above this many factors (when some are small).
LOG_SPACE_MIN_COUNT = 64
LOG_SPACE_FACTOR = 0.5


class EmptyMacrofractionWarning(UserWarning):
    pass


class UnsupportedCaseError(NotImplementedError):
    pass


def pair_frequencies(G: CouplingMatrix, e1: RegisterLabel, e2: RegisterLabel) -> np.ndarray:
    """``omega[j] = sum_i (e1_i - e2_i) g[i, j]`` for every environment spin j."""
    if e1.K != G.K or e2.K != G.K:
        raise DimensionError(f"labels of length {e1.K}/{e2.K} do not match K={G.K}")
    d = e1.as_array() - e2.as_array()
    return d @ G.entries


def _phases(rates, t) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    t = np.asarray(t, dtype=float)
    return t[..., None] * rates


def _accumulate(terms: np.ndarray):
    """Product over the last axis; log-space for long chains of small factors."""
    n = terms.shape[-1]
    if n == 0:
        return np.ones(terms.shape[:-1], dtype=terms.dtype)
    mags = np.abs(terms)
    if n <= LOG_SPACE_MIN_COUNT or not np.any(mags < LOG_SPACE_FACTOR):
        return np.prod(terms, axis=-1)
    zero = np.any(mags == 0.0, axis=-1)
    with np.errstate(divide="ignore"):
        logmag = np.sum(np.log(mags), axis=-1)
    if np.iscomplexobj(terms):
        phase = np.sum(np.angle(terms), axis=-1)
        out = np.exp(logmag + 1j * phase)
    else:
        sign = np.prod(np.sign(terms), axis=-1)
        out = sign * np.exp(logmag)
    return np.where(zero, 0.0, out)


def _overlap_terms(c2, rates, t):
    s2 = np.sin(_phases(rates, t)) ** 2
    return np.sqrt(np.clip(1.0 - c2 * s2, 0.0, None))


def _coherence_terms(zeta, rates, t):
    ph = _phases(rates, t)
    return np.cos(ph) + 1j * zeta * np.sin(ph)


def overlap_log(c2, rates, t):
    """``log B`` from per-spin amplitudes ``c2 = (2 lam - 1)^2 sin^2 beta``.

    Works on arrays: the last axis runs over spins, ``t`` broadcasts in front.
    """
    s2 = np.sin(_phases(rates, t)) ** 2
    with np.errstate(divide="ignore"):
        return 0.5 * np.sum(np.log1p(-np.asarray(c2) * s2), axis=-1)


def coherence_abs2_log(zeta, rates, t):
    """``log |gamma|^2``; each factor has modulus squared ``1 - (1 - zeta^2) sin^2``."""
    s2 = np.sin(_phases(rates, t)) ** 2
    with np.errstate(divide="ignore"):
        return np.sum(np.log1p(-(1.0 - np.asarray(zeta) ** 2) * s2), axis=-1)


def _check_lengths(spins, omegas):
    omegas = np.asarray(omegas, dtype=float)
    if omegas.shape != (len(spins),):
        raise DimensionError(f"{len(spins)} spins but {omegas.shape} frequencies")
    return omegas


def _c2_zeta(spins):
    lam, beta = spin_arrays(spins)
    pol = 2.0 * lam - 1.0
    return pol**2 * np.sin(beta) ** 2, pol * np.cos(beta)


def single_spin_overlap(spin: EnvSpin, omega: float, t: float) -> float:
    """Generalized fidelity of one spin's two conditional states at time ``t``."""
    s = np.sin(omega * t)
    return float(np.sqrt(max(0.0, 1.0 - spin.overlap_coefficient * s * s)))


def macrofraction_overlap(spins: Sequence[EnvSpin], omegas, t: float) -> float:
    """Product of single-spin overlaps over a macrofraction.

    An empty macrofraction returns 1 and emits :class:`EmptyMacrofractionWarning`.
    """
    omegas = _check_lengths(spins, omegas)
    if not spins:
        warnings.warn("empty macrofraction, overlap set to 1", EmptyMacrofractionWarning, stacklevel=2)
        return 1.0
    c2, _ = _c2_zeta(spins)
    return float(_accumulate(_overlap_terms(c2, omegas, t)))


def log_macrofraction_overlap(spins: Sequence[EnvSpin], omegas, t: float) -> float:
    omegas = _check_lengths(spins, omegas)
    c2, _ = _c2_zeta(spins)
    return float(overlap_log(c2, omegas, t))


def decoherence_factor(spins: Sequence[EnvSpin], omegas, t: float) -> complex:
    """``prod_j [cos(omega_j t) + i zeta_j sin(omega_j t)]``; 1 for no spins."""
    omegas = _check_lengths(spins, omegas)
    if not spins:
        return 1.0 + 0.0j
    _, zeta = _c2_zeta(spins)
    return complex(_accumulate(_coherence_terms(zeta, omegas, t)))


def log_abs2_decoherence_factor(spins: Sequence[EnvSpin], omegas, t: float) -> float:
    omegas = _check_lengths(spins, omegas)
    _, zeta = _c2_zeta(spins)
    return float(coherence_abs2_log(zeta, omegas, t))


def pair_overlap(
    G: CouplingMatrix,
    partition: Partition,
    spins: Sequence[EnvSpin],
    e1: RegisterLabel,
    e2: RegisterLabel,
    k: int,
    t: float,
) -> float:
    """Overlap of macrofraction ``k``'s conditional states for labels ``e1``/``e2``."""
    mac = partition.macrofractions[k]
    omega = pair_frequencies(G, e1, e2)[list(mac)]
    return macrofraction_overlap([spins[j] for j in mac], 0.5 * omega, t)


def pair_decoherence(
    G: CouplingMatrix,
    partition: Partition,
    spins: Sequence[EnvSpin],
    e1: RegisterLabel,
    e2: RegisterLabel,
    t: float,
    indices: Sequence[int] | None = None,
) -> complex:
    """Decoherence factor of the ``|e1><e2|`` coherence over the unobserved spins.

    ``indices`` overrides the spin set (used for the extra factor obtained by
    tracing out an observed macrofraction).
    """
    idx = list(partition.unobserved if indices is None else indices)
    omega = pair_frequencies(G, e1, e2)[idx]
    # Tr[U_e1 rho U_e2^dag] = cos(w t / 2) - i zeta sin(w t / 2)
    return decoherence_factor([spins[j] for j in idx], -0.5 * omega, t)


def sbs_error_bound(state: CentralState, gamma_abs: float, b_values: Sequence[float]) -> float:
    """Upper bound on the trace distance of a single-qubit partially traced state to SBS form.

    ``|sigma_+-| |gamma| + sqrt(sigma_+ sigma_-) * sum_k B_k``.  Registers with
    more than one spin are refused: no bound of this form is available for them.
    """
    if state.K != 1:
        raise UnsupportedCaseError("SBS error bound is only available for a single central spin")
    if not 0.0 <= gamma_abs <= 1.0 + 1e-12:
        raise ValueError(f"gamma_abs must lie in [0, 1], got {gamma_abs}")
    b = np.asarray(b_values, dtype=float)
    if np.any(b < 0.0) or np.any(b > 1.0 + 1e-12):
        raise ValueError("overlap values must lie in [0, 1]")
    return abs(state.sigma_pm) * gamma_abs + np.sqrt(state.sigma_plus * state.sigma_minus) * float(b.sum())


@dataclass(frozen=True)
class FactorSeries:
    times: np.ndarray
    values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,value_re,value_im\n")
        vals = np.asarray(self.values, dtype=complex)
        for t, v in zip(self.times, vals):
            buf.write(f"{t:.17g},{v.real:.17g},{v.imag:.17g}\n")
        return buf.getvalue()


def factor_sweep(
    kind: Literal["overlap", "decoherence"],
    spins: Sequence[EnvSpin],
    omegas,
    t_grid,
) -> FactorSeries:
    """Evaluate an overlap or decoherence factor on a grid of times."""
    omegas = _check_lengths(spins, omegas)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    c2, zeta = _c2_zeta(spins)
    if kind == "overlap":
        values = _accumulate(_overlap_terms(c2, omegas, t))
    elif kind == "decoherence":
        values = _accumulate(_coherence_terms(zeta, omegas, t))
    else:
        raise ValueError(f"unknown factor kind {kind!r}")
    return FactorSeries(t, np.broadcast_to(values, t.shape).copy())
