"""Brute-force density-matrix simulator used as ground truth for the closed forms.

Subsystem order is fixed: register qubits first, then environment spins in
ascending index order.  The interaction is diagonal in the joint sigma_z basis,
so time evolution is a phase map on the product basis and the unitary is never
materialized.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .model import (
    CentralState,
    CouplingMatrix,
    DimensionError,
    EnvSpin,
    InvalidStateError,
    Partition,
    RegisterLabel,
)

__all__ = [
    "DEFAULT_MAX_DIM",
    "ResourceCapError",
    "DomainError",
    "DensityMatrix",
    "euler_rotation",
    "env_spin_state",
    "conditional_unitary",
    "conditional_env_block",
    "product_state",
    "evolve_full",
    "partial_trace",
    "generalized_fidelity",
    "trace_distance",
    "trace_distance_to_sbs",
    "reduced_register_env_state",
    "exact_pair_overlap",
    "exact_pair_decoherence",
]

DEFAULT_MAX_DIM = 2**13
EIG_CLAMP = 1e-10
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


class ResourceCapError(RuntimeError):
    def __init__(self, dim: int, cap: int):
        super().__init__(f"Hilbert dimension {dim} exceeds oracle cap {cap}")
        self.dim = dim
        self.cap = cap


class DomainError(ValueError):
    """Input is not positive semidefinite within tolerance."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix with its tensor-factor dimensions."""

    data: np.ndarray
    dims: tuple[int, ...] = ()
    validate: bool = True

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        n = a.shape[0]
        if a.ndim != 2 or a.shape != (n, n):
            raise DimensionError(f"density matrix must be square, got shape {a.shape}")
        dims = tuple(int(d) for d in self.dims) or (n,)
        if int(np.prod(dims)) != n:
            raise DimensionError(f"subsystem dims {dims} do not multiply to {n}")
        if self.validate:
            if not np.allclose(a, a.conj().T, rtol=0.0, atol=1e-12):
                raise InvalidStateError("density matrix is not Hermitian")
            if abs(np.trace(a) - 1.0) > 1e-12:
                raise InvalidStateError(f"trace is {np.trace(a).real!r}, expected 1")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)

    def is_psd(self, tol: float = EIG_CLAMP) -> bool:
        return bool(self.eigenvalues()[0] >= -tol)

    def block(self, e1: RegisterLabel, e2: RegisterLabel) -> np.ndarray:
        """Environment operator ``<e1| rho |e2>`` for register-first states."""
        K = e1.K
        reg = 2**K
        if self.dims[:K] != (2,) * K:
            raise DimensionError("state does not start with a K-qubit register")
        rest = self.dim // reg
        return self.data.reshape(reg, rest, reg, rest)[e1.index, :, e2.index, :]

    def to_dict(self) -> dict:
        flat = self.data.reshape(-1)
        return {
            "dims": list(self.dims),
            "entries": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DensityMatrix":
        dims = tuple(d["dims"])
        n = int(np.prod(dims))
        z = np.array(d["entries"], dtype=float)
        return cls((z[:, 0] + 1j * z[:, 1]).reshape(n, n), dims)


def euler_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``exp(i a/2 sz) exp(i b/2 sy) exp(i g/2 sz)`` built from matrix exponentials."""
    sy = np.array([[0, -1j], [1j, 0]])
    return expm(0.5j * alpha * SIGMA_Z) @ expm(0.5j * beta * sy) @ expm(0.5j * gamma * SIGMA_Z)


def env_spin_state(spin: EnvSpin) -> DensityMatrix:
    R = euler_rotation(spin.alpha, spin.beta, spin.gamma_euler)
    D = np.diag([spin.lam, 1.0 - spin.lam])
    rho = R @ D @ R.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T), (2,))


def conditional_unitary(G: CouplingMatrix, label: RegisterLabel, j: int, t: float) -> np.ndarray:
    """``exp[-(i/2) t (sum_i eps_i g_ij) sz]`` acting on environment spin ``j``."""
    h = float(label.as_array() @ G.entries[:, j])
    return expm(-0.5j * t * h * SIGMA_Z)


def conditional_env_block(
    spin: EnvSpin, G: CouplingMatrix, e1: RegisterLabel, e2: RegisterLabel, j: int, t: float
) -> np.ndarray:
    """``U_e1 rho_j(0) U_e2^dagger`` for environment spin ``j``."""
    rho = env_spin_state(spin).data
    return conditional_unitary(G, e1, j, t) @ rho @ conditional_unitary(G, e2, j, t).conj().T


def product_state(central: CentralState, spins: Sequence[EnvSpin], max_dim: int = DEFAULT_MAX_DIM) -> DensityMatrix:
    """``rho_S (x) rho_1 (x) ... (x) rho_N``."""
    dim = central.matrix.shape[0] * 2 ** len(spins)
    if dim > max_dim:
        raise ResourceCapError(dim, max_dim)
    factors = [central.matrix] + [env_spin_state(s).data for s in spins]
    return DensityMatrix(reduce(np.kron, factors), (2,) * (central.K + len(spins)))


def _signs(n: int) -> np.ndarray:
    """Rows are the sigma_z eigenvalues (+1/-1) of each qubit for every basis index."""
    idx = np.arange(2**n)[:, None]
    shifts = np.arange(n - 1, -1, -1)[None, :]
    return 1.0 - 2.0 * ((idx >> shifts) & 1)


def evolve_full(state0: DensityMatrix, G: CouplingMatrix, t: float, max_dim: int = DEFAULT_MAX_DIM) -> DensityMatrix:
    """Apply the register-environment evolution for time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    dim = state0.dim
    if dim > max_dim:
        raise ResourceCapError(dim, max_dim)
    if dim != 2 ** (G.K + G.N):
        raise DimensionError(f"state of dimension {dim} does not match K={G.K}, N={G.N}")
    energy = 0.5 * (_signs(G.K) @ G.entries) @ _signs(G.N).T  # shape (2^K, 2^N)
    phase = np.exp(-1j * t * energy).reshape(-1)
    data = state0.data * phase[:, None] * phase.conj()[None, :]
    return DensityMatrix(data, state0.dims, validate=False)


def partial_trace(state: DensityMatrix, keep: Sequence[int], dims: Sequence[int] | None = None) -> DensityMatrix:
    """Trace out every subsystem not listed in ``keep`` (order of ``keep`` is ignored)."""
    dims = tuple(dims) if dims is not None else state.dims
    n = len(dims)
    if int(np.prod(dims)) != state.dim:
        raise DimensionError(f"subsystem dims {dims} do not multiply to {state.dim}")
    keep = sorted(set(int(k) for k in keep))
    if any(not 0 <= k < n for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {n} subsystems")
    if len(keep) == n:
        return state
    if 2 * n > len(string.ascii_letters):
        raise DimensionError("too many subsystems for partial trace")
    rows = string.ascii_letters[:n]
    cols = "".join(rows[i] if i not in keep else string.ascii_letters[n + i] for i in range(n))
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    tensor = state.data.reshape(dims + dims)
    reduced = np.einsum(f"{rows}{cols}->{out}", tensor)
    kd = tuple(dims[i] for i in keep)
    m = int(np.prod(kd)) if kd else 1
    return DensityMatrix(reduced.reshape(m, m), kd or (1,), validate=False)


def _psd_sqrt(a: np.ndarray, what: str) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    if w[0] < -EIG_CLAMP:
        raise DomainError(f"{what} has eigenvalue {w[0]:.3g} below -{EIG_CLAMP}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def generalized_fidelity(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """``Tr sqrt(sqrt(a) b sqrt(a))``, evaluated as the nuclear norm of ``sqrt(a) sqrt(b)``.

    The nuclear-norm form avoids square roots of the tiny eigenvalues of
    ``sqrt(a) b sqrt(a)``, which would amplify rounding noise to ~1e-8.
    """
    a = a.data if isinstance(a, DensityMatrix) else np.asarray(a, dtype=complex)
    b = b.data if isinstance(b, DensityMatrix) else np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    sa = _psd_sqrt(a, "first argument")
    sb = _psd_sqrt(b, "second argument")
    return float(np.sum(np.linalg.svd(sa @ sb, compute_uv=False)))


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """Half the trace norm of ``a - b``."""
    a = a.data if isinstance(a, DensityMatrix) else np.asarray(a)
    b = b.data if isinstance(b, DensityMatrix) else np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


# Distance to one explicit candidate: an upper bound on the distance to the SBS set.
trace_distance_to_sbs = trace_distance


def reduced_register_env_state(
    central: CentralState,
    spins: Sequence[EnvSpin],
    G: CouplingMatrix,
    partition: Partition,
    t: float,
    max_dim: int = DEFAULT_MAX_DIM,
) -> DensityMatrix:
    """Evolve the full product state and trace out the unobserved spins.

    The result keeps the register followed by the observed spins in ascending order.
    """
    if len(spins) != G.N or partition.N != G.N or central.K != G.K:
        raise DimensionError("central state, spins, couplings and partition disagree on sizes")
    rho = evolve_full(product_state(central, spins, max_dim), G, t, max_dim)
    keep = list(range(G.K)) + [G.K + j for j in partition.observed]
    return partial_trace(rho, keep)


def exact_pair_overlap(
    spins: Sequence[EnvSpin],
    G: CouplingMatrix,
    indices: Sequence[int],
    e1: RegisterLabel,
    e2: RegisterLabel,
    t: float,
) -> float:
    """Generalized fidelity of the conditional states of the spins in ``indices``.

    Builds ``(x)_j U_e rho_j U_e^dagger`` explicitly for both labels.
    """
    if 2 ** len(indices) > DEFAULT_MAX_DIM:
        raise ResourceCapError(2 ** len(indices), DEFAULT_MAX_DIM)
    if not indices:
        return 1.0
    r1 = reduce(np.kron, [conditional_env_block(spins[j], G, e1, e1, j, t) for j in indices])
    r2 = reduce(np.kron, [conditional_env_block(spins[j], G, e2, e2, j, t) for j in indices])
    return generalized_fidelity(r1, r2)


def exact_pair_decoherence(
    spins: Sequence[EnvSpin],
    G: CouplingMatrix,
    indices: Sequence[int],
    e1: RegisterLabel,
    e2: RegisterLabel,
    t: float,
) -> complex:
    """``prod_j Tr[U_e1 rho_j U_e2^dagger]`` over ``indices``."""
    out = 1.0 + 0.0j
    for j in indices:
        out *= np.trace(conditional_env_block(spins[j], G, e1, e2, j, t))
    return complex(out)
