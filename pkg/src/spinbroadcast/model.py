"""Domain types shared across the package.

Index conventions
-----------------
Environment spins and macrofraction members use 0-based indices into the
columns of the coupling matrix.  Register labels are sequences over
``{+1, -1}``; label ``+1`` maps to the first computational basis vector of the
corresponding qubit, and the first register spin is the most significant one
when a label is turned into a basis index.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "InvalidStateError",
    "EnvSpin",
    "CouplingMatrix",
    "Partition",
    "RegisterLabel",
    "CentralState",
    "make_partition",
    "derived_theta_zeta",
    "all_labels",
    "spin_arrays",
    "dumps",
    "loads",
]

PSD_RTOL = 1e-12


class DimensionError(ValueError):
    """Raised when sizes of inputs are inconsistent."""


class InvalidStateError(ValueError):
    """Raised when a matrix violates the density-matrix contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EnvSpin:
    """Initial state parameters of one environment spin.

    The state is ``R D R^dagger`` with ``D = diag(lam, 1 - lam)`` and ``R`` the
    SU(2) rotation with Euler angles ``(alpha, beta, gamma_euler)``.
    """

    lam: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma_euler: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.beta <= np.pi:
            raise ValueError(f"beta must lie in [0, pi], got {self.beta}")
        for name in ("alpha", "gamma_euler"):
            value = getattr(self, name)
            if not 0.0 <= value < 2 * np.pi:
                raise ValueError(f"{name} must lie in [0, 2pi), got {value}")

    @property
    def polarization(self) -> float:
        """``2 lam - 1``, the signed Bloch-vector length."""
        return 2.0 * self.lam - 1.0

    @property
    def theta(self) -> float:
        return -0.5 * self.polarization * np.sin(self.beta)

    @property
    def zeta(self) -> float:
        return self.polarization * np.cos(self.beta)

    @property
    def overlap_coefficient(self) -> float:
        """``(2 lam - 1)^2 sin^2 beta``, the amplitude entering overlap factors."""
        return self.polarization**2 * np.sin(self.beta) ** 2

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma_euler": self.gamma_euler,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSpin":
        return cls(
            lam=float(d["lambda"]),
            alpha=float(d.get("alpha", 0.0)),
            beta=float(d.get("beta", 0.0)),
            gamma_euler=float(d.get("gamma_euler", 0.0)),
        )


def derived_theta_zeta(spin: EnvSpin) -> tuple[float, float]:
    """Return ``(theta, zeta)`` of an environment spin."""
    return spin.theta, spin.zeta


def spin_arrays(spins: Sequence[EnvSpin]) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(lam, beta)`` of a list of spins into two float arrays."""
    lam = np.fromiter((s.lam for s in spins), dtype=float, count=len(spins))
    beta = np.fromiter((s.beta for s in spins), dtype=float, count=len(spins))
    return lam, beta


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Real ``K x N`` matrix ``g[i, j]`` between register spin i and environment spin j."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1:
            raise DimensionError(f"coupling matrix must be 2-D with K >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("coupling matrix entries must be finite")
        object.__setattr__(self, "entries", _readonly(a))

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    @property
    def scale(self) -> float:
        """Largest absolute entry, used for relative zero tests."""
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def columns(self, idx: Iterable[int]) -> np.ndarray:
        return self.entries[:, list(idx)]

    def __eq__(self, other):
        return isinstance(other, CouplingMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def to_dict(self) -> dict:
        return {"K": self.K, "N": self.N, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingMatrix":
        m = cls(np.array(d["entries"], dtype=float).reshape(int(d["K"]), int(d["N"])))
        return m

    def to_csv(self) -> str:
        rows = [",".join(repr(float(x)) for x in row) for row in self.entries]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class Partition:
    """Observed macrofractions and the unobserved remainder of ``N`` environment spins."""

    N: int
    macrofractions: tuple[tuple[int, ...], ...]
    unobserved: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        macs = tuple(tuple(sorted(int(j) for j in m)) for m in self.macrofractions)
        seen: set[int] = set()
        for m in macs:
            for j in m:
                if not 0 <= j < self.N:
                    raise DimensionError(f"index {j} outside 0..{self.N - 1}")
                if j in seen:
                    raise ValueError(f"macrofractions overlap at index {j}")
                seen.add(j)
        rest = tuple(j for j in range(self.N) if j not in seen)
        if self.unobserved is not None and tuple(sorted(self.unobserved)) != rest:
            raise ValueError("unobserved set must be the complement of the macrofractions")
        object.__setattr__(self, "macrofractions", macs)
        object.__setattr__(self, "unobserved", rest)

    @classmethod
    def from_sets(cls, N: int, macrofractions: Iterable[Iterable[int]]) -> "Partition":
        return cls(N, tuple(tuple(m) for m in macrofractions))

    @property
    def f_times_M(self) -> int:
        return len(self.macrofractions)

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(sorted(j for m in self.macrofractions for j in m))

    @property
    def n_dis(self) -> int:
        return len(self.unobserved)

    def n_mac(self, k: int) -> int:
        return len(self.macrofractions[k])

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "macrofractions": [list(m) for m in self.macrofractions],
            "unobserved": list(self.unobserved),
            "f_times_M": self.f_times_M,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        return cls(int(d["N"]), tuple(tuple(m) for m in d["macrofractions"]))


def make_partition(N: int, mac_sizes: Sequence[int]) -> Partition:
    """Consecutive-index macrofractions of the given sizes; the rest is unobserved.

    >>> make_partition(10, [3, 3]).unobserved
    (6, 7, 8, 9)
    """
    if any(s < 1 for s in mac_sizes):
        raise ValueError("macrofraction sizes must be >= 1")
    if sum(mac_sizes) > N:
        raise DimensionError(f"macrofraction sizes {list(mac_sizes)} exceed N={N}")
    bounds = np.concatenate([[0], np.cumsum(mac_sizes)]).astype(int)
    macs = tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(len(mac_sizes)))
    return Partition(N, macs)


@dataclass(frozen=True)
class RegisterLabel:
    """Pointer-basis label of a K-spin register, stored as a tuple of +/-1."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits or any(b not in (1, -1) for b in bits):
            raise ValueError(f"register label must be a non-empty sequence of +/-1, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_plus_set(cls, K: int, plus: Iterable[int], base: int = 1) -> "RegisterLabel":
        """Label with ``+1`` at the given positions (``base``-indexed) and ``-1`` elsewhere."""
        plus = {p - base for p in plus}
        if any(not 0 <= p < K for p in plus):
            raise DimensionError(f"positions {sorted(plus)} outside register of size {K}")
        return cls(tuple(1 if i in plus else -1 for i in range(K)))

    @classmethod
    def from_index(cls, K: int, index: int) -> "RegisterLabel":
        return cls(tuple(1 - 2 * ((index >> (K - 1 - i)) & 1) for i in range(K)))

    @property
    def K(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        """Position of ``|eps>`` in the ``2**K`` register basis."""
        out = 0
        for b in self.bits:
            out = (out << 1) | (0 if b == 1 else 1)
        return out

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=float)

    def __str__(self):
        return "".join("+" if b == 1 else "-" for b in self.bits)


def all_labels(K: int) -> Iterator[RegisterLabel]:
    """All ``2**K`` register labels in basis-index order."""
    for bits in itertools.product((1, -1), repeat=K):
        yield RegisterLabel(bits)


@dataclass(frozen=True, eq=False)
class CentralState:
    """Initial density matrix of the register, ``sigma[eps, eps']``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = m.shape[0]
        if m.ndim != 2 or m.shape != (d, d) or d < 2 or d & (d - 1):
            raise DimensionError(f"central state must be 2^K x 2^K, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=1e-12):
            raise InvalidStateError("central state is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-12:
            raise InvalidStateError(f"central state trace is {np.trace(m).real}, expected 1")
        w = np.linalg.eigvalsh(m)
        if w[0] < -PSD_RTOL * max(w[-1], 1.0):
            raise InvalidStateError(f"central state has negative eigenvalue {w[0]}")
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def from_coefficients(cls, K: int, coefficients: dict) -> "CentralState":
        """Build from ``{(eps, eps'): value}``; missing Hermitian partners are filled in."""
        m = np.zeros((2**K, 2**K), dtype=complex)
        for (e1, e2), v in coefficients.items():
            e1, e2 = _as_label(e1), _as_label(e2)
            m[e1.index, e2.index] = v
            if e1 != e2 and (e2, e1) not in coefficients and (e2.bits, e1.bits) not in coefficients:
                m[e2.index, e1.index] = np.conj(v)
        return cls(m)

    @classmethod
    def qubit(cls, sigma_plus: float, sigma_pm: complex) -> "CentralState":
        """Single central spin with populations ``(sigma_plus, 1 - sigma_plus)``."""
        return cls(np.array([[sigma_plus, sigma_pm], [np.conj(sigma_pm), 1.0 - sigma_plus]]))

    @property
    def K(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1

    def coefficient(self, e1, e2) -> complex:
        return complex(self.matrix[_as_label(e1).index, _as_label(e2).index])

    def population(self, e) -> float:
        return float(self.coefficient(e, e).real)

    @property
    def coefficients(self) -> dict:
        labels = list(all_labels(self.K))
        return {(a, b): self.coefficient(a, b) for a in labels for b in labels}

    def _require_qubit(self):
        if self.K != 1:
            raise DimensionError("named coefficients sigma_+/sigma_-/sigma_+- exist only for K=1")

    @property
    def sigma_plus(self) -> float:
        self._require_qubit()
        return float(self.matrix[0, 0].real)

    @property
    def sigma_minus(self) -> float:
        self._require_qubit()
        return float(self.matrix[1, 1].real)

    @property
    def sigma_pm(self) -> complex:
        self._require_qubit()
        return complex(self.matrix[0, 1])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "coefficients": [
                {"e1": list(a.bits), "e2": list(b.bits), "value": [v.real, v.imag]}
                for (a, b), v in self.coefficients.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CentralState":
        K = int(d["K"])
        coeffs = {
            (tuple(c["e1"]), tuple(c["e2"])): complex(*c["value"]) for c in d["coefficients"]
        }
        return cls.from_coefficients(K, coeffs)


def _as_label(e) -> RegisterLabel:
    return e if isinstance(e, RegisterLabel) else RegisterLabel(tuple(e))


_TYPES = {
    "EnvSpin": EnvSpin,
    "CouplingMatrix": CouplingMatrix,
    "Partition": Partition,
    "CentralState": CentralState,
}


def dumps(obj: Any) -> str:
    """Serialize a domain object (or a list of them) to a JSON document."""
    if isinstance(obj, (list, tuple)):
        return json.dumps([json.loads(dumps(o)) for o in obj], indent=2)
    if isinstance(obj, RegisterLabel):
        return json.dumps({"type": "RegisterLabel", "bits": list(obj.bits)})
    for name, cls in _TYPES.items():
        if isinstance(obj, cls):
            return json.dumps({"type": name, **obj.to_dict()}, indent=2)
    if hasattr(obj, "to_dict"):
        return json.dumps({"type": type(obj).__name__, **obj.to_dict()}, indent=2)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def loads(text: str):
    """Inverse of :func:`dumps`."""
    data = json.loads(text)
    return _from_obj(data)


def _from_obj(data):
    if isinstance(data, list):
        return [_from_obj(d) for d in data]
    kind = data.get("type")
    if kind == "RegisterLabel":
        return RegisterLabel(tuple(data["bits"]))
    if kind in _TYPES:
        return _TYPES[kind].from_dict(data)
    if kind == "DensityMatrix":
        from .oracle import DensityMatrix

        return DensityMatrix.from_dict(data)
    raise ValueError(f"unknown document type {kind!r}")
