"""Dense linear algebra and open-system evolution for small Hilbert spaces.

Frequencies inside this module are angular (rad/s) and times are seconds.
Unit conversion for the public MHz/ns interfaces lives in ``nvsim.util.Util``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from nvsim.util import TimeTrace
from nvsim.util.errors import ModelError, StabilityError, ValidationError

_LOGGER = logging.getLogger(__name__)

MAX_DIM = 16
HAMILTONIAN_RTOL = 1e-12
STABILITY_LIMIT = 0.1


def _as_array(op) -> np.ndarray:
    if isinstance(op, (Operator, DensityMatrix)):
        return op.data
    return np.asarray(op, dtype=complex)


def _hermitian_error(data: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(data)))) if data.size else 1.0
    return float(np.max(np.abs(data - data.conj().T))) / scale if data.size else 0.0


@dataclass(frozen=True, eq=False)
class Operator:
    data: np.ndarray
    hamiltonian: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] == 0:
            raise ValidationError(f"operator must be a non-empty square matrix, got shape {data.shape}",
                                  field="operator")
        if data.shape[0] > MAX_DIM:
            raise ValidationError(f"dimension {data.shape[0]} exceeds {MAX_DIM}", field="operator")
        if self.hamiltonian and _hermitian_error(data) > HAMILTONIAN_RTOL:
            raise ValidationError("Hamiltonian is not Hermitian", field="operator")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def is_hermitian(self) -> bool:
        return _hermitian_error(self.data) <= HAMILTONIAN_RTOL

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.hamiltonian)

    def norm(self) -> float:
        """Spectral norm."""
        return float(np.linalg.norm(self.data, 2))

    def __matmul__(self, other):
        return Operator(self.data @ _as_array(other))

    def __add__(self, other):
        return Operator(self.data + _as_array(other), self.hamiltonian and getattr(other, "hamiltonian", False))

    def __mul__(self, scalar):
        return Operator(self.data * scalar)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(np.eye(dim), hamiltonian=True)

    @classmethod
    def projector(cls, dim: int, index: int) -> "Operator":
        data = np.zeros((dim, dim), dtype=complex)
        data[index, index] = 1.0
        return cls(data, hamiltonian=True)

    @classmethod
    def transition(cls, dim: int, to: int, frm: int) -> "Operator":
        """|to><frm|"""
        data = np.zeros((dim, dim), dtype=complex)
        data[to, frm] = 1.0
        return cls(data)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    data: np.ndarray
    validate: bool = True

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError(f"density matrix must be square, got shape {data.shape}", field="rho")
        if self.validate:
            if np.max(np.abs(data - data.conj().T)) >= 1e-10:
                raise ValidationError("density matrix is not Hermitian", field="rho")
            if abs(np.trace(data) - 1.0) > 1e-9:
                raise ValidationError(f"density matrix trace {np.trace(data).real:.12g} != 1", field="rho")
            if np.min(np.linalg.eigvalsh(0.5 * (data + data.conj().T))) < -1e-9:
                raise ValidationError("density matrix has negative eigenvalues", field="rho")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.data)).copy()

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))))

    def __getitem__(self, index):
        return self.data[index]

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis(cls, dim: int, index: int) -> "DensityMatrix":
        return cls(Operator.projector(dim, index).data)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True, eq=False)
class CollapseChannel:
    operator: Operator
    rate: float

    def __post_init__(self):
        if not isinstance(self.operator, Operator):
            object.__setattr__(self, "operator", Operator(self.operator))
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValidationError(f"collapse rate must be >= 0, got {self.rate}", field="rate")


def kron(a, b) -> Operator:
    a_op = a if isinstance(a, Operator) else Operator(a)
    b_op = b if isinstance(b, Operator) else Operator(b)
    return Operator(np.kron(a_op.data, b_op.data), a_op.hamiltonian and b_op.hamiltonian)


def eig_hermitian(h) -> Tuple[np.ndarray, Operator]:
    data = _as_array(h)
    if _hermitian_error(data) > 1e-10:
        raise ValidationError("eig_hermitian needs a Hermitian operator", field="h")
    values, vectors = np.linalg.eigh(0.5 * (data + data.conj().T))
    return values, Operator(vectors)


def propagator(h, t: float) -> Operator:
    """exp(-i h t) from the Hermitian eigendecomposition of ``h``."""
    if t < 0:
        raise ValidationError(f"evolution time must be >= 0, got {t}", field="t")
    values, vectors = eig_hermitian(h)
    v = vectors.data
    return Operator((v * np.exp(-1j * values * t)) @ v.conj().T)


def unitary_evolve(rho: DensityMatrix, h, t: float) -> DensityMatrix:
    if t == 0:
        return rho
    u = propagator(h, t).data
    out = u @ rho.data @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T), validate=False)


def apply_unitary(rho: DensityMatrix, u) -> DensityMatrix:
    u = _as_array(u)
    out = u @ rho.data @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T), validate=False)


def liouvillian(h, channels: Sequence[CollapseChannel] = ()) -> np.ndarray:
    """Lindblad generator acting on row-major vec(rho)."""
    hd = _as_array(h)
    n = hd.shape[0]
    eye = np.eye(n)
    sup = -1j * (np.kron(hd, eye) - np.kron(eye, hd.T))
    for ch in channels:
        if ch.rate == 0:
            continue
        c = ch.operator.data
        cdc = c.conj().T @ c
        sup += ch.rate * (np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T))
    return sup


def max_rate(h, channels: Sequence[CollapseChannel] = ()) -> float:
    rates = [ch.rate * np.linalg.norm(ch.operator.data, 2) ** 2 for ch in channels]
    return max([float(np.linalg.norm(_as_array(h), 2))] + rates)


def rk4_step_matrix(sup: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of d/dt x = sup·x, written as its propagator polynomial."""
    x = dt * sup
    eye = np.eye(sup.shape[0], dtype=complex)
    x2 = x @ x
    x3 = x2 @ x
    return eye + x + x2 / 2.0 + x3 / 6.0 + (x3 @ x) / 24.0


def lindblad_evolve(rho: DensityMatrix, h, channels: Sequence[CollapseChannel], dt: float, steps: int,
                    observables: Optional[Dict[str, Operator]] = None,
                    record_every: int = 1) -> Tuple[DensityMatrix, TimeTrace]:
    """Fixed-step RK4 integration of the Lindblad master equation.

    ``observables`` maps column names to operators whose expectation values are
    recorded every ``record_every`` steps. Without it the level populations are
    recorded as ``p0``, ``p1``, ...
    """
    if dt <= 0:
        raise ValidationError(f"dt must be > 0, got {dt}", field="dt")
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}", field="steps")
    if record_every < 1:
        raise ValidationError("record_every must be >= 1", field="record_every")
    scale = max_rate(h, channels)
    if dt * scale >= STABILITY_LIMIT:
        recommended = 0.5 * STABILITY_LIMIT / scale
        raise StabilityError(f"dt={dt:.3g} s violates the stability guard (dt*rate={dt * scale:.3g}); "
                             f"use dt <= {recommended:.3g} s", recommended_dt=recommended)

    n = rho.dim
    step = rk4_step_matrix(liouvillian(h, channels), dt)
    if observables is None:
        observables = {f"p{k}": Operator.projector(n, k) for k in range(n)}
    # <O> = tr(rho O) = sum_ij rho_ij O_ji, so dot vec(rho) with vec(O^T)
    readers = {name: _as_array(op).T.reshape(-1) for name, op in observables.items()}

    vec = rho.data.reshape(-1).copy()
    times, records = [], {name: [] for name in readers}

    def record(k):
        times.append(k * dt)
        for name, reader in readers.items():
            records[name].append(np.real(reader @ vec))

    record(0)
    for k in range(1, steps + 1):
        vec = step @ vec
        if k % record_every == 0:
            record(k)

    final = vec.reshape(n, n)
    final = 0.5 * (final + final.conj().T)
    trace = TimeTrace(np.array(times), {name: np.array(v) for name, v in records.items()},
                      metadata={"dt_s": dt, "steps": steps})
    return DensityMatrix(final, validate=False), trace


def lindblad_steady_state(h, channels: Sequence[CollapseChannel], tol: float = 1e-10) -> DensityMatrix:
    sup = liouvillian(h, channels)
    n = int(round(np.sqrt(sup.shape[0])))
    scale = max(1.0, float(np.max(np.abs(sup))))
    _, s, vh = np.linalg.svd(sup / scale)
    if s.size > 1 and s[-2] < tol:
        raise ModelError("Liouvillian has a degenerate null space; the steady state is not unique")
    rho = vh[-1].conj().reshape(n, n)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, validate=False)


def expectation(rho: DensityMatrix, op) -> complex:
    return complex(np.trace(rho.data @ _as_array(op)))


def partial_trace(rho: DensityMatrix, dims: Sequence[int], keep: Sequence[int]) -> DensityMatrix:
    dims = list(dims)
    keep = sorted(keep)
    n = len(dims)
    tensor = rho.data.reshape(dims + dims)
    trace_out = [k for k in range(n) if k not in keep]
    for offset, axis in enumerate(trace_out):
        ax = axis - offset
        tensor = np.trace(tensor, axis1=ax, axis2=ax + tensor.ndim // 2)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return DensityMatrix(tensor.reshape(d, d), validate=False)


def fidelity(rho: DensityMatrix, target) -> float:
    """State fidelity; ``target`` may be a ket or a density matrix."""
    if isinstance(target, DensityMatrix):
        sqrt_rho = linalg.sqrtm(rho.data)
        inner = linalg.sqrtm(sqrt_rho @ target.data @ sqrt_rho)
        return float(np.real(np.trace(inner)) ** 2)
    psi = np.asarray(target, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ rho.data @ psi))
