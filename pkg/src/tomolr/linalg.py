"""Hermitian operator bases and state <-> coordinate conversion.

A state is written as ``rho = sum_i theta_i B_i`` over an orthonormal Hermitian
basis ``{B_i}`` with ``Tr(B_i B_j) = delta_ij``; the coordinates are
``theta_i = Tr(rho B_i)``.  The trace-one condition becomes the linear
constraint ``theta @ basis.trace_vector == 1``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidOperator

TAU_HERM = 1e-10
TAU_ORTH = 1e-10
TAU_TRACE = 1e-9
TAU_PSD = 1e-8

MAX_QUBITS = 8

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def is_hermitian(op: np.ndarray, tol: float = TAU_HERM) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.allclose(op, op.conj().T, rtol=0, atol=tol)


def hermitian_part(op: np.ndarray) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    return (op + op.conj().T) / 2


@dataclass(frozen=True)
class HermitianBasis:
    """Ordered orthonormal basis of d x d Hermitian operators.

    ``elements`` has shape ``(d**2, d, d)``.  Use :meth:`from_operators` to
    build a validated basis from arbitrary operators.
    """

    elements: np.ndarray
    labels: tuple = field(default=(), compare=False)

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    @property
    def size(self) -> int:
        return self.elements.shape[0]

    @property
    def trace_vector(self) -> np.ndarray:
        """Real vector ``[Tr(B_1), ..., Tr(B_{d^2})]``."""
        return np.trace(self.elements, axis1=1, axis2=2).real

    def __len__(self) -> int:
        return self.size

    @classmethod
    def from_operators(cls, operators, labels=(), tol: float = TAU_ORTH) -> "HermitianBasis":
        ops = np.asarray(operators, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise DimensionMismatch(f"expected a stack of square matrices, got shape {ops.shape}")
        d = ops.shape[1]
        if ops.shape[0] != d * d:
            raise DimensionMismatch(f"a basis of {d}x{d} operators needs {d * d} elements, got {ops.shape[0]}")
        if not np.allclose(ops, ops.conj().transpose(0, 2, 1), rtol=0, atol=tol):
            raise InvalidOperator("basis elements must be Hermitian")
        flat = ops.reshape(d * d, -1)
        gram = flat.conj() @ flat.T
        if np.abs(gram - np.eye(d * d)).max() > tol:
            raise InvalidOperator("basis elements are not orthonormal under Tr(A^dag B)")
        ops.setflags(write=False)
        return cls(ops, tuple(labels))


def make_pauli_basis(num_qubits: int, max_qubits: int = MAX_QUBITS) -> HermitianBasis:
    """Scaled Pauli tensor-product basis ``sigma_{l1}/sqrt2 (x) ... (x) sigma_{lq}/sqrt2``.

    Elements are ordered by the mixed-radix index over the label tuple
    ``(l1, ..., lq)`` with the first tensor factor most significant, so for two
    qubits element ``i = 4j + k`` is ``sigma_j (x) sigma_k / 2`` and the first
    element is always ``I / sqrt(d)``.
    """
    if num_qubits < 1:
        raise ValueError("num_qubits must be >= 1")
    if num_qubits > max_qubits:
        raise ValueError(f"num_qubits={num_qubits} exceeds the cap of {max_qubits}")
    single = PAULI / np.sqrt(2)
    ops = single
    for _ in range(num_qubits - 1):
        # kron of every existing element with every single-qubit element
        m, d = ops.shape[0], ops.shape[1]
        ops = np.einsum("aij,bkl->abikjl", ops, single).reshape(m * 4, d * 2, d * 2)
    labels = tuple(itertools.product(range(4), repeat=num_qubits))
    ops.setflags(write=False)
    return HermitianBasis(ops, labels)


def pauli_word(labels) -> np.ndarray:
    """Unscaled tensor product ``sigma_{l1} (x) ... (x) sigma_{lq}``."""
    out = np.ones((1, 1), dtype=complex)
    for lab in labels:
        out = np.kron(out, PAULI[lab])
    return out


def _check_dim(op: np.ndarray, basis: HermitianBasis) -> None:
    if op.shape != (basis.dim, basis.dim):
        raise DimensionMismatch(f"operator shape {op.shape} does not match basis dimension {basis.dim}")


def decompose(rho: np.ndarray, basis: HermitianBasis, tol: float = TAU_HERM) -> np.ndarray:
    """Coordinates ``theta_i = Re Tr(rho B_i)`` of a Hermitian operator."""
    rho = np.asarray(rho, dtype=complex)
    _check_dim(rho, basis)
    # Tr(rho B) = sum_ab rho_ab B_ba = sum_ab rho_ab conj(B_ab) for Hermitian B
    coords = basis.elements.reshape(basis.size, -1).conj() @ rho.reshape(-1)
    if np.abs(coords.imag).max() > tol * max(1.0, np.abs(coords.real).max()):
        raise InvalidOperator("operator is not Hermitian: Tr(rho B_i) has an imaginary part")
    return coords.real.copy()


def reconstruct(theta: np.ndarray, basis: HermitianBasis) -> np.ndarray:
    """``sum_i theta_i B_i``; not necessarily positive semidefinite."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.size,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, basis has {basis.size} elements")
    return np.tensordot(theta, basis.elements, axes=1)


def validate_density_matrix(
    rho: np.ndarray,
    tau_trace: float = TAU_TRACE,
    tau_herm: float = TAU_HERM,
    tau_psd: float = TAU_PSD,
) -> np.ndarray:
    """Check that ``rho`` is a density matrix and return it as a complex array.

    Only meant for ground-truth states; estimates are allowed to be unphysical.
    """
    rho = np.asarray(rho, dtype=complex)
    if not is_hermitian(rho, tau_herm):
        raise InvalidOperator("density matrix must be Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > tau_trace:
        raise InvalidOperator(f"density matrix must have unit trace, got {tr!r}")
    lam_min = np.linalg.eigvalsh(hermitian_part(rho))[0]
    if lam_min < -tau_psd:
        raise InvalidOperator(f"density matrix has negative eigenvalue {lam_min:.3e}")
    return rho


def random_density_matrix(dim: int, rank: int | None = None, rng=None) -> np.ndarray:
    """Random state ``G G^dag / Tr(G G^dag)`` with complex Gaussian ``G`` of the given rank."""
    rng = np.random.default_rng(rng)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return hermitian_part(rho / np.trace(rho).real)


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim
