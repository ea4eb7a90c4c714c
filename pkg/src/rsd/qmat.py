"""Dense complex linear algebra used by every other module.

Matrices are plain ``numpy`` complex arrays in row-major order.  Subsystem
ordering follows the Kronecker convention: the leftmost factor is the
slowest-varying index.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
MAX_DIM = 4096


class DimensionError(ValueError):
    """Raised when matrix shapes or subsystem dimensions do not compose."""


class NotHermitianError(ValueError):
    pass


def as_cmatrix(m) -> np.ndarray:
    """Return ``m`` as a read-only 2D complex128 array."""
    arr = np.array(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D matrix, got shape {arr.shape}")
    if arr.shape[0] > MAX_DIM or arr.shape[1] > MAX_DIM:
        raise DimensionError(f"matrix {arr.shape} exceeds dimension cap {MAX_DIM}")
    arr.setflags(write=False)
    return arr


def ket(amplitudes) -> np.ndarray:
    return np.asarray(amplitudes, dtype=np.complex128).reshape(-1)


def projector(vec) -> np.ndarray:
    v = ket(vec)
    return as_cmatrix(np.outer(v, v.conj()))


def basis_projector(d: int, k: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=np.complex128)
    m[k, k] = 1.0
    return as_cmatrix(m)


def close(a, b, atol: float) -> bool:
    """Entrywise equality with an explicit absolute tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    return bool(np.max(np.abs(a - b), initial=0.0) <= atol)


def max_abs(m) -> float:
    return float(np.max(np.abs(np.asarray(m)), initial=0.0))


def hermiticity_defect(m) -> float:
    m = np.asarray(m)
    return max_abs(m - m.conj().T)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and hermiticity_defect(m) <= tol


def _require_square(*ms) -> int:
    n = None
    for m in ms:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected square matrix, got shape {m.shape}")
        if n is None:
            n = m.shape[0]
        elif m.shape[0] != n:
            raise DimensionError(f"dimension mismatch: {n} vs {m.shape[0]}")
    return n


def tensor(a, b, *rest) -> np.ndarray:
    """Kronecker product; ``a`` is the leftmost (slowest) subsystem."""
    out = np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))
    for m in rest:
        out = np.kron(out, np.asarray(m, dtype=np.complex128))
    return as_cmatrix(out)


def check_dims(m, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(x) for x in dims)
    if not dims or any(x < 1 for x in dims):
        raise DimensionError(f"subsystem dimensions must be positive, got {dims}")
    m = np.asarray(m)
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise DimensionError(f"dims {list(dims)} (product {total}) do not match matrix {m.shape}")
    return dims


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    The reduced matrix keeps the surviving subsystems in their original
    order.  An empty ``keep`` is rejected; tracing everything is spelled
    ``np.trace``.
    """
    m = np.asarray(m, dtype=np.complex128)
    dims = check_dims(m, dims)
    keep = sorted(set(int(i) for i in keep))
    if not keep:
        raise DimensionError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep {keep} out of range for {len(dims)} subsystems")

    n = len(dims)
    t = m.reshape(dims + dims)
    # einsum over multi-indices: traced subsystems share the row/col letter
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise DimensionError("too many subsystems")
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out_idx = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out_idx, t)
    dk = int(np.prod([dims[i] for i in keep]))
    return as_cmatrix(reduced.reshape(dk, dk))


def expm_hermitian_generator(h, scale: float) -> np.ndarray:
    """exp(i * scale * h) for Hermitian ``h`` via eigendecomposition."""
    h = np.asarray(h, dtype=np.complex128)
    _require_square(h)
    defect = hermiticity_defect(h)
    if defect > HERMITIAN_TOL:
        raise NotHermitianError(f"generator is not Hermitian (defect {defect:.3e})")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return as_cmatrix((v * np.exp(1j * scale * w)) @ v.conj().T)


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _require_square(a, b)
    return as_cmatrix(a @ b - b @ a)


def anticommutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _require_square(a, b)
    return as_cmatrix(a @ b + b @ a)


def expectation(obs, rho) -> complex:
    """Tr(obs @ rho)."""
    obs = np.asarray(obs, dtype=np.complex128)
    rho = np.asarray(rho, dtype=np.complex128)
    _require_square(obs, rho)
    # Tr(AB) = sum_ij A_ij B_ji without forming the product
    return complex(np.einsum("ij,ji->", obs, rho))


def identity(n: int) -> np.ndarray:
    return as_cmatrix(np.eye(n))


SIGMA_X = as_cmatrix([[0, 1], [1, 0]])
SIGMA_Y = as_cmatrix([[0, -1j], [1j, 0]])
SIGMA_Z = as_cmatrix([[1, 0], [0, -1]])
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def pauli_dot(n) -> np.ndarray:
    """n . sigma for a real 3-vector ``n``."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise DimensionError("pauli_dot expects a 3-vector")
    return as_cmatrix(sum(c * s for c, s in zip(n, PAULIS)))
