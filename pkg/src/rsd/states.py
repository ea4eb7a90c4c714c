"""State constructors and validators.

Everything here returns immutable objects.  Density matrices that fail
validation raise :class:`StateError`; nothing is silently clipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import qmat

TRACE_TOL = 1e-10
PSD_FLOOR = -1e-9


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class QState:
    """A validated density matrix with its subsystem dimensions.

    ``perturbative`` marks first-order expanded states, which may carry
    O(g^2) negative eigenvalues; they skip the PSD check only.
    """

    mat: np.ndarray
    dims: tuple[int, ...]
    perturbative: bool = False

    def __post_init__(self):
        mat = qmat.as_cmatrix(self.mat)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", qmat.check_dims(mat, self.dims))
        defect = qmat.hermiticity_defect(mat)
        if defect > qmat.HERMITIAN_TOL:
            raise StateError(f"density matrix not Hermitian (defect {defect:.3e})")
        tr = np.trace(mat)
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"density matrix trace {tr.real:.12g} != 1")
        if not self.perturbative:
            lo = self.min_eigenvalue
            if lo < PSD_FLOOR:
                raise StateError(f"density matrix not PSD (smallest eigenvalue {lo:.3e})")

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.mat + self.mat.conj().T) / 2)[0])

    @cached_property
    def purity(self) -> float:
        return float(np.real(qmat.expectation(self.mat, self.mat)))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def reduced(self, keep: Sequence[int]) -> "QState":
        sub = tuple(self.dims[i] for i in sorted(keep))
        return QState(qmat.partial_trace(self.mat, self.dims, keep), sub, self.perturbative)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "re": self.mat.real.tolist(),
            "im": self.mat.imag.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict | str) -> "QState":
        if isinstance(doc, str):
            doc = json.loads(doc)
        mat = np.array(doc["re"], dtype=float) + 1j * np.array(doc["im"], dtype=float)
        return cls(mat, tuple(doc["dims"]), bool(doc.get("perturbative", False)))


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    basis_label: str = "computational"

    def __post_init__(self):
        amps = qmat.ket(self.amplitudes).copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise StateError(f"state vector norm {norm:.12g} != 1")

    @property
    def d(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> QState:
        return QState(qmat.projector(self.amplitudes), (self.d,))

    def projector(self) -> np.ndarray:
        return qmat.projector(self.amplitudes)

    def to_json(self) -> dict:
        return {"re": self.amplitudes.real.tolist(), "im": self.amplitudes.imag.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "PureState":
        amps = np.array(doc["re"], dtype=float) + 1j * np.array(doc["im"], dtype=float)
        return cls(amps, doc.get("basis_label", "computational"))


def pure(amplitudes, normalize: bool = False) -> PureState:
    v = qmat.ket(amplitudes)
    if normalize:
        v = v / np.linalg.norm(v)
    return PureState(v)


def mub_basis(d: int) -> np.ndarray:
    """Columns of the d-dimensional discrete Fourier transform.

    Column 0 is the uniform vector; every column has overlap magnitude
    1/sqrt(d) with every computational basis vector.
    """
    if d < 2:
        raise StateError(f"dimension must be >= 2, got {d}")
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def mub_b0(d: int) -> PureState:
    if d < 2:
        raise StateError(f"dimension must be >= 2, got {d}")
    return PureState(np.full(d, 1 / np.sqrt(d), dtype=np.complex128), "fourier")


def random_pure(d: int, seed: int) -> PureState:
    """Haar-random pure state; deterministic in ``seed``."""
    if d < 2:
        raise StateError(f"dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(v / np.linalg.norm(v))


def random_mixed(d: int, seed: int, rank: int | None = None) -> QState:
    """Random full-rank (by default) density matrix from a Ginibre draw."""
    rng = np.random.default_rng(seed)
    r = rank or d
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return QState(rho / np.trace(rho), (d,))


def singlet() -> QState:
    psi = np.array([0, 1, -1, 0], dtype=np.complex128) / np.sqrt(2)
    return QState(qmat.projector(psi), (2, 2))


def product(rho_a: QState, rho_b: QState) -> QState:
    return QState(qmat.tensor(rho_a.mat, rho_b.mat), rho_a.dims + rho_b.dims)


def random_product(seed: int, dims: tuple[int, int] = (2, 2)) -> QState:
    return product(random_mixed(dims[0], seed), random_mixed(dims[1], seed + 1_000_003))


def bell_diagonal(c1: float, c2: float, c3: float) -> QState:
    c = (c1, c2, c3)
    if any(not -1.0 <= ci <= 1.0 for ci in c):
        raise StateError(f"Bell-diagonal coefficients must lie in [-1, 1], got {c}")
    mat = np.eye(4, dtype=np.complex128)
    for ci, s in zip(c, qmat.PAULIS):
        mat = mat + ci * np.kron(s, s)
    mat = mat / 4
    lo = float(np.linalg.eigvalsh(mat)[0])
    if lo < PSD_FLOOR:
        raise StateError(f"Bell-diagonal state not PSD for c={c} (smallest eigenvalue {lo:.6g})")
    return QState(mat, (2, 2))


def werner(z: float) -> QState:
    if not 0.0 <= z <= 1.0:
        raise StateError(f"Werner parameter must lie in [0, 1], got {z}")
    mat = z * singlet().mat + (1 - z) / 4 * np.eye(4)
    return QState(mat, (2, 2))


def werner_parameter(rho: QState, atol: float = 1e-10) -> float:
    """Recover z from a Werner state, or raise if ``rho`` is not one."""
    if rho.dims != (2, 2):
        raise StateError("not a two-qubit state")
    # (|01>,|01>) entry of the Werner state is (1 + z)/4
    z = 4 * rho.mat[1, 1].real - 1
    if not -atol <= z <= 1 + atol or not qmat.close(rho.mat, werner(min(max(z, 0.0), 1.0)).mat, atol):
        raise StateError("input is not a Werner state")
    return min(max(z, 0.0), 1.0)


def fiber_decohere(w: QState, dphi: float) -> QState:
    """Werner state after a dephasing optical fiber with phase spread ``dphi``."""
    if dphi < 0:
        raise StateError(f"phase spread must be >= 0, got {dphi}")
    z = werner_parameter(w)
    # underflows to exactly 0 for dphi beyond ~13 rad
    off = -(z / 2) * np.exp(-4 * dphi**2)
    mat = np.diag([(1 - z) / 4, (1 + z) / 4, (1 + z) / 4, (1 - z) / 4]).astype(np.complex128)
    mat[1, 2] = mat[2, 1] = off
    return QState(mat, (2, 2))


def parse_resource(text: str) -> QState:
    """Parse ``werner:z``, ``bell:c1,c2,c3``, ``singlet`` or ``product[:seed]``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "werner":
            return werner(float(arg))
        if kind == "bell":
            c = [float(x) for x in arg.split(",")]
            if len(c) != 3:
                raise ValueError
            return bell_diagonal(*c)
        if kind == "singlet":
            return singlet()
        if kind == "product":
            return random_product(int(arg) if arg else 0)
    except ValueError as exc:
        if isinstance(exc, StateError):
            raise
        raise StateError(f"malformed resource spec {text!r}") from None
    raise StateError(f"unknown resource kind {kind!r}")
