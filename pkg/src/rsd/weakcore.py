"""One protocol round: weak coupling, post-selection and Bob's statistics.

Register order throughout is ``I (system) x A (Alice's half) x B (Bob's half)``.

Two routes are provided for Bob's expectation values: closed-form
first-order expressions (``bob_expectation_im`` / ``bob_expectation_re``)
and a numeric route that traces the expanded or exact total state
(``bob_state_set1`` / ``bob_state_set2``).  The tests pin them together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import qmat
from .states import QState

DENOM_TOL = 1e-12
REALITY_TOL = 1e-10


class VanishingDenominatorError(ValueError):
    """A post-selection probability or normalizer fell below ``DENOM_TOL``."""


def _mat(x) -> np.ndarray:
    return x.mat if isinstance(x, QState) else np.asarray(x, dtype=np.complex128)


def _check_rank1_projector(p: np.ndarray, name: str) -> None:
    if not qmat.is_hermitian(p):
        raise ValueError(f"{name} is not Hermitian")
    if not qmat.close(p @ p, p, 1e-10):
        raise ValueError(f"{name} is not idempotent")
    if abs(np.trace(p) - 1) > 1e-10:
        raise ValueError(f"{name} is not rank one")


@dataclass(frozen=True)
class CouplingSpec:
    """Alice's weak coupling exp(i g Pi_k (x) A)."""

    k: int
    Pi: np.ndarray
    A_obs: np.ndarray
    g: float

    def __post_init__(self):
        object.__setattr__(self, "Pi", qmat.as_cmatrix(self.Pi))
        object.__setattr__(self, "A_obs", qmat.as_cmatrix(self.A_obs))
        _check_rank1_projector(self.Pi, "Pi_k")
        if not qmat.is_hermitian(self.A_obs):
            raise ValueError("coupling observable A is not Hermitian")
        if not self.g > 0:
            raise ValueError(f"coupling strength must be positive, got {self.g}")


@dataclass(frozen=True)
class PostSelection:
    pi_v: np.ndarray
    pi_l: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "pi_v", qmat.as_cmatrix(self.pi_v))
        _check_rank1_projector(self.pi_v, "pi_v")
        if self.pi_l is not None:
            object.__setattr__(self, "pi_l", qmat.as_cmatrix(self.pi_l))
            _check_rank1_projector(self.pi_l, "pi_l")

    def check_noncommuting(self, A_obs) -> None:
        if self.pi_l is not None and qmat.max_abs(qmat.commutator(self.pi_l, A_obs)) <= 1e-8:
            raise ValueError("pi_l commutes with A; the second set carries no information")


WeakValueKind = Literal["exact", "inverted-analytic", "inverted-sampled"]


@dataclass(frozen=True)
class WeakValueRecord:
    k: int
    value: complex
    kind: WeakValueKind
    std_err: tuple[float, float] | None = None  # (re_err, im_err)

    def __post_init__(self):
        if (self.std_err is not None) != (self.kind == "inverted-sampled"):
            raise ValueError("std_err is present exactly for sampled weak values")

    def to_json(self) -> dict:
        re_err, im_err = self.std_err if self.std_err is not None else (None, None)
        return {"k": self.k, "re": self.value.real, "im": self.value.imag, "re_err": re_err, "im_err": im_err}


# -- weak values -------------------------------------------------------------


def exact_weak_value(Pi, pi_v, rho_I) -> complex:
    """Tr(pi_v Pi rho) / Tr(pi_v rho)."""
    Pi, pi_v, rho = _mat(Pi), _mat(pi_v), _mat(rho_I)
    den = qmat.expectation(pi_v, rho)
    if abs(den) <= DENOM_TOL:
        raise VanishingDenominatorError(f"post-selection probability Tr(pi_v rho_I) = {abs(den):.3e}")
    return qmat.expectation(pi_v @ Pi, rho) / den


def weak_partial_value(A_obs, pi_l, rho_AB: QState) -> complex:
    """Tr((pi_l A (x) 1) rho_AB) / Tr((pi_l (x) 1) rho_AB)."""
    dA, dB = rho_AB.dims
    eye_b = np.eye(dB)
    A, pl = _mat(A_obs), _mat(pi_l)
    den = qmat.expectation(qmat.tensor(pl, eye_b), rho_AB.mat)
    if abs(den) <= DENOM_TOL:
        raise VanishingDenominatorError(f"Tr((pi_l x 1) rho_AB) = {abs(den):.3e}")
    return qmat.expectation(qmat.tensor(pl @ A, eye_b), rho_AB.mat) / den


# -- total state after the coupling ------------------------------------------


def _joint(rho_I, rho_AB: QState, c: CouplingSpec) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    rI = _mat(rho_I)
    d = rI.shape[0]
    if len(rho_AB.dims) != 2:
        raise qmat.DimensionError("resource must be bipartite")
    dA, dB = rho_AB.dims
    if c.Pi.shape != (d, d) or c.A_obs.shape != (dA, dA):
        raise qmat.DimensionError(
            f"coupling shapes Pi {c.Pi.shape}, A {c.A_obs.shape} do not fit dims ({d}, {dA}, {dB})"
        )
    rho0 = qmat.tensor(rI, rho_AB.mat)
    H = qmat.tensor(c.Pi, c.A_obs, np.eye(dB))
    return rho0, H, (d, dA, dB)


def total_state_first_order(rho_I, rho_AB: QState, c: CouplingSpec) -> QState:
    """rho0 + i g [Pi (x) A (x) 1, rho0] with rho0 = rho_I (x) rho_AB.

    The g^2 cross term is dropped, so the result is flagged perturbative.
    """
    rho0, H, dims = _joint(rho_I, rho_AB, c)
    return QState(rho0 + 1j * c.g * qmat.commutator(H, rho0), dims, perturbative=True)


def total_state_exact(rho_I, rho_AB: QState, c: CouplingSpec) -> QState:
    rho0, H, dims = _joint(rho_I, rho_AB, c)
    U = qmat.expm_hermitian_generator(H, c.g)
    return QState(U @ rho0 @ U.conj().T, dims)


# -- Bob's conditional state, numeric route ----------------------------------


def _conditional_b(rho_tw: QState, op_IA: np.ndarray) -> tuple[np.ndarray, float]:
    d, dA, dB = rho_tw.dims
    P = qmat.tensor(op_IA, np.eye(dB))
    prob = qmat.expectation(P, rho_tw.mat)
    if abs(prob) <= DENOM_TOL:
        raise VanishingDenominatorError(f"post-selection probability {abs(prob):.3e}")
    # Tr_IA(P rho) equals Tr_IA(P rho P) since P acts only on I and A
    un = qmat.partial_trace(P @ rho_tw.mat, rho_tw.dims, keep=[2])
    un = (un + un.conj().T) / 2
    return qmat.as_cmatrix(un / np.trace(un)), float(prob.real)


def bob_state_set1(rho_tw: QState, pi_v) -> tuple[np.ndarray, float]:
    """Bob's normalized state after post-selecting I on pi_v, and its probability."""
    d, dA, _ = rho_tw.dims
    return _conditional_b(rho_tw, qmat.tensor(_mat(pi_v), np.eye(dA)))


def bob_state_set2(rho_tw: QState, pi_v, pi_l) -> tuple[np.ndarray, float]:
    """As :func:`bob_state_set1` with the extra post-selection of A on pi_l."""
    return _conditional_b(rho_tw, qmat.tensor(_mat(pi_v), _mat(pi_l)))


# -- Bob's expectation values, closed-form route -----------------------------


@dataclass(frozen=True)
class ResourceTerms:
    """Every trace of the resource that enters the first-order formulas."""

    rho_B_in: np.ndarray
    b_in: float  # Tr(B rho_B^in)
    a_mean: float  # Tr((A x 1) rho_AB)
    trace_BM: float  # Tr(B Tr_A((A x 1) rho_AB))
    trace_BM_joint: complex  # Tr(B Tr_A((A x B) rho_AB)), kept only for comparison
    q: float  # Tr((pi_l x 1) rho_AB)
    partial_value: complex  # weak-partial-value (A)_w'
    t_b: float  # Tr((pi_l x B) rho_AB)
    t_comm: complex  # Tr((pi_l x B) [(A x 1), rho_AB]), purely imaginary
    t_anti: float  # Tr((pi_l x B) {(A x 1), rho_AB})


def resource_terms(rho_AB: QState, A_obs, B_obs, pi_l) -> ResourceTerms:
    dA, dB = rho_AB.dims
    A, B, pl = _mat(A_obs), _mat(B_obs), _mat(pi_l)
    rho = rho_AB.mat
    A1 = qmat.tensor(A, np.eye(dB))
    plB = qmat.tensor(pl, B)
    rho_b = qmat.partial_trace(rho, rho_AB.dims, keep=[1])
    M = qmat.partial_trace(A1 @ rho, rho_AB.dims, keep=[1])
    M_joint = qmat.partial_trace(qmat.tensor(A, B) @ rho, rho_AB.dims, keep=[1])
    q = qmat.expectation(qmat.tensor(pl, np.eye(dB)), rho).real
    return ResourceTerms(
        rho_B_in=rho_b,
        b_in=qmat.expectation(B, rho_b).real,
        a_mean=qmat.expectation(A1, rho).real,
        trace_BM=qmat.expectation(B, M).real,
        trace_BM_joint=qmat.expectation(B, M_joint),
        q=q,
        partial_value=weak_partial_value(A, pl, rho_AB),
        t_b=qmat.expectation(plB, rho).real,
        t_comm=qmat.expectation(plB, qmat.commutator(A1, rho)),
        t_anti=qmat.expectation(plB, qmat.anticommutator(A1, rho)).real,
    )


def bob_expectation_im(B_obs, rho_I, rho_AB: QState, c: CouplingSpec, pi_v) -> float:
    """First-order <B> after the set-1 post-selection.

    <B> = Tr(B rho_B^in) + 2 g Im(Pi)_w (Tr((A x 1) rho_AB) Tr(B rho_B^in) - Tr(B Tr_A((A x 1) rho_AB)))
    """
    w = exact_weak_value(c.Pi, pi_v, rho_I)
    B = _mat(B_obs)
    dA, dB = rho_AB.dims
    A1 = qmat.tensor(c.A_obs, np.eye(dB))
    rho_b = qmat.partial_trace(rho_AB.mat, rho_AB.dims, keep=[1])
    b_in = qmat.expectation(B, rho_b)
    a = qmat.expectation(A1, rho_AB.mat)
    bm = qmat.expectation(B, qmat.partial_trace(A1 @ rho_AB.mat, rho_AB.dims, keep=[1]))
    val = b_in + 2 * c.g * w.imag * (a * b_in - bm)
    return _real(val, "set-1 expectation")


AnticommutatorSign = Literal["corrected", "flipped"]


def bob_expectation_re(
    B_obs,
    rho_I,
    rho_AB: QState,
    c: CouplingSpec,
    pi_v,
    pi_l,
    variant: AnticommutatorSign = "corrected",
) -> float:
    """First-order <B> after the set-2 double post-selection.

    With W = x + i y the weak value and (A)_w' the weak-partial-value,

        q <B> = T_B + 2 g x Im(A)_w' T_B + i g x T_comm + g y (2 Re(A)_w' T_B - T_anti)

    ``variant="flipped"`` uses +T_anti instead.  That sign disagrees with
    the numeric route at O(g) and is kept only for comparison.
    """
    w = exact_weak_value(c.Pi, pi_v, rho_I)
    t = resource_terms(rho_AB, c.A_obs, B_obs, pi_l)
    if abs(t.q) <= DENOM_TOL:
        raise VanishingDenominatorError(f"Tr((pi_l x 1) rho_AB) = {abs(t.q):.3e}")
    sign = -1.0 if variant == "corrected" else 1.0
    x, y, aw = w.real, w.imag, t.partial_value
    val = (
        t.t_b
        - 1j * c.g * x * (2j * aw.imag * t.t_b - t.t_comm)
        + c.g * y * (2 * aw.real * t.t_b + sign * t.t_anti)
    ) / t.q
    return _real(val, "set-2 expectation")


def _real(val: complex, what: str) -> float:
    if abs(val.imag) > REALITY_TOL:
        raise ValueError(f"{what} has imaginary part {val.imag:.3e}; is B Hermitian?")
    return float(val.real)
