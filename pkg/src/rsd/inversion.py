"""Pre-agreed protocol parameters, weak-value inversion and resource checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import qmat
from .states import PureState, QState, StateError, mub_b0
from .weakcore import (
    DENOM_TOL,
    REALITY_TOL,
    CouplingSpec,
    PostSelection,
    ResourceTerms,
    VanishingDenominatorError,
    bob_state_set1,
    bob_state_set2,
    resource_terms,
    total_state_first_order,
)

SUFFICIENCY_TOL = 1e-10
PRODUCT_TOL = 1e-10


class InsufficientResourceError(ValueError):
    """The shared state or operator choices cannot carry the weak value."""


def _cm_json(m: np.ndarray) -> dict:
    m = np.asarray(m)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def _cm_from(doc) -> np.ndarray:
    return np.array(doc["re"], dtype=float) + 1j * np.array(doc["im"], dtype=float)


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything Alice and Bob agree on before the first copy is shared.

    ``basis_a`` holds the kets |a_k> as columns.  ``N`` is the number of
    resource copies used per set per projector.
    """

    d: int
    basis_a: np.ndarray
    b0: PureState
    A_obs: np.ndarray
    B_obs: np.ndarray
    pi_l: np.ndarray
    g: float
    N: int = 1000
    projector_order: tuple[int, ...] = ()
    skip_set2_if_imaginary: bool = False

    def __post_init__(self):
        basis = qmat.as_cmatrix(self.basis_a)
        object.__setattr__(self, "basis_a", basis)
        for name in ("A_obs", "B_obs", "pi_l"):
            object.__setattr__(self, name, qmat.as_cmatrix(getattr(self, name)))
        if not self.projector_order:
            object.__setattr__(self, "projector_order", tuple(range(self.d)))
        else:
            object.__setattr__(self, "projector_order", tuple(int(k) for k in self.projector_order))
        self.validate()

    def validate(self) -> None:
        d = self.d
        if d < 2 or self.basis_a.shape != (d, d):
            raise StateError(f"basis must be {d}x{d}")
        if not qmat.close(self.basis_a.conj().T @ self.basis_a, np.eye(d), 1e-10):
            raise StateError("basis_a is not orthonormal")
        if self.b0.d != d:
            raise StateError("b0 dimension does not match d")
        overlaps = np.abs(self.basis_a.conj().T @ self.b0.amplitudes)
        if np.max(np.abs(overlaps - 1 / np.sqrt(d))) > 1e-10:
            raise StateError("b0 is not mutually unbiased with respect to basis_a")
        if sorted(self.projector_order) != list(range(d)):
            raise ValueError(f"projector_order {self.projector_order} is not a permutation of 0..{d - 1}")
        if not (qmat.is_hermitian(self.A_obs) and qmat.is_hermitian(self.B_obs)):
            raise ValueError("A and B must be Hermitian")
        if self.pi_l.shape != self.A_obs.shape:
            raise qmat.DimensionError("pi_l must act on the same register as A")
        PostSelection(self.pi_v, self.pi_l).check_noncommuting(self.A_obs)
        if not self.g > 0:
            raise ValueError("g must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def pi_v(self) -> np.ndarray:
        return self.b0.projector()

    @property
    def dims_AB(self) -> tuple[int, int]:
        return (self.A_obs.shape[0], self.B_obs.shape[0])

    def Pi(self, k: int) -> np.ndarray:
        return qmat.projector(self.basis_a[:, k])

    def coupling(self, k: int) -> CouplingSpec:
        return CouplingSpec(k, self.Pi(k), self.A_obs, self.g)

    def with_(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "basis_a": _cm_json(self.basis_a),
            "b0": self.b0.to_json(),
            "A_obs": _cm_json(self.A_obs),
            "B_obs": _cm_json(self.B_obs),
            "pi_l": _cm_json(self.pi_l),
            "g": self.g,
            "N": self.N,
            "projector_order": list(self.projector_order),
            "skip_set2_if_imaginary": self.skip_set2_if_imaginary,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProtocolConfig":
        return cls(
            d=int(doc["d"]),
            basis_a=_cm_from(doc["basis_a"]),
            b0=PureState.from_json(doc["b0"]),
            A_obs=_cm_from(doc["A_obs"]),
            B_obs=_cm_from(doc["B_obs"]),
            pi_l=_cm_from(doc["pi_l"]),
            g=float(doc["g"]),
            N=int(doc["N"]),
            projector_order=tuple(doc.get("projector_order", ())),
            skip_set2_if_imaginary=bool(doc.get("skip_set2_if_imaginary", False)),
        )

    def digest(self) -> bytes:
        """SHA-256 of the canonical JSON form; 32 bytes."""
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


def default_config(
    d: int = 2,
    g: float = 0.01,
    N: int = 1000,
    n=(1.0, 0.0, 0.0),
    m=(2**-0.5, 2**-0.5, 0.0),
    **kwargs,
) -> ProtocolConfig:
    """Qubit-resource instance: A = n.sigma, B = m.sigma, pi_l = |sigma_z = -1><sigma_z = -1|."""
    return ProtocolConfig(
        d=d,
        basis_a=np.eye(d),
        b0=mub_b0(d),
        A_obs=qmat.pauli_dot(n),
        B_obs=qmat.pauli_dot(m),
        pi_l=qmat.basis_projector(2, 1),
        g=g,
        N=N,
        **kwargs,
    )


# -- inversion ---------------------------------------------------------------


@dataclass(frozen=True)
class InversionCoefficients:
    """Constants of the two inversion formulas.

    Im W = (B_I - A) / X
    Re W = (B_R Y1 - Y2 - Y3 Im W) / Y4
    """

    A: float
    X: float
    Y1: float
    Y2: float
    Y3: float
    Y4: float


ImVariant = Literal["marginal_A", "joint_AB"]


def inversion_coefficients(
    cfg: ProtocolConfig,
    rho_AB: QState,
    im_variant: ImVariant = "marginal_A",
    re_variant: str = "corrected",
    terms: ResourceTerms | None = None,
) -> InversionCoefficients:
    t = terms or resource_terms(rho_AB, cfg.A_obs, cfg.B_obs, cfg.pi_l)
    g = cfg.g
    if im_variant == "marginal_A":
        bm = t.trace_BM
    elif im_variant == "joint_AB":
        # alternative denominator with Tr(B Tr_A((A x B) rho)); kept for comparison
        bm = t.trace_BM_joint.real
    else:
        raise ValueError(f"unknown im_variant {im_variant!r}")
    X = 2 * g * (t.a_mean * t.b_in - bm)
    aw = t.partial_value
    y4 = 2 * g * aw.imag * t.t_b + 1j * g * t.t_comm
    if abs(y4.imag) > REALITY_TOL:
        raise ValueError(f"set-2 denominator is not real (imag {y4.imag:.3e})")
    sign = -1.0 if re_variant == "corrected" else 1.0
    return InversionCoefficients(
        A=t.b_in,
        X=float(X),
        Y1=t.q,
        Y2=t.t_b,
        Y3=g * (2 * aw.real * t.t_b + sign * t.t_anti),
        Y4=float(y4.real),
    )


def invert_im(b_exp: float, cfg: ProtocolConfig, rho_AB: QState, variant: ImVariant = "marginal_A") -> float:
    co = inversion_coefficients(cfg, rho_AB, im_variant=variant)
    if abs(co.X) <= DENOM_TOL:
        raise InsufficientResourceError(f"set-1 denominator vanishes ({abs(co.X):.3e})")
    return (b_exp - co.A) / co.X


def invert_re(
    b_exp: float, im_wv: float, cfg: ProtocolConfig, rho_AB: QState, variant: str = "corrected"
) -> float:
    co = inversion_coefficients(cfg, rho_AB, re_variant=variant)
    if abs(co.Y4) <= DENOM_TOL:
        raise InsufficientResourceError(f"set-2 denominator vanishes ({abs(co.Y4):.3e})")
    return (b_exp * co.Y1 - co.Y2 - co.Y3 * im_wv) / co.Y4


# -- necessary and sufficient conditions --------------------------------------


@dataclass(frozen=True)
class NecessityReport:
    product_distance: float
    is_product: bool
    inert: bool
    set1_deviation: float | None = None
    set2_deviation: float | None = None

    @property
    def message(self) -> str:
        if self.inert:
            return "inert: protocol cannot transfer information"
        return "non-product resource: protocol can carry information"


def _probe_config(rho_AB: QState) -> tuple[ProtocolConfig, PureState]:
    from .states import random_pure

    dA, dB = rho_AB.dims
    rng = np.random.default_rng(12345)
    h = rng.normal(size=(dA, dA)) + 1j * rng.normal(size=(dA, dA))
    A = (h + h.conj().T) / 2
    cfg = ProtocolConfig(
        d=2, basis_a=np.eye(2), b0=mub_b0(2), A_obs=A, B_obs=np.eye(dB),
        pi_l=qmat.basis_projector(dA, 0), g=0.05,
    )
    return cfg, random_pure(2, 7)


def check_necessity(rho_AB: QState, cfg: ProtocolConfig | None = None, psi: PureState | None = None) -> NecessityReport:
    """Decide whether ``rho_AB`` is a product of its marginals.

    For product resources, Bob's conditional states in both sets are also
    compared with his marginal to confirm that nothing reaches him.
    """
    rho_a = qmat.partial_trace(rho_AB.mat, rho_AB.dims, keep=[0])
    rho_b = qmat.partial_trace(rho_AB.mat, rho_AB.dims, keep=[1])
    dist = qmat.max_abs(rho_AB.mat - qmat.tensor(rho_a, rho_b))
    is_product = dist <= PRODUCT_TOL
    if not is_product:
        return NecessityReport(dist, False, False)
    if cfg is None or psi is None:
        cfg, psi = _probe_config(rho_AB)
    rho_I = psi.density()
    dev1 = dev2 = 0.0
    for k in range(cfg.d):
        tw = total_state_first_order(rho_I, rho_AB, cfg.coupling(k))
        b1, _ = bob_state_set1(tw, cfg.pi_v)
        b2, _ = bob_state_set2(tw, cfg.pi_v, cfg.pi_l)
        dev1 = max(dev1, qmat.max_abs(b1 - rho_b))
        dev2 = max(dev2, qmat.max_abs(b2 - rho_b))
    return NecessityReport(dist, True, True, dev1, dev2)


@dataclass(frozen=True)
class SufficiencyReport:
    trace_BM: float
    trace_commutator: complex
    im_denominator: float
    re_denominator: float
    is_product: bool
    conditions: dict = field(default_factory=dict)

    @property
    def sufficient(self) -> bool:
        return all(self.conditions.values())

    def failed(self) -> list[str]:
        return [name for name, ok in self.conditions.items() if not ok]


def check_sufficiency(cfg: ProtocolConfig, rho_AB: QState) -> SufficiencyReport:
    """Evaluate each condition separately and report its magnitude.

    The two published conditions are necessary for non-vanishing
    denominators but do not imply them (for product resources the first
    can be nonzero while the actual set-1 denominator is identically
    zero), so the denominators themselves are checked too.
    """
    t = resource_terms(rho_AB, cfg.A_obs, cfg.B_obs, cfg.pi_l)
    co = inversion_coefficients(cfg, rho_AB, terms=t)
    nec = check_necessity(rho_AB)
    conditions = {
        "non_product": not nec.is_product,
        "trace_BM_nonzero": abs(t.trace_BM) > SUFFICIENCY_TOL,
        "trace_commutator_nonzero": abs(t.t_comm) > SUFFICIENCY_TOL,
        "im_denominator_nonzero": abs(co.X) > SUFFICIENCY_TOL,
        "re_denominator_nonzero": cfg.skip_set2_if_imaginary or abs(co.Y4) > SUFFICIENCY_TOL,
    }
    return SufficiencyReport(t.trace_BM, t.t_comm, co.X, co.Y4, nec.is_product, conditions)


def require_sufficient(cfg: ProtocolConfig, rho_AB: QState) -> SufficiencyReport:
    rep = check_sufficiency(cfg, rho_AB)
    if not rep.sufficient:
        raise InsufficientResourceError("resource insufficient: " + ", ".join(rep.failed()) + " failed")
    return rep


__all__ = [
    "ProtocolConfig",
    "default_config",
    "InversionCoefficients",
    "inversion_coefficients",
    "invert_im",
    "invert_re",
    "check_necessity",
    "check_sufficiency",
    "require_sufficient",
    "NecessityReport",
    "SufficiencyReport",
    "InsufficientResourceError",
    "VanishingDenominatorError",
]
