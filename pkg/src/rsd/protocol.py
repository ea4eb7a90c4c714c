"""End-to-end remote state determination.

For each projector index k (in the agreed order) Bob first learns Im W_k
from the set-1 runs, then Re W_k from the set-2 runs, and finally
assembles and normalizes sum_k W_k |a_k>.  Only the magnitude of the
overall factor sqrt(d) <b0|psi> is recovered; its phase joins the
unobservable global phase, which is fixed by making the first
non-negligible amplitude real and positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import qmat
from .inversion import (
    InsufficientResourceError,
    ProtocolConfig,
    invert_im,
    invert_re,
    require_sufficient,
)
from .states import PureState, QState
from .stats import BitLedger, RoundSample, SamplingPlan, error_propagation, sample_round, total_state
from .weakcore import (
    DENOM_TOL,
    VanishingDenominatorError,
    WeakValueRecord,
    bob_expectation_im,
    bob_expectation_re,
    bob_state_set1,
    bob_state_set2,
    exact_weak_value,
)

PHASE_TOL = 1e-8

Mode = Literal["analytic", "sampled"]
Forward = Literal["closed_form", "first_order", "exact"]


@dataclass(frozen=True)
class RoundEstimate:
    """Bob's two expectation values for projector k (b_re is None when set 2 is skipped)."""

    k: int
    b_im: float
    b_re: float | None
    set1: RoundSample | None = None
    set2: RoundSample | None = None


@dataclass
class ReconstructionResult:
    weak_values: list[WeakValueRecord]
    state: PureState
    # |sqrt(d) <b0|psi>|; its phase is not recoverable
    overall_factor_magnitude: float
    fidelity_vs_truth: float | None = None
    ledger: BitLedger | None = None

    def to_json(self) -> dict:
        return {
            "weak_values": [w.to_json() for w in self.weak_values],
            "state": self.state.to_json(),
            "overall_factor_magnitude": self.overall_factor_magnitude,
            "fidelity": self.fidelity_vs_truth,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "ReconstructionResult":
        wvs = []
        for w in doc["weak_values"]:
            err = None if w.get("re_err") is None else (w["re_err"], w["im_err"])
            kind = "inverted-sampled" if err is not None else "inverted-analytic"
            wvs.append(WeakValueRecord(int(w["k"]), complex(w["re"], w["im"]), kind, err))
        return cls(wvs, PureState.from_json(doc["state"]), doc["overall_factor_magnitude"], doc.get("fidelity"))


def fidelity(a: PureState, b: PureState) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def apply_phase_convention(v: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(np.abs(v) > PHASE_TOL)
    if idx.size == 0:
        raise ValueError("reconstructed vector vanishes")
    lead = v[idx[0]]
    out = v * (abs(lead) / lead)
    out[idx[0]] = abs(lead)
    return out


def assemble_state(cfg: ProtocolConfig, weak_values: Sequence[WeakValueRecord]) -> tuple[PureState, float]:
    """Normalize sum_k W_k |a_k>; return the state and |sqrt(d) <b0|psi>|."""
    vec = np.zeros(cfg.d, dtype=np.complex128)
    for w in weak_values:
        vec = vec + w.value * cfg.basis_a[:, w.k]
    norm = np.linalg.norm(vec)
    if norm <= DENOM_TOL:
        raise ValueError("weak values sum to the zero vector")
    vec = apply_phase_convention(vec / norm)
    vec = vec / np.linalg.norm(vec)
    return PureState(vec, "computational"), float(1 / norm)


def weak_values_from_estimates(
    cfg: ProtocolConfig, rho_AB: QState, estimates: Sequence[RoundEstimate], sampled: bool
) -> list[WeakValueRecord]:
    out = []
    for est in estimates:
        im = invert_im(est.b_im, cfg, rho_AB)
        re = 0.0 if est.b_re is None else invert_re(est.b_re, im, cfg, rho_AB)
        err = None
        if sampled:
            s1, s2 = est.set1, est.set2
            if s2 is None:
                dW_I, _ = error_propagation(cfg, rho_AB, s1.successes, s1.successes, s1.sample_std, 0.0)
                err = (0.0, dW_I)
            else:
                dW_I, dW_R = error_propagation(
                    cfg, rho_AB, s1.successes, s2.successes, s1.sample_std, s2.sample_std
                )
                err = (dW_R, dW_I)
        kind = "inverted-sampled" if sampled else "inverted-analytic"
        out.append(WeakValueRecord(est.k, complex(re, im), kind, err))
    return out


def analytic_estimate(
    psi: PureState, rho_AB: QState, cfg: ProtocolConfig, k: int, forward: Forward = "closed_form"
) -> RoundEstimate:
    c = cfg.coupling(k)
    skip = cfg.skip_set2_if_imaginary
    if forward == "closed_form":
        rho_I = psi.density()
        b_im = bob_expectation_im(cfg.B_obs, rho_I, rho_AB, c, cfg.pi_v)
        b_re = None if skip else bob_expectation_re(cfg.B_obs, rho_I, rho_AB, c, cfg.pi_v, cfg.pi_l)
        return RoundEstimate(k, b_im, b_re)
    tw = total_state(psi, rho_AB, cfg, k, forward)
    rb1, _ = bob_state_set1(tw, cfg.pi_v)
    b_im = qmat.expectation(cfg.B_obs, rb1).real
    b_re = None
    if not skip:
        rb2, _ = bob_state_set2(tw, cfg.pi_v, cfg.pi_l)
        b_re = qmat.expectation(cfg.B_obs, rb2).real
    return RoundEstimate(k, float(b_im), None if b_re is None else float(b_re))


def sampled_estimate(
    psi: PureState, rho_AB: QState, cfg: ProtocolConfig, k: int, plan: SamplingPlan, forward: str = "first_order"
) -> RoundEstimate:
    s1 = sample_round(psi, rho_AB, cfg, 1, k, plan, forward)
    s2 = None if cfg.skip_set2_if_imaginary else sample_round(psi, rho_AB, cfg, 2, k, plan, forward)
    return RoundEstimate(k, s1.mean, None if s2 is None else s2.mean, s1, s2)


def run_protocol(
    psi_true: PureState,
    rho_AB: QState,
    cfg: ProtocolConfig,
    mode: Mode = "analytic",
    seed: int | None = None,
    forward: Forward | None = None,
    accounting: str = "successes",
) -> ReconstructionResult:
    """Run every round, invert, and reconstruct |psi>.

    ``forward`` picks Bob's statistics: ``closed_form`` (first-order
    expressions, analytic default), ``first_order`` (trace of the
    expanded total state, sampled default) or ``exact`` (full unitary).
    """
    require_sufficient(cfg, rho_AB)
    if psi_true.d != cfg.d:
        raise ValueError(f"state dimension {psi_true.d} does not match d={cfg.d}")
    p = qmat.expectation(cfg.pi_v, psi_true.density().mat).real
    if p <= DENOM_TOL:
        raise VanishingDenominatorError(f"Tr(pi_v rho_I) = {p:.3e}: post-selection never succeeds")

    ledger = None
    if mode == "analytic":
        fwd = forward or "closed_form"
        estimates = [analytic_estimate(psi_true, rho_AB, cfg, k, fwd) for k in cfg.projector_order]
    elif mode == "sampled":
        if seed is None:
            raise ValueError("sampled mode needs a seed")
        fwd = forward or "first_order"
        if fwd == "closed_form":
            raise ValueError("sampled mode draws from a total state; use first_order or exact")
        plan = SamplingPlan(cfg.N, seed, accounting)  # type: ignore[arg-type]
        estimates = [sampled_estimate(psi_true, rho_AB, cfg, k, plan, fwd) for k in cfg.projector_order]
        ledger = BitLedger([s for e in estimates for s in (e.set1, e.set2) if s is not None])
    else:
        raise ValueError(f"unknown mode {mode!r}")

    wvs = weak_values_from_estimates(cfg, rho_AB, estimates, sampled=(mode == "sampled"))
    state, factor = assemble_state(cfg, wvs)
    return ReconstructionResult(wvs, state, factor, fidelity(psi_true, state), ledger)


def exact_weak_values(psi: PureState, cfg: ProtocolConfig) -> list[WeakValueRecord]:
    rho_I = psi.density()
    return [WeakValueRecord(k, exact_weak_value(cfg.Pi(k), cfg.pi_v, rho_I), "exact") for k in range(cfg.d)]


__all__ = [
    "ReconstructionResult",
    "RoundEstimate",
    "run_protocol",
    "assemble_state",
    "weak_values_from_estimates",
    "analytic_estimate",
    "sampled_estimate",
    "exact_weak_values",
    "fidelity",
    "InsufficientResourceError",
]
