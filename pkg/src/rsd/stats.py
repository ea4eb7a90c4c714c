"""Monte Carlo measurement statistics, classical-bit accounting and error bars.

Every round (projector index k, set 1 or 2) draws from its own
counter-based stream, ``Philox`` keyed by ``(seed, k, set)``, so rounds
can be sampled in any order or in parallel and still reproduce exactly.
Per round, two uniform arrays of length N are drawn up front: one decides
Alice's post-selection outcome for each copy, the other Bob's measurement
outcome (consumed only for copies Bob is told to measure).  The
distributed harness replays the same arrays inside its source process.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from . import qmat
from .inversion import ProtocolConfig, inversion_coefficients
from .states import PureState, QState
from .weakcore import (
    DENOM_TOL,
    bob_state_set1,
    bob_state_set2,
    total_state_exact,
    total_state_first_order,
)

log = logging.getLogger(__name__)

CLIP_FLOOR = -1e-6

Accounting = Literal["successes", "all"]


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    n_copies: int
    seed: int
    accounting: Accounting = "successes"

    def __post_init__(self):
        if self.n_copies < 1:
            raise ValueError("n_copies must be >= 1")
        if self.accounting not in ("successes", "all"):
            raise ValueError(f"unknown accounting mode {self.accounting!r}")

    def rng(self, k: int, set_id: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, k, set_id])))


# -- single-state sampling ----------------------------------------------------


def clip_state(rho) -> np.ndarray:
    """Project a nearly-PSD matrix onto the PSD cone and renormalize.

    Eigenvalues in [CLIP_FLOOR, 0) are set to zero; anything lower means
    the perturbative state is too far from physical to sample.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    if w[0] >= 0:
        return rho / np.trace(rho).real
    if w[0] < CLIP_FLOOR:
        raise SamplingError(f"state has eigenvalue {w[0]:.3e}; coupling too strong for perturbative sampling")
    log.debug("clipping negative eigenvalue %.3e", w[0])
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real


def bob_eigenvalues(B_obs) -> np.ndarray:
    """Ascending eigenvalues of B; outcome indices on the wire refer to these."""
    return np.linalg.eigh(np.asarray(B_obs, dtype=np.complex128))[0]


def outcome_distribution(rho, B_obs) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of B (ascending) and their Born probabilities in rho."""
    w, v = np.linalg.eigh(np.asarray(B_obs, dtype=np.complex128))
    rho = clip_state(rho)
    p = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho, v))
    p = np.clip(p, 0, None)
    return w, p / p.sum()


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, len(cum) - 1)


def sample_expectation(rho, B_obs, n: int, seed) -> tuple[float, float]:
    """Sample mean of n Born-rule outcomes of B and its standard error."""
    if n < 1:
        raise ValueError("need at least one sample")
    w, p = outcome_distribution(rho, B_obs)
    rng = np.random.default_rng(seed)
    vals = w[_draw(np.cumsum(p), rng.random(n))]
    return _mean_err(vals)


def _mean_err(vals: np.ndarray) -> tuple[float, float]:
    n = len(vals)
    mean = float(np.mean(vals))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(vals, ddof=1) / np.sqrt(n))


# -- protocol rounds ----------------------------------------------------------


@dataclass(frozen=True)
class RoundModel:
    """Outcome distributions for one (k, set) round.

    Alice's outcome index: set 1 uses 0 = fail, 1 = success; set 2 packs
    bit 0 = success on I and bit 1 = success on A, so 3 means both.
    """

    k: int
    set_id: int
    alice_probs: np.ndarray
    success_outcome: int
    bob_eigvals: np.ndarray
    bob_probs: np.ndarray

    @property
    def success_prob(self) -> float:
        return float(self.alice_probs[self.success_outcome])


def _clip_probs(p: np.ndarray) -> np.ndarray:
    p = np.real(np.asarray(p))
    if p.min() < CLIP_FLOOR:
        raise SamplingError(f"negative outcome probability {p.min():.3e}")
    p = np.clip(p, 0, None)
    return p / p.sum()


def total_state(psi: PureState, rho_AB: QState, cfg: ProtocolConfig, k: int, forward: str = "first_order") -> QState:
    c = cfg.coupling(k)
    if forward == "first_order":
        return total_state_first_order(psi.density(), rho_AB, c)
    if forward == "exact":
        return total_state_exact(psi.density(), rho_AB, c)
    raise ValueError(f"unknown forward model {forward!r}")


def round_model(
    psi: PureState, rho_AB: QState, cfg: ProtocolConfig, k: int, set_id: int, forward: str = "first_order"
) -> RoundModel:
    tw = total_state(psi, rho_AB, cfg, k, forward)
    d, dA, dB = tw.dims
    pv = cfg.pi_v
    eye_b = np.eye(dB)
    if set_id == 1:
        p1 = qmat.expectation(qmat.tensor(pv, np.eye(dA), eye_b), tw.mat)
        probs = _clip_probs(np.array([1 - p1, p1]))
        success = 1
        rho_b, _ = bob_state_set1(tw, pv)
    elif set_id == 2:
        pl = cfg.pi_l
        legs_i = (np.eye(d) - pv, pv)
        legs_a = (np.eye(dA) - pl, pl)
        probs = np.array(
            [qmat.expectation(qmat.tensor(legs_i[o & 1], legs_a[o >> 1], eye_b), tw.mat) for o in range(4)]
        )
        probs = _clip_probs(probs)
        success = 3
        rho_b, _ = bob_state_set2(tw, pv, pl)
    else:
        raise ValueError(f"set must be 1 or 2, got {set_id}")
    if probs[success] <= DENOM_TOL:
        raise SamplingError(f"post-selection probability vanishes in round k={k}, set={set_id}")
    w, pb = outcome_distribution(rho_b, cfg.B_obs)
    return RoundModel(k, set_id, probs, success, w, pb)


def draw_round(model: RoundModel, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Alice's outcome index and Bob's eigenvalue index for each of n copies.

    Bob's index is drawn for every copy but only meaningful where Alice
    succeeded.
    """
    u_alice = rng.random(n)
    u_bob = rng.random(n)
    alice = _draw(np.cumsum(model.alice_probs), u_alice)
    bob = _draw(np.cumsum(model.bob_probs), u_bob)
    return alice, bob


def ps_bits(alice_outcomes: np.ndarray, set_id: int) -> np.ndarray:
    """The bit Alice puts on the channel: success flag, or the AND in set 2."""
    if set_id == 1:
        return (alice_outcomes & 1).astype(np.uint8)
    return ((alice_outcomes & 1) & (alice_outcomes >> 1)).astype(np.uint8)


@dataclass(frozen=True)
class RoundSample:
    k: int
    set_id: int
    n: int
    successes: int
    bits_sent: int
    mean: float
    std_err: float
    sample_std: float
    c_eq6_contrib: float = float("nan")


def summarize_round(
    k: int,
    set_id: int,
    n: int,
    bits: np.ndarray,
    bob_eigvals: np.ndarray,
    bob_indices: np.ndarray,
    accounting: Accounting = "successes",
    c_eq6_contrib: float = float("nan"),
) -> RoundSample:
    """Bob's estimate from the eigenvalue indices he recorded on bit-1 copies.

    The distributed harness calls this too, which keeps the two modes
    numerically identical.
    """
    successes = int(np.sum(bits))
    if successes == 0:
        raise SamplingError(f"no post-selection successes in round k={k}, set={set_id} (N={n})")
    vals = np.asarray(bob_eigvals)[np.asarray(bob_indices, dtype=np.int64)]
    mean, err = _mean_err(vals)
    std = float(np.std(vals, ddof=1)) if successes > 1 else 0.0
    sent = successes if accounting == "successes" else n
    return RoundSample(k, set_id, n, successes, sent, mean, err, std, c_eq6_contrib)


def sample_round(
    psi_true: PureState,
    rho_AB: QState,
    cfg: ProtocolConfig,
    set_id: int,
    k: int,
    plan: SamplingPlan,
    forward: str = "first_order",
) -> RoundSample:
    model = round_model(psi_true, rho_AB, cfg, k, set_id, forward)
    alice, bob = draw_round(model, plan.rng(k, set_id), plan.n_copies)
    bits = ps_bits(alice, set_id)
    contrib = plan.n_copies * eq6_round_term(cfg, rho_AB, psi_true, k, set_id)
    return summarize_round(
        k, set_id, plan.n_copies, bits, model.bob_eigvals, bob[bits == 1], plan.accounting, contrib
    )


# -- ledger ---------------------------------------------------------------------


@dataclass
class BitLedger:
    rows: list[RoundSample] = field(default_factory=list)

    def add(self, row: RoundSample) -> None:
        self.rows.append(row)

    def merge(self, other: "BitLedger") -> "BitLedger":
        merged = sorted(self.rows + other.rows, key=lambda r: (r.k, r.set_id))
        return BitLedger(merged)

    @property
    def total_C(self) -> int:
        return sum(r.bits_sent for r in self.rows)

    @property
    def total_successes(self) -> int:
        return sum(r.successes for r in self.rows)

    @property
    def C_eq6(self) -> float:
        return float(sum(r.c_eq6_contrib for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "set", "N", "successes", "bits_sent", "C_eq6_contrib"])
        for r in self.rows:
            w.writerow([r.k, r.set_id, r.n, r.successes, r.bits_sent, repr(float(r.c_eq6_contrib))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BitLedger":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(
                RoundSample(
                    int(rec["k"]), int(rec["set"]), int(rec["N"]), int(rec["successes"]),
                    int(rec["bits_sent"]), float("nan"), float("nan"), float("nan"),
                    float(rec["C_eq6_contrib"]),
                )
            )
        return cls(rows)


# -- classical bits -------------------------------------------------------------


def _squared_total_state(psi: PureState, rho_AB: QState, cfg: ProtocolConfig, k: int, square: str) -> np.ndarray:
    rho0 = qmat.tensor(psi.density().mat, rho_AB.mat)
    dA, dB = rho_AB.dims
    H = qmat.tensor(cfg.Pi(k), cfg.A_obs, np.eye(dB))
    if square == "expanded":
        # U rho0^2 U^dag to first order in g
        r2 = rho0 @ rho0
        return r2 + 1j * cfg.g * qmat.commutator(H, r2)
    if square == "literal":
        tw = rho0 + 1j * cfg.g * qmat.commutator(H, rho0)
        return tw @ tw
    raise ValueError(f"unknown square mode {square!r}")


def eq6_round_term(
    cfg: ProtocolConfig, rho_AB: QState, psi: PureState, k: int, set_id: int, square: str = "expanded"
) -> float:
    """One summand of the bit count (without the factor N)."""
    s = _squared_total_state(psi, rho_AB, cfg, k, square)
    dA, dB = rho_AB.dims
    left = np.eye(dA) if set_id == 1 else cfg.pi_l
    return float(qmat.expectation(qmat.tensor(cfg.pi_v, left, np.eye(dB)), s).real)


def classical_bits_eq6(cfg: ProtocolConfig, rho_AB: QState, psi_true: PureState, square: str = "expanded") -> float:
    """C = N sum_k [Tr(pi_v rho_twk^2) + Tr((pi_v x pi_l x 1) rho_twk^2)]."""
    total = 0.0
    for k in range(cfg.d):
        total += eq6_round_term(cfg, rho_AB, psi_true, k, 1, square)
        total += eq6_round_term(cfg, rho_AB, psi_true, k, 2, square)
    return cfg.N * total


def classical_bits_closed_form(cfg: ProtocolConfig, rho_AB: QState, psi_true: PureState) -> float:
    """(3/2) N d Tr(pi_v rho_I) Tr(rho_AB^2), valid for Bell-diagonal resources
    with pi_l an eigenprojector of sigma_z."""
    p = qmat.expectation(cfg.pi_v, psi_true.density().mat).real
    purity = qmat.expectation(rho_AB.mat, rho_AB.mat).real
    return 1.5 * cfg.N * cfg.d * p * purity


def born_bits_expected(cfg: ProtocolConfig, rho_AB: QState, psi_true: PureState, forward: str = "first_order") -> float:
    """Expected number of 1-bits under the Born rule, N sum_k (P1 + P2)."""
    total = 0.0
    for k in range(cfg.d):
        for s in (1, 2):
            total += round_model(psi_true, rho_AB, cfg, k, s, forward).success_prob
    return cfg.N * total


# -- error propagation ----------------------------------------------------------


def error_propagation(
    cfg: ProtocolConfig,
    rho_AB: QState,
    C_Ik: float,
    C_Rk: float,
    dB_I: float,
    dB_R: float,
) -> tuple[float, float]:
    """Standard errors of Im W and Re W from the spread of Bob's outcomes.

    dB_I and dB_R are single-shot standard deviations of B in the two
    sets; C_Ik and C_Rk the numbers of measurements behind each mean.
    """
    co = inversion_coefficients(cfg, rho_AB)
    if abs(co.X) <= DENOM_TOL or abs(co.Y4) <= DENOM_TOL:
        raise ZeroDivisionError("inversion denominators vanish")
    if C_Ik <= 0 or C_Rk <= 0:
        raise ValueError("measurement counts must be positive")
    dW_I = abs(dB_I / co.X) / np.sqrt(C_Ik)
    dW_R = np.sqrt((co.Y1 * dB_R / co.Y4) ** 2 / C_Rk + (co.Y3 * dB_I / (co.Y4 * co.X)) ** 2 / C_Ik)
    return float(dW_I), float(dW_R)


def empirical_std(values: Iterable[float]) -> float:
    v = np.asarray(list(values), dtype=float)
    return float(np.std(v, ddof=1))
