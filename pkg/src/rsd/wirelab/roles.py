"""The three processes of a distributed session.

source  owns the joint quantum simulation and answers measurement
        requests; it is the only process that ever sees psi or rho_tw.
alice   asks the source for her post-selection outcome on each copy and
        forwards one classical bit per copy to Bob (the AND of her two
        outcomes in set 2).
bob     measures B, via the source, only on copies whose bit is 1, then
        inverts the statistics and reconstructs the state.

Per round the wire carries ROUND_BEGIN, then for every copy
alice -> source MEAS_REQUEST / MEAS_RESULT (outcome index, bit 0 = I,
bit 1 = A), alice -> bob PS_BIT, and on bit 1 bob -> source MEAS_REQUEST /
MEAS_RESULT (eigenvalue index of B), then alice -> bob ROUND_END.
"""

from __future__ import annotations

import json
import logging
import selectors
from pathlib import Path

import numpy as np

from ..protocol import ReconstructionResult, RoundEstimate, assemble_state, weak_values_from_estimates
from ..stats import BitLedger, SamplingError, bob_eigenvalues, draw_round, ps_bits, round_model, summarize_round
from . import framing
from .framing import MsgType, Role, TransportError
from .session import (
    EXIT_ABORT,
    EXIT_OK,
    EXIT_TRANSPORT,
    Channel,
    ProtocolAbort,
    SessionConfig,
    accept,
    connect,
    listen,
    write_log,
)

log = logging.getLogger(__name__)


def _rounds(session: SessionConfig) -> list[tuple[int, int]]:
    sets = (1,) if session.protocol.skip_set2_if_imaginary else (1, 2)
    return [(k, s) for k in session.protocol.projector_order for s in sets]


def _greet(ch: Channel, session: SessionConfig) -> None:
    ch.send(MsgType.HELLO, int(ch.me), framing.hello(session.digest()))


def _expect_greeting(ch: Channel, session: SessionConfig) -> Role:
    msg = ch.recv({MsgType.HELLO})
    if msg.fields()["config_hash"] != session.digest():
        ch.abort("config-mismatch")
        raise ProtocolAbort("config-mismatch")
    try:
        return Role(msg.round_k)
    except ValueError:
        ch.abort("unknown-role")
        raise ProtocolAbort("unknown-role") from None


def _abort_all(channels, exc: Exception) -> None:
    """Tell every still-open peer the session is over before re-raising."""
    if isinstance(exc, ProtocolAbort):
        reason = exc.reason
    elif isinstance(exc, (TransportError, EOFError)):
        reason = "transport-error"
    else:
        reason = f"{type(exc).__name__}: {exc}"
    for ch in channels:
        if ch is not None:
            ch.abort(reason)


# -- source --------------------------------------------------------------------


def run_source(session: SessionConfig, out: Path) -> None:
    if session.psi_true is None:
        raise ProtocolAbort("source needs psi_true")
    msg_log: list = []
    cfg, rho, plan = session.protocol, session.resource, session.plan
    draws: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def draws_for(k: int, set_id: int):
        if (k, set_id) not in draws:
            model = round_model(session.psi_true, rho, cfg, k, set_id, session.forward)
            alice, bob = draw_round(model, plan.rng(k, set_id), plan.n_copies)
            draws[(k, set_id)] = (alice, bob, ps_bits(alice, set_id))
        return draws[(k, set_id)]

    srv = listen(session.endpoints["source"])
    channels: dict[Role, Channel] = {}
    try:
        for _ in range(2):
            sock = accept(srv, session.timeout)
            ch = Channel(sock, Role.SOURCE, Role.SOURCE, msg_log)
            role = _expect_greeting(ch, session)
            if role not in (Role.ALICE, Role.BOB) or role in channels:
                ch.abort("unexpected-role")
                raise ProtocolAbort(f"unexpected role {role.name}")
            ch.peer = role
            msg_log[-1]["peer"] = role.name.lower()
            _greet(ch, session)
            channels[role] = ch
    finally:
        srv.close()

    current: dict[Role, tuple[int, int] | None] = {Role.ALICE: None, Role.BOB: None}
    sel = selectors.DefaultSelector()
    for role, ch in channels.items():
        sel.register(ch.sock, selectors.EVENT_READ, role)
    open_roles = set(channels)
    try:
        while open_roles:
            events = sel.select(timeout=session.timeout)
            if not events:
                raise TransportError("source idle timeout")
            for key, _ in events:
                role = key.data
                ch = channels[role]
                try:
                    msg = ch.recv({MsgType.ROUND_BEGIN, MsgType.MEAS_REQUEST, MsgType.ROUND_END})
                except EOFError:
                    sel.unregister(ch.sock)
                    open_roles.discard(role)
                    continue
                if msg.msg_type is MsgType.ROUND_BEGIN:
                    f = msg.fields()
                    current[role] = (f["k"], f["set"])
                    draws_for(f["k"], f["set"])
                elif msg.msg_type is MsgType.MEAS_REQUEST:
                    if current[role] is None:
                        ch.abort("no-round")
                        raise ProtocolAbort("measurement request outside a round")
                    k, set_id = current[role]
                    msg_log[-1]["set"] = set_id
                    alice, bob, bits = draws_for(k, set_id)
                    i = msg.fields()["copy_index"]
                    if i >= plan.n_copies:
                        ch.abort("bad-copy-index")
                        raise ProtocolAbort(f"copy index {i} out of range")
                    if role is Role.ALICE:
                        value = int(alice[i])
                    else:
                        if not bits[i]:
                            ch.abort("measure-without-trigger")
                            raise ProtocolAbort(f"bob measured copy {i} without a 1-bit")
                        value = int(bob[i])
                    ch.send(MsgType.MEAS_RESULT, k, framing.meas_result(value), set=set_id, copy=i)
    except Exception as exc:
        _abort_all(channels.values(), exc)
        raise
    finally:
        for ch in channels.values():
            ch.close()
        write_log(out / "source_log.jsonl", msg_log)


# -- alice -----------------------------------------------------------------------


def run_alice(session: SessionConfig, out: Path) -> None:
    msg_log: list = []
    src = Channel(connect(session.endpoints["source"], session.timeout), Role.ALICE, Role.SOURCE, msg_log)
    bob = None
    try:
        src.sock.settimeout(session.timeout)
        _greet(src, session)
        _expect_greeting(src, session)
        bob = Channel(connect(session.endpoints["bob"], session.timeout), Role.ALICE, Role.BOB, msg_log)
        bob.sock.settimeout(session.timeout)
        _greet(bob, session)
        _expect_greeting(bob, session)
        n = session.protocol.N
        for k, set_id in _rounds(session):
            src.send(MsgType.ROUND_BEGIN, k, framing.round_begin(k, set_id), set=set_id)
            bob.send(MsgType.ROUND_BEGIN, k, framing.round_begin(k, set_id), set=set_id)
            successes = 0
            for i in range(n):
                src.send(MsgType.MEAS_REQUEST, k, framing.meas_request(i), set=set_id)
                outcome = src.recv({MsgType.MEAS_RESULT}, set=set_id, copy=i).fields()["eigenvalue_index"]
                bit = int(ps_bits(np.array([outcome]), set_id)[0])
                successes += bit
                bob.send(MsgType.PS_BIT, k, framing.ps_bit(bit), set=set_id, copy=i)
            bob.send(MsgType.ROUND_END, k, framing.round_end(successes), set=set_id)
    except Exception as exc:
        _abort_all((src, bob), exc)
        raise
    finally:
        src.close()
        if bob is not None:
            bob.close()
        write_log(out / "alice_log.jsonl", msg_log)


# -- bob -------------------------------------------------------------------------


def run_bob(session: SessionConfig, out: Path) -> None:
    cfg, rho = session.protocol, session.resource
    msg_log: list = []
    srv = listen(session.endpoints["bob"])
    src = alice = None
    try:
        src = Channel(connect(session.endpoints["source"], session.timeout), Role.BOB, Role.SOURCE, msg_log)
        src.sock.settimeout(session.timeout)
        _greet(src, session)
        _expect_greeting(src, session)
        alice = Channel(accept(srv, session.timeout), Role.BOB, Role.ALICE, msg_log)
        if _expect_greeting(alice, session) is not Role.ALICE:
            alice.abort("unexpected-role")
            raise ProtocolAbort("expected alice on the bob endpoint")
        _greet(alice, session)

        eigvals = bob_eigenvalues(cfg.B_obs)
        samples = {}
        for k_expected, set_expected in _rounds(session):
            begin = alice.recv({MsgType.ROUND_BEGIN}).fields()
            k, set_id = begin["k"], begin["set"]
            if (k, set_id) != (k_expected, set_expected):
                alice.abort("round-order")
                raise ProtocolAbort(f"round ({k}, {set_id}) out of the agreed order")
            src.send(MsgType.ROUND_BEGIN, k, framing.round_begin(k, set_id), set=set_id)
            bits = np.zeros(cfg.N, dtype=np.uint8)
            indices = []
            for i in range(cfg.N):
                bit = alice.recv({MsgType.PS_BIT}, set=set_id, copy=i).fields()["bit"]
                bits[i] = bit
                if bit:
                    src.send(MsgType.MEAS_REQUEST, k, framing.meas_request(i), set=set_id)
                    res = src.recv({MsgType.MEAS_RESULT}, set=set_id, copy=i)
                    idx = res.fields()["eigenvalue_index"]
                    if idx >= len(eigvals):
                        src.abort("bad-eigenvalue-index")
                        raise ProtocolAbort(f"eigenvalue index {idx} out of range")
                    indices.append(idx)
            reported = alice.recv({MsgType.ROUND_END}, set=set_id).fields()["successes"]
            if reported != int(bits.sum()):
                alice.abort("success-count-mismatch")
                raise ProtocolAbort("ROUND_END success count disagrees with received bits")
            samples[(k, set_id)] = summarize_round(
                k, set_id, cfg.N, bits, eigvals, np.array(indices, dtype=np.int64), session.accounting
            )

        estimates = []
        for k in cfg.projector_order:
            s1, s2 = samples[(k, 1)], samples.get((k, 2))
            estimates.append(RoundEstimate(k, s1.mean, None if s2 is None else s2.mean, s1, s2))
        wvs = weak_values_from_estimates(cfg, rho, estimates, sampled=True)
        state, factor = assemble_state(cfg, wvs)
        result = ReconstructionResult(wvs, state, factor, None)
        (out / "bob_result.json").write_text(json.dumps(result.to_json(), sort_keys=True))
        ledger = BitLedger([samples[key] for key in _rounds(session)])
        (out / "bob_ledger.csv").write_text(ledger.to_csv())
    except Exception as exc:
        _abort_all((src, alice), exc)
        raise
    finally:
        srv.close()
        for ch in (src, alice):
            if ch is not None:
                ch.close()
        write_log(out / "bob_log.jsonl", msg_log)


ROLE_MAIN = {"source": run_source, "alice": run_alice, "bob": run_bob}


def serve(role: str, session_path: str) -> int:
    """Process entry point; returns the exit code."""
    try:
        session = SessionConfig.load(session_path, role)
        out = Path(session.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        ROLE_MAIN[role](session, out)
    except ProtocolAbort as exc:
        log.error("%s aborted: %s", role, exc.reason)
        return EXIT_ABORT
    except (TransportError, EOFError, OSError) as exc:
        log.error("%s transport error: %s", role, exc)
        return EXIT_TRANSPORT
    except (SamplingError, ValueError) as exc:
        # the physics refused (vanishing denominators, non-perturbative state)
        log.error("%s aborted: %s", role, exc)
        return EXIT_ABORT
    return EXIT_OK
