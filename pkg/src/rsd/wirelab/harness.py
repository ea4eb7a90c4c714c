"""Launch the three roles as separate processes on loopback and collect results."""

from __future__ import annotations

import dataclasses
import json
import os
import socket
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from ..inversion import ProtocolConfig
from ..protocol import ReconstructionResult, fidelity
from ..states import PureState, QState
from ..stats import BitLedger, eq6_round_term
from .session import ROLES, SessionConfig, read_log


class SessionFailed(RuntimeError):
    def __init__(self, codes: dict[str, int], stderr: dict[str, str]):
        detail = "; ".join(f"{r}={c}" for r, c in codes.items())
        super().__init__(f"distributed session failed ({detail})")
        self.codes = codes
        self.stderr = stderr


@dataclass
class DistributedRun:
    result: ReconstructionResult
    ledger: BitLedger
    logs: dict[str, list[dict]]
    output_dir: Path


def free_ports(n: int, host: str = "127.0.0.1") -> list[int]:
    socks = []
    try:
        for _ in range(n):
            s = socket.socket()
            s.bind((host, 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


def make_session(
    cfg: ProtocolConfig,
    rho_AB: QState,
    psi_true: PureState,
    seed: int,
    output_dir: str | Path,
    accounting: str = "successes",
    forward: str = "first_order",
    timeout: float = 30.0,
) -> SessionConfig:
    ports = free_ports(3)
    endpoints = {r: ("127.0.0.1", p) for r, p in zip(ROLES, ports)}
    return SessionConfig(cfg, rho_AB, seed, endpoints, str(output_dir), psi_true, accounting, forward, timeout)


def run_distributed(session: SessionConfig, session_file: str | Path | None = None) -> DistributedRun:
    """Spawn source, bob, alice; wait; check exit codes; load Bob's output."""
    if session.psi_true is None:
        raise ValueError("the harness needs psi_true to hand to the source")
    out = Path(session.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(session_file) if session_file else out / "session.json"
    session.write(path)

    env = dict(os.environ)
    env.setdefault("PYTHONUNBUFFERED", "1")
    procs = {}
    errs = {}
    for role in ("source", "bob", "alice"):
        errs[role] = tempfile.TemporaryFile(mode="w+")
        procs[role] = subprocess.Popen(
            [sys.executable, "-m", "rsd.cli", "serve", "--role", role, "--session", str(path)],
            stdout=subprocess.DEVNULL,
            stderr=errs[role],
            env=env,
        )
    codes = {}
    for role, p in procs.items():
        try:
            codes[role] = p.wait(timeout=session.timeout * 4)
        except subprocess.TimeoutExpired:
            p.kill()
            codes[role] = p.wait()
    stderr = {}
    for role, fh in errs.items():
        fh.seek(0)
        stderr[role] = fh.read()
        fh.close()
    if any(codes.values()):
        raise SessionFailed(codes, stderr)

    result = ReconstructionResult.from_json(json.loads((out / "bob_result.json").read_text()))
    result.fidelity_vs_truth = fidelity(session.psi_true, result.state)
    ledger = BitLedger.from_csv((out / "bob_ledger.csv").read_text())
    cfg, rho, n = session.protocol, session.resource, session.protocol.N
    ledger.rows = [
        dataclasses.replace(r, c_eq6_contrib=n * eq6_round_term(cfg, rho, session.psi_true, r.k, r.set_id))
        for r in ledger.rows
    ]
    result.ledger = ledger
    (out / "result.json").write_text(result.dumps())
    (out / "ledger.csv").write_text(ledger.to_csv())
    logs = {r: read_log(out / f"{r}_log.jsonl") for r in ROLES}
    return DistributedRun(result, ledger, logs, out)
