"""Command-line experiment runner.

Every subcommand builds an ``ExperimentSpec``, validates it, runs it, writes
JSON or CSV, and prints a one-line summary.  A JSON result embeds the
spec it came from, so ``rsd run --config result.json`` reproduces it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inversion import InsufficientResourceError, ProtocolConfig, check_necessity, check_sufficiency, default_config
from .noise import FiberScenario, copies_needed, overhead_csv, overhead_curve
from .protocol import exact_weak_values, run_protocol
from .states import PureState, StateError, parse_resource, random_pure
from .stats import (
    SamplingError,
    born_bits_expected,
    classical_bits_closed_form,
    classical_bits_eq6,
)
from .weakcore import VanishingDenominatorError

EXIT_CONFIG = 1
EXIT_PROTOCOL = 2

KINDS = ("roundtrip", "gscan", "noise_overhead", "bits", "distributed", "checks")

# per-kind required parameters; everything else falls back to DEFAULTS
REQUIRED = {
    "roundtrip": ("resource",),
    "gscan": ("resource", "g_list"),
    "noise_overhead": ("z", "dphi"),
    "bits": ("resource",),
    "distributed": ("resource", "seed"),
    "checks": ("resource",),
}

DEFAULTS = {
    "d": 2,
    "g": 0.01,
    "N": 1000,
    "mode": "analytic",
    "forward": None,
    "seed": None,
    "psi_seed": 0,
    "accounting": "successes",
    "n_axis": [1.0, 0.0, 0.0],
    "m_axis": [2**-0.5, 2**-0.5, 0.0],
    "skip_set2_if_imaginary": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    output_path: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        missing = [p for p in REQUIRED[self.kind] if self.params.get(p) is None]
        if missing:
            raise ConfigError(f"{self.kind} needs: {', '.join(missing)}")
        p = self.params
        if self.kind in ("roundtrip", "gscan") and p.get("mode") == "sampled" and p.get("seed") is None:
            raise ConfigError("sampled mode needs --seed")
        if p.get("mode") not in (None, "analytic", "sampled"):
            raise ConfigError(f"unknown mode {p['mode']!r}")
        if p.get("accounting") not in (None, "successes", "all"):
            raise ConfigError(f"unknown accounting {p['accounting']!r}")
        for key in ("d", "N"):
            if p.get(key) is not None and int(p[key]) < 1:
                raise ConfigError(f"{key} must be >= 1")

    def resolved(self) -> "ExperimentSpec":
        params = {**DEFAULTS, **{k: v for k, v in self.params.items() if v is not None}}
        if self.kind == "noise_overhead":
            params = {k: params.get(k) for k in ("z", "dphi", "N", "z_grid", "dphi_grid") if k in params}
        return ExperimentSpec(self.kind, params, self.output_path)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "output_path": self.output_path}

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentSpec":
        if "experiment" in doc:
            doc = doc["experiment"]
        try:
            return cls(doc["kind"], dict(doc.get("params", {})), doc.get("output_path"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment spec: {exc}") from None


def _workers() -> int:
    env = os.environ.get("RSD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"RSD_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _protocol(p: dict, **override) -> ProtocolConfig:
    q = {**p, **override}
    return default_config(
        d=int(q["d"]),
        g=float(q["g"]),
        N=int(q["N"]),
        n=tuple(q["n_axis"]),
        m=tuple(q["m_axis"]),
        skip_set2_if_imaginary=bool(q["skip_set2_if_imaginary"]),
    )


def _psi(p: dict) -> PureState:
    return random_pure(int(p["d"]), int(p["psi_seed"]))


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


# -- experiments ---------------------------------------------------------------


def _run_roundtrip(spec: ExperimentSpec) -> tuple[str, str]:
    p = spec.params
    cfg = _protocol(p)
    rho = parse_resource(p["resource"])
    psi = _psi(p)
    res = run_protocol(psi, rho, cfg, p["mode"], p["seed"], p["forward"], p["accounting"])
    doc = {"experiment": spec.to_json(), "protocol": cfg.to_json(), "result": res.to_json()}
    if res.ledger is not None:
        doc["bits_sent"] = res.ledger.total_C
    return f"fidelity = {res.fidelity_vs_truth:.12f}", _dump_json(doc)


def _gscan_point(p: dict, g: float) -> dict:
    cfg = _protocol(p, g=g)
    rho = parse_resource(p["resource"])
    psi = _psi(p)
    fwd = p["forward"] or ("exact" if p["mode"] == "analytic" else "first_order")
    res = run_protocol(psi, rho, cfg, p["mode"], p["seed"], fwd, p["accounting"])
    exact = {w.k: w.value for w in exact_weak_values(psi, cfg)}
    err = max(abs(w.value - exact[w.k]) for w in res.weak_values)
    return {"g": g, "max_weak_value_error": err, "infidelity": 1 - res.fidelity_vs_truth}


def _run_gscan(spec: ExperimentSpec) -> tuple[str, str]:
    p = spec.params
    grid = [float(g) for g in p["g_list"]]
    if not grid:
        raise ConfigError("--g-list is empty")
    with ThreadPoolExecutor(max_workers=min(_workers(), len(grid))) as pool:
        rows = list(pool.map(lambda g: _gscan_point(p, g), grid))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["g", "max_weak_value_error", "infidelity"])
    for r in rows:
        w.writerow([repr(r["g"]), repr(float(r["max_weak_value_error"])), repr(float(r["infidelity"]))])
    worst = max(r["infidelity"] for r in rows)
    return f"{len(rows)} g values, worst infidelity = {worst:.3e}", buf.getvalue()


def _run_noise(spec: ExperimentSpec) -> tuple[str, str]:
    p = spec.params
    n_base = float(p.get("N") or 1000)
    ratio = copies_needed(FiberScenario(float(p["z"]), float(p["dphi"])))
    summary = f"N'/N = {ratio:.6f}\nN' = {ratio * n_base:.2f}"
    if p.get("z_grid") or p.get("dphi_grid"):
        rows = overhead_curve(p.get("z_grid") or [p["z"]], p.get("dphi_grid") or [p["dphi"]])
        return summary, overhead_csv(rows)
    doc = {"experiment": spec.to_json(), "ratio": ratio, "N_prime": ratio * n_base}
    return summary, _dump_json(doc)


def _run_bits(spec: ExperimentSpec) -> tuple[str, str]:
    p = spec.params
    cfg = _protocol(p)
    rho = parse_resource(p["resource"])
    psi = _psi(p)
    doc = {
        "experiment": spec.to_json(),
        "C_eq6": classical_bits_eq6(cfg, rho, psi, "expanded"),
        "C_eq6_literal": classical_bits_eq6(cfg, rho, psi, "literal"),
        "C_closed_form": classical_bits_closed_form(cfg, rho, psi),
        "C_born_expected": born_bits_expected(cfg, rho, psi),
    }
    summary = f"C = {doc['C_eq6']:.6f} (closed form {doc['C_closed_form']:.6f})"
    return summary, _dump_json(doc)


def _run_checks(spec: ExperimentSpec) -> tuple[str, str]:
    p = spec.params
    rho = parse_resource(p["resource"])
    nec = check_necessity(rho)
    doc = {
        "experiment": spec.to_json(),
        "necessity": {
            "product_distance": nec.product_distance,
            "is_product": nec.is_product,
            "inert": nec.inert,
            "set1_deviation": nec.set1_deviation,
            "set2_deviation": nec.set2_deviation,
        },
    }
    summary = nec.message
    if rho.dims == (2, 2):
        suf = check_sufficiency(_protocol(p), rho)
        doc["sufficiency"] = {
            "conditions": suf.conditions,
            "trace_BM": suf.trace_BM,
            "trace_commutator": [suf.trace_commutator.real, suf.trace_commutator.imag],
            "im_denominator": complex(suf.im_denominator).real,
            "re_denominator": [complex(suf.re_denominator).real, complex(suf.re_denominator).imag],
        }
        if not nec.inert:
            summary += "; sufficient" if suf.sufficient else "; insufficient: " + ", ".join(suf.failed())
    return summary, _dump_json(doc)


def _run_distributed(spec: ExperimentSpec) -> tuple[str, str]:
    from .wirelab import make_session, run_distributed

    p = spec.params
    cfg = _protocol(p)
    rho = parse_resource(p["resource"])
    psi = _psi(p)
    out_dir = Path(spec.output_path).with_suffix("") if spec.output_path else Path("rsd_session")
    session = make_session(cfg, rho, psi, int(p["seed"]), out_dir, p["accounting"], p["forward"] or "first_order")
    run = run_distributed(session)
    doc = {"experiment": spec.to_json(), "protocol": cfg.to_json(), "result": run.result.to_json()}
    doc["bits_sent"] = run.ledger.total_C
    return f"fidelity = {run.result.fidelity_vs_truth:.12f}", _dump_json(doc)


RUNNERS = {
    "roundtrip": _run_roundtrip,
    "gscan": _run_gscan,
    "noise_overhead": _run_noise,
    "bits": _run_bits,
    "checks": _run_checks,
    "distributed": _run_distributed,
}


def run_spec(spec: ExperimentSpec) -> tuple[str, str]:
    """Validate and run; returns (summary, file body)."""
    spec.validate()
    spec = spec.resolved()
    summary, body = RUNNERS[spec.kind](spec)
    if spec.output_path:
        Path(spec.output_path).write_text(body)
    return summary, body


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _axis(text: str) -> list[float]:
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"axis must be three comma-separated numbers, got {text!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError("axis needs exactly three components")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--skip-set2-if-imaginary",
        action="store_true",
        default=argparse.SUPPRESS,
        help="skip the set-2 runs (valid when every weak value is known to be imaginary)",
    )

    ap = _Parser(prog="rsd", description="Remote state determination experiments.", parents=[common])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def protocol_args(sp, resource_required=True):
        sp.add_argument("--d", type=int)
        sp.add_argument("--resource", required=resource_required, help="werner:z | bell:c1,c2,c3 | singlet | product[:seed]")
        sp.add_argument("--g", type=float)
        sp.add_argument("--N", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--psi-seed", type=int, help="seed of the random state Alice holds (default 0)")
        sp.add_argument("--n-axis", type=_axis, help="A = n.sigma (default 1,0,0)")
        sp.add_argument("--m-axis", type=_axis, help="B = m.sigma (default 0.7071,0.7071,0)")
        sp.add_argument("--accounting", choices=["successes", "all"])
        sp.add_argument("--out")

    sp = sub.add_parser("roundtrip", parents=[common], help="run the protocol once and report fidelity")
    protocol_args(sp)
    sp.add_argument("--mode", choices=["analytic", "sampled"])
    sp.add_argument("--forward", choices=["closed_form", "first_order", "exact"])

    sp = sub.add_parser("gscan", parents=[common], help="infidelity and weak-value error versus g (CSV)")
    protocol_args(sp)
    sp.add_argument("--g-list", type=float, nargs="+", required=True)
    sp.add_argument("--mode", choices=["analytic", "sampled"])
    sp.add_argument("--forward", choices=["closed_form", "first_order", "exact"])

    sp = sub.add_parser("noise", parents=[common], help="copy overhead after fiber dephasing")
    sp.add_argument("--z", type=float, required=True)
    sp.add_argument("--dphi", type=float, required=True)
    sp.add_argument("--N", type=float, default=1000.0)
    sp.add_argument("--grid", action="store_true", help="emit the overhead curve as CSV")
    sp.add_argument("--z-grid", type=float, nargs="+")
    sp.add_argument("--dphi-grid", type=float, nargs="+")
    sp.add_argument("--out")

    sp = sub.add_parser("bits", parents=[common], help="classical bit count C")
    protocol_args(sp)

    sp = sub.add_parser("checks", parents=[common], help="necessity and sufficiency report for a resource")
    protocol_args(sp)

    sp = sub.add_parser("distributed", parents=[common], help="three-process loopback run")
    protocol_args(sp)
    sp.add_argument("--forward", choices=["first_order", "exact"])

    sp = sub.add_parser("serve", help="run one role of a distributed session")
    sp.add_argument("--role", choices=["source", "alice", "bob"], required=True)
    sp.add_argument("--session", required=True)

    sp = sub.add_parser("run", parents=[common], help="run an experiment spec (or re-run a result file)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    return ap


_PARAM_KEYS = (
    "d", "resource", "g", "N", "seed", "psi_seed", "n_axis", "m_axis", "accounting",
    "mode", "forward", "g_list", "z", "dphi", "z_grid", "dphi_grid", "skip_set2_if_imaginary",
)


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if args.command == "run":
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        spec = ExperimentSpec.from_json(doc)
        if args.out:
            spec.output_path = args.out
        if getattr(args, "skip_set2_if_imaginary", False):
            spec.params["skip_set2_if_imaginary"] = True
        return spec
    kind = "noise_overhead" if args.command == "noise" else args.command
    params = {k: getattr(args, k) for k in _PARAM_KEYS if getattr(args, k, None) is not None}
    if kind == "noise_overhead":
        params.pop("skip_set2_if_imaginary", None)
        if args.grid and not (args.z_grid or args.dphi_grid):
            params["z_grid"] = [round(x, 4) for x in np.linspace(0.0, 1.0, 11)]
            params["dphi_grid"] = [round(x, 4) for x in np.linspace(0.0, 1.0, 11)]
    if not params.get("skip_set2_if_imaginary"):
        params.pop("skip_set2_if_imaginary", None)
    return ExperimentSpec(kind, params, args.out)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error (exit 1)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    if args.command == "serve":
        from .wirelab.roles import serve

        return serve(args.role, args.session)

    try:
        spec = spec_from_args(args)
        summary, body = run_spec(spec)
    except (ConfigError, StateError) as exc:
        print(f"rsd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientResourceError, VanishingDenominatorError, SamplingError) as exc:
        print(f"rsd: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ValueError as exc:
        print(f"rsd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"rsd: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    print(summary)
    if not spec.output_path and body.startswith(("g,", "z,")):
        sys.stdout.write(body)
    return 0


if __name__ == "__main__":
    sys.exit(main())
