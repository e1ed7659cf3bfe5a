"""
Command-line surface for tailcert.

Every command prints a JSON envelope on stdout:

    {"success": true, "result": {...}}   or   {"success": false, "error": "..."}

and writes a manifest next to its primary output so the run can be replayed.
Exit codes: 0 success, 1 usage error, 2 data error, 3 certificate violation.
"""

import argparse
import hashlib
import json
import logging
import re
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from tailcert import __version__
from tailcert.audit import (
    Centering,
    SampleSet,
    audit_samples,
    center_of,
    direction_panel,
    sensitivity_sweep,
    survival_curve,
)
from tailcert.certificates import (
    ConstantMode,
    certificate_from_record,
    certificate_to_record,
    certify_for_latent,
)
from tailcert.config import (
    LOG_LEVELS,
    Settings,
    configure_logging,
    get_settings,
    reset_settings,
    settings_from_record,
    use_settings,
)
from tailcert.data_io import (
    ReturnKind,
    ingest_returns,
    parse_target_spec,
    read_sample_set,
    sample_target,
    target_from_record,
    write_sample_set,
)
from tailcert.diffusion import DiffusionChain, certify_diffusion, parse_schedule, sample_chain
from tailcert.errors import ShapeError, TailCertError, UsageError
from tailcert.fileio import atomic_write_text
from tailcert.latents import certificate_params, latent_from_record, load_latent, sample
from tailcert.network import BoundMethod, certified_lipschitz, forward, load_network
from tailcert.numerics import RNG_ALGORITHM, RngStream

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VIOLATION = 3

# Stream ids keep latent draws and audit directions independent under one seed.
DRAW_STREAM = 0
DIRECTION_STREAM = 1
SWEEP_STREAM = 2

TARGET_KINDS = ("cauchy", "student")


class Manifest(BaseModel):
    tool_version: str
    command: str
    argv: List[str]
    resolved_config: Dict[str, Any]
    seed: Optional[int] = None
    rng_algorithm: str
    outputs: List[str]
    inputs: Dict[str, str] = {}
    input_digests: Dict[str, str] = {}
    started_at: str
    finished_at: str


@dataclass
class CommandOutcome:
    result: Dict
    primary_out: Path
    outputs: List[Path] = field(default_factory=list)
    seed: Optional[int] = None
    exit_code: int = EXIT_OK


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# Argument types
# ---------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_grid(text: str) -> np.ndarray:
    """'t0:t1:steps' → linspace(t0, t1, steps)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be t0:t1:steps, got {text!r}")
    try:
        t0, t1, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}")
    if t0 < 0 or t1 < t0 or steps < 1:
        raise UsageError(f"grid needs 0 <= t0 <= t1 and steps >= 1, got {text!r}")
    return np.linspace(t0, t1, steps)


def parse_directions(text: str, p: int, rng: RngStream) -> np.ndarray:
    """'axes', 'axes+K' or 'K' (random unit directions only)."""
    match = re.fullmatch(r"\s*(axes)?\s*\+?\s*(\d+)?\s*", text)
    if not match or not (match.group(1) or match.group(2)):
        raise UsageError(f"directions must be axes, axes+K or K, got {text!r}")
    k = int(match.group(2) or 0)
    panel = direction_panel(p, rng, k)
    if not match.group(1):
        panel = panel[p:]
    if panel.shape[0] == 0:
        raise UsageError("direction panel is empty")
    return panel


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path, data: Dict) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# File inputs whose bytes feed the result; their digests go into the manifest.
DIGESTED_INPUTS = ("model", "chain", "samples", "cert", "csv")


def _read_input(args, path: str) -> str:
    """Text of a spec file, taken from the manifest on replay, recorded otherwise."""
    text = args.recorded_inputs.get(path)
    if text is None:
        text = Path(path).read_text(encoding="utf-8")
    args.inputs_read[path] = text
    return text


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_digests(args) -> Dict[str, str]:
    digests = {}
    for name in DIGESTED_INPUTS:
        value = getattr(args, name, None)
        for path in value if isinstance(value, list) else [value]:
            if path and Path(path).is_file():
                digests[path] = _digest(path)
    return digests


def _latent_text(args) -> str:
    if getattr(args, "spec_file", None):
        return _read_input(args, args.spec_file)
    if not args.latent:
        raise UsageError("one of --latent or --spec-file is required")
    return args.latent


def _check_input_dim(latent_dim: int, input_dim: int):
    if latent_dim != input_dim:
        raise ShapeError(f"latent dimension {latent_dim} does not match network input dimension {input_dim}")


def _mode(args) -> ConstantMode:
    return ConstantMode.parse(args.mode)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_certify(args) -> CommandOutcome:
    net = load_network(args.model)
    latent = load_latent(_latent_text(args))
    _check_input_dim(latent.dim, net.input_dim)
    lip = certified_lipschitz(net, method=BoundMethod(args.lipschitz_method))
    params = certificate_params(latent, cheeger=args.cheeger, gamma=args.gamma)
    p = args.p_override or net.output_dim
    cert = certify_for_latent(lip, latent, params, p, _mode(args), args.paper_constant)
    out = _write_json(args.out, certificate_to_record(cert))
    return CommandOutcome(
        result={"out": str(out), "family": cert.family.value, "scale": cert.scale,
                "prefactor": cert.prefactor, "lipschitz": lip.value},
        primary_out=out,
        outputs=[out],
    )


def cmd_certify_diffusion(args) -> CommandOutcome:
    net = load_network(args.model)
    chain = DiffusionChain.for_network(parse_schedule(args.schedule), net)
    lip_f = certified_lipschitz(net, method=BoundMethod(args.lipschitz_method))
    cert = certify_diffusion(chain, lip_f, _mode(args), args.paper_constant)
    out = _write_json(args.out, certificate_to_record(cert))
    return CommandOutcome(
        result={"out": str(out), "scale": cert.scale, "noise_net_lipschitz": lip_f.value,
                "log10_composite_lipschitz": cert.provenance["log10_composite_lipschitz"]},
        primary_out=out,
        outputs=[out],
    )


def cmd_sample(args) -> CommandOutcome:
    rng = RngStream(args.seed, DRAW_STREAM)
    if args.chain:
        if not args.schedule:
            raise UsageError("--chain needs --schedule")
        chain = DiffusionChain.for_network(parse_schedule(args.schedule), load_network(args.chain))
        s = SampleSet(sample_chain(chain, rng, args.n),
                      provenance=f"diffusion chain {args.chain}, seed={args.seed}")
        spec = {"kind": "chain", "model": args.chain, "schedule": chain.schedule.to_record()}
    else:
        if args.spec_file:
            record = json.loads(_read_input(args, args.spec_file))
            if not isinstance(record, dict):
                raise UsageError(f"{args.spec_file} must hold a JSON object")
            is_target = record.get("kind") in TARGET_KINDS
            spec_obj = target_from_record(record) if is_target else latent_from_record(record)
        elif args.target:
            is_target, spec_obj = True, parse_target_spec(args.target)
        else:
            is_target, spec_obj = False, load_latent(args.latent)

        if is_target:
            s = sample_target(spec_obj, rng, args.n)
        else:
            s = SampleSet(sample(spec_obj, rng, args.n),
                          provenance=f"{spec_obj.kind} latent, seed={args.seed}")
        spec = spec_obj.to_record()
    out = write_sample_set(s, args.out, seed=args.seed, spec=spec)
    return CommandOutcome(
        result={"out": str(out), "n": s.n, "p": s.p},
        primary_out=out,
        outputs=[out, out.with_name(out.name + ".meta.json")],
        seed=args.seed,
    )


def cmd_push(args) -> CommandOutcome:
    net = load_network(args.model)
    latent = load_latent(_latent_text(args))
    _check_input_dim(latent.dim, net.input_dim)
    z = sample(latent, RngStream(args.seed, DRAW_STREAM), args.n)
    s = SampleSet(forward(net, z), provenance=f"push-forward of {latent.kind} latent through {args.model}")
    out = write_sample_set(s, args.out, seed=args.seed,
                           spec={"model": args.model, "latent": latent.to_record()})
    return CommandOutcome(
        result={"out": str(out), "n": s.n, "p": s.p},
        primary_out=out,
        outputs=[out, out.with_name(out.name + ".meta.json")],
        seed=args.seed,
    )


def cmd_audit(args) -> CommandOutcome:
    s = read_sample_set(args.samples)
    cert = certificate_from_record(json.loads(Path(args.cert).read_text(encoding="utf-8")))
    directions = parse_directions(args.directions or f"axes+{get_settings().random_directions}",
                                  s.p, RngStream(args.seed, DIRECTION_STREAM))
    grid = parse_grid(args.grid) if args.grid else None
    result = audit_samples(s, cert, directions, grid, Centering(args.centering), args.delta)

    out_json = _write_json(args.out_json, result.to_record())
    frames = [report.to_frame().assign(direction=i) for i, report in enumerate(result.reports)]
    table = pd.concat(frames, ignore_index=True)[
        ["direction", "t", "empirical_exceedance", "certificate_bound", "vacuous"]
    ]
    out_csv = atomic_write_text(args.out_csv, table.to_csv(index=False, lineterminator="\n"))
    outputs = [out_json, out_csv]

    if args.out_survival:
        centered = s.samples - center_of(s, Centering(args.centering))
        curves = [survival_curve(centered @ report.direction).assign(direction=i)
                  for i, report in enumerate(result.reports)]
        survival = pd.concat(curves, ignore_index=True)
        outputs.append(atomic_write_text(args.out_survival, survival.to_csv(index=False, lineterminator="\n")))

    verdict = "violation" if result.violated else "consistent_with_certificate"
    if result.violated:
        logger.warning(f"[WARNING] Samples in {args.samples} violate the certificate in {args.cert}")
    return CommandOutcome(
        result={
            "verdict": verdict,
            "directions": len(result.reports),
            "violating_directions": [i for i, r in enumerate(result.reports) if not r.verdict.consistent],
            "out_json": str(out_json),
            "out_csv": str(out_csv),
        },
        primary_out=out_json,
        outputs=outputs,
        seed=args.seed,
        exit_code=EXIT_VIOLATION if result.violated else EXIT_OK,
    )


def cmd_ingest_returns(args) -> CommandOutcome:
    kind = ReturnKind.LOG if args.log_returns else ReturnKind.SIMPLE
    s = ingest_returns(args.csv, price_column=args.price_col, date_column=args.date_col, kind=kind)
    out = write_sample_set(s, args.out, spec={"kind": "returns", "return_kind": kind.value, "sources": args.csv})
    return CommandOutcome(
        result={"out": str(out), "n": s.n, "p": s.p, "return_kind": kind.value},
        primary_out=out,
        outputs=[out, out.with_name(out.name + ".meta.json")],
    )


def cmd_sweep(args) -> CommandOutcome:
    frame = sensitivity_sweep(args.depths, args.latent_dims, RngStream(args.seed, SWEEP_STREAM), args.n)
    out = atomic_write_text(args.out, frame.to_csv(index=False, lineterminator="\n"))
    return CommandOutcome(
        result={"out": str(out), "rows": len(frame),
                "violations": int((frame["verdict"] == "violation").sum())},
        primary_out=out,
        outputs=[out],
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_mode(sub):
    sub.add_argument("--mode", default="tight", choices=["tight", "paper", "paper_form"])
    sub.add_argument("--paper-constant", type=_positive_float, default=None,
                     help="absolute constant C of the paper-form certificates")
    sub.add_argument("--lipschitz-method", default=BoundMethod.MIN.value,
                     choices=[m.value for m in BoundMethod])


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="tailcert", description="Tail certificates for push-forward generators")
    parser.add_argument("--version", action="version", version=f"tailcert {__version__}")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None)
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("certify", help="certificate for a network and latent")
    sub.add_argument("--model", required=True)
    sub.add_argument("--latent")
    sub.add_argument("--spec-file")
    sub.add_argument("--cheeger", type=_positive_float)
    sub.add_argument("--gamma", type=_positive_float)
    sub.add_argument("--p-override", type=_positive_int)
    _add_mode(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_certify)

    sub = commands.add_parser("certify-diffusion", help="certificate for a diffusion sampler")
    sub.add_argument("--model", required=True)
    sub.add_argument("--schedule", required=True,
                     help="T,beta_start,beta_end | cosine:T=N[,s=S] | arithmetic:T=N,start=B,increment=D")
    _add_mode(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_certify_diffusion)

    sub = commands.add_parser("sample", help="draw latents, targets or chain outputs")
    source = sub.add_mutually_exclusive_group(required=True)
    source.add_argument("--latent")
    source.add_argument("--target")
    source.add_argument("--chain", help="noise network JSON; needs --schedule")
    source.add_argument("--spec-file")
    sub.add_argument("--schedule")
    sub.add_argument("--n", type=_positive_int, required=True)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_sample)

    sub = commands.add_parser("push", help="latent draws pushed through a network")
    sub.add_argument("--model", required=True)
    sub.add_argument("--latent")
    sub.add_argument("--spec-file")
    sub.add_argument("--n", type=_positive_int, required=True)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_push)

    sub = commands.add_parser("audit", help="compare samples with a certificate")
    sub.add_argument("--samples", required=True)
    sub.add_argument("--cert", required=True)
    sub.add_argument("--directions", help="axes, axes+K or K")
    sub.add_argument("--grid", help="t0:t1:steps")
    sub.add_argument("--centering", default=Centering.MEAN.value, choices=[c.value for c in Centering])
    sub.add_argument("--delta", type=_positive_float, default=0.01)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-json", required=True)
    sub.add_argument("--out-csv", required=True)
    sub.add_argument("--out-survival")
    sub.set_defaults(handler=cmd_audit)

    sub = commands.add_parser("ingest-returns", help="daily returns in basis points from price CSVs")
    sub.add_argument("--csv", action="append", required=True)
    sub.add_argument("--date-col", default="Date")
    sub.add_argument("--price-col", default="Close")
    sub.add_argument("--log-returns", action="store_true")
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_ingest_returns)

    sub = commands.add_parser("sweep", help="generator depth and latent dimension sensitivity")
    sub.add_argument("--depths", type=_int_list, default=[4, 6, 8])
    sub.add_argument("--latent-dims", type=_int_list, default=[32, 64, 128])
    sub.add_argument("--n", type=_positive_int, required=True)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=cmd_sweep)

    sub = commands.add_parser("replay", help="re-run the command recorded in a manifest")
    sub.add_argument("--manifest", required=True)
    return parser


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def manifest_path(primary_out) -> Path:
    primary_out = Path(primary_out)
    return primary_out.with_name(primary_out.name + ".manifest.json")


def _write_manifest(args, argv: List[str], outcome: CommandOutcome, started_at: str) -> Path:
    config = {k: v for k, v in vars(args).items() if k not in ("handler", "recorded_inputs", "inputs_read")}
    config["settings"] = asdict(get_settings())
    manifest = Manifest(
        tool_version=__version__,
        command=args.command,
        argv=argv,
        resolved_config=config,
        seed=outcome.seed,
        rng_algorithm=RNG_ALGORITHM,
        outputs=[str(p) for p in outcome.outputs],
        inputs=args.inputs_read,
        input_digests=_input_digests(args),
        started_at=started_at,
        finished_at=_now(),
    )
    return _write_json(manifest_path(outcome.primary_out), manifest.model_dump())


def load_manifest(path) -> Manifest:
    return Manifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _emit(envelope: Dict):
    print(json.dumps(envelope, default=str))


def _replay(args) -> int:
    """Re-run a manifest under its recorded settings and spec-file contents."""
    manifest = load_manifest(args.manifest)
    if manifest.tool_version != __version__:
        logger.warning(f"[WARNING] Manifest written by tailcert {manifest.tool_version}, running {__version__}")
    if manifest.argv and manifest.argv[0] == "replay":
        raise UsageError("a manifest cannot replay another replay")
    if "settings" not in manifest.resolved_config:
        raise UsageError(f"{args.manifest} records no settings to replay under")
    settings = settings_from_record(manifest.resolved_config["settings"])

    for path, digest in manifest.input_digests.items():
        if not Path(path).is_file():
            logger.warning(f"[WARNING] Input {path} recorded in the manifest is missing")
        elif _digest(path) != digest:
            logger.warning(f"[WARNING] Input {path} changed since the manifest was written")

    logger.info(f"[OK] Replaying {' '.join(manifest.argv)}")
    return run(manifest.argv, settings=settings, inputs=manifest.inputs)


def run(
    argv: Optional[List[str]] = None,
    settings: Optional[Settings] = None,
    inputs: Optional[Dict[str, str]] = None,
) -> int:
    """
    Execute one command and print its envelope. settings / inputs pin the
    configuration and spec-file texts, which is how replay reproduces a run.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    started_at = _now()
    if settings is not None:
        use_settings(settings)
    try:
        args = build_parser().parse_args(argv)
        args.recorded_inputs = dict(inputs or {})
        args.inputs_read = {}
        configure_logging(args.log_level)
        if args.command == "replay":
            return _replay(args)
        outcome = args.handler(args)
        manifest = _write_manifest(args, argv, outcome, started_at)
        _emit({"success": True, "result": {**outcome.result, "manifest": str(manifest)}})
        return outcome.exit_code
    except UsageError as e:
        _emit({"success": False, "error": str(e)})
        return EXIT_USAGE
    except (TailCertError, OSError, ValueError, ValidationError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        _emit({"success": False, "error": str(e)})
        return EXIT_DATA
    finally:
        if settings is not None:
            reset_settings()


def main():
    sys.exit(run())
