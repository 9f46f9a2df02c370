"""Command-line entry point with reproducible run manifests.

Every subcommand writes its outputs plus a manifest JSON recording the argv,
resolved parameters, seed and constants provenance.  All randomness flows
from one seed through spawned generator streams and every reduction has a
fixed order, so re-running a manifest reproduces the output files byte for
byte (the manifest itself carries a wall clock and is not compared).

Exit codes: 0 success, 1 usage or input error, 2 certification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GalerkinTrapError, ParameterError
from .galerkin_flow import (
    IntegratorConfig,
    LogNormBound,
    RealCoordinates,
    galerkin_difference_experiment,
    integrate,
    jacobian,
    lognorm_euclidean,
    lognorm_gershgorin,
    project,
)
from .lattice_bounds import (
    estimate_convolution_bound,
    uniform_lognorm_bound,
)
from .spectral_core import (
    ForceField,
    ModeSet,
    PhysicsParams,
    SpectralField,
    enstrophy,
    random_solenoidal_field,
)
from .trapping import RegionDocument, certify_inward

__all__ = ["main", "run", "load_field"]


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()


def _write_json(path: Path, obj) -> None:
    path.write_bytes(_json_bytes(obj))


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_bytes(buf.getvalue().encode())


def _write_manifest(out_dir: Path, subcommand: str, argv: list[str], parameters: dict,
                    seed: int | None, constants: list[dict], started: float) -> None:
    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "argv": list(argv),
        "parameters": parameters,
        "seed": seed,
        "constants_used": constants,
        "wall_clock_sec": time.time() - started,
    }
    _write_json(out_dir / f"{subcommand.replace('-', '_')}_manifest.json", manifest)


# -- field loading -------------------------------------------------------------


def load_field(path: str | Path, symmetrize: bool = False) -> SpectralField:
    """Load a field from the JSON or CSV schema, enforcing all invariants.

    ``symmetrize`` completes missing conjugate modes; without it, a one-sided
    file is rejected.  Non-solenoidal coefficients are rejected with the
    offending wave vector named.
    """
    path = Path(path)
    if not path.exists():
        raise ParameterError(f"field file not found: {path}")
    if path.suffix.lower() == ".json":
        obj = json.loads(path.read_text())
        return SpectralField.from_json_dict(obj, symmetrize=symmetrize)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dimension = len(header) - 3
        if dimension not in (2, 3):
            raise ParameterError(f"CSV header {header} does not match the field schema")
        rows = list(reader)
    return SpectralField.from_csv_rows(dimension, rows, symmetrize=symmetrize)


def _parse_envelope(text: str) -> tuple[float, float]:
    parts = dict(item.split("=", 1) for item in text.split(","))
    try:
        return float(parts["D"]), float(parts["gamma"])
    except KeyError as exc:
        raise ParameterError(f"envelope spec needs D=..,gamma=.. , got {text!r}") from exc


def parse_field_spec(spec: str, symmetrize: bool = False) -> SpectralField:
    """A field file path, or a generator spec like
    ``random --radius 6 --envelope D=1,gamma=4 --seed 7 [--d 2] [--enstrophy V]``."""
    tokens = shlex.split(spec)
    if not tokens or tokens[0] != "random":
        return load_field(spec, symmetrize=symmetrize)
    gen = argparse.ArgumentParser(prog="random", add_help=False)
    gen.add_argument("--radius", type=float, required=True)
    gen.add_argument("--envelope", type=str, default=None)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--d", type=int, default=2)
    gen.add_argument("--enstrophy", type=float, default=None)
    try:
        opts = gen.parse_args(tokens[1:])
    except SystemExit as exc:
        raise ParameterError(f"bad generator spec {spec!r}") from exc
    modeset = ModeSet.ball(opts.radius, opts.d)
    rng = np.random.default_rng(np.random.SeedSequence(opts.seed))
    envelope = None
    if opts.envelope is not None:
        amplitude, gamma = _parse_envelope(opts.envelope)
        envelope = lambda n: amplitude / n**gamma
    return random_solenoidal_field(modeset, rng, envelope=envelope,
                                   target_enstrophy=opts.enstrophy)


def _load_force(spec: str | None, dimension: int) -> ForceField:
    if spec is None or spec == "none":
        return ForceField.zero(dimension)
    field = parse_field_spec(spec, symmetrize=True)
    return ForceField(field)


# -- subcommand handlers ---------------------------------------------------------


def _cmd_constants(args, argv, config) -> int:
    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    radius = _opt(args, config, "radius", None)
    kmax = float(_opt(args, config, "kmax", 20.0))
    d = int(args.d)
    if args.table:
        gammas = [float(g) for g in args.gammas.split(",")]
        estimates = [
            estimate_convolution_bound(d, g, kmax, radius).to_dict() for g in gammas
        ]
        _write_json(out_dir / "constants.json", estimates)
        print(f"{'gamma':>8} {'value':>14} {'tail':>12} {'constant':>14}")
        for e in estimates:
            print(f"{e['exponent']:>8.3g} {e['value']:>14.8g} {e['tail_bound']:>12.4g} {e['constant']:>14.8g}")
        constants = estimates
    else:
        estimate = estimate_convolution_bound(d, float(args.gamma), kmax, radius)
        _write_json(out_dir / "constants.json", estimate.to_dict())
        print(json.dumps(estimate.to_dict(), sort_keys=True, indent=2))
        constants = [estimate.to_dict()]
    _write_manifest(out_dir, "constants", argv,
                    {"d": d, "gamma": getattr(args, "gamma", None), "kmax": kmax,
                     "radius": radius, "table": args.table, "gammas": args.gammas},
                    None, constants, started)
    return 0


def _trajectory_rows(traj) -> tuple[list[str], list[list]]:
    modeset = traj.modeset
    header = ["time"]
    for mode in modeset.modes:
        tag = "_".join(str(c) for c in mode)
        for comp in range(modeset.dimension):
            header.append(f"re_{tag}_{comp}")
            header.append(f"im_{tag}_{comp}")
    header.append("enstrophy")
    rows = []
    for t, state, v in zip(traj.times, traj.states, traj.enstrophies):
        row = [float(t)]
        for i in range(len(modeset)):
            for comp in range(modeset.dimension):
                row.append(float(state.coeffs[i, comp].real))
                row.append(float(state.coeffs[i, comp].imag))
        row.append(float(v))
        rows.append(row)
    return header, rows


def _cmd_simulate(args, argv, config) -> int:
    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    nu = float(_opt(args, config, "nu", 1.0))
    h = float(_opt(args, config, "h", 1e-2))
    horizon = float(_opt(args, config, "T", 1.0))
    stride = int(_opt(args, config, "stride", 1))
    scheme = _opt(args, config, "scheme", "rk4-integrating-factor")
    init = parse_field_spec(args.init, symmetrize=args.symmetrize)
    radius = _opt(args, config, "radius", None)
    if radius is not None:
        init = project(init, ModeSet.ball(float(radius), init.dimension))
    force = _load_force(args.force, init.dimension)
    params = PhysicsParams(viscosity=nu, dimension=init.dimension)
    cfg = IntegratorConfig(step=h, horizon=horizon, scheme=scheme, stride=stride)
    traj = integrate(init, force, params, cfg)
    header, rows = _trajectory_rows(traj)
    _write_csv(out_dir / "trajectory.csv", header, rows)
    print(f"wrote {out_dir / 'trajectory.csv'} ({len(rows)} states, "
          f"final enstrophy {traj.enstrophies[-1]:.6g})")
    _write_manifest(out_dir, "simulate", argv,
                    {"init": args.init, "force": args.force, "nu": nu, "radius": radius,
                     "h": h, "T": horizon, "stride": stride, "scheme": scheme,
                     "symmetrize": args.symmetrize},
                    None, [], started)
    return 0


def _cmd_certify(args, argv, config) -> int:
    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = int(_opt(args, config, "samples", 100))
    seed = int(_opt(args, config, "seed", 0))
    backoff = float(_opt(args, config, "margin", 0.1))
    threads = int(_opt(args, config, "threads", _default_threads()))
    doc = RegionDocument.from_json_dict(json.loads(Path(args.region).read_text()))
    doc.validate()
    projection = ModeSet.ball(float(args.proj_radius), doc.region.dimension)
    params = PhysicsParams(viscosity=doc.viscosity, dimension=doc.region.dimension)
    cert = certify_inward(doc.region, projection, doc.force, params, samples, seed,
                          backoff=backoff, threads=threads, document=doc)
    _write_json(out_dir / "certificate.json", cert.to_json_dict())
    print(f"verdict: {cert.verdict} (worst margin {cert.worst_margin:.6g} "
          f"on {cert.worst_class})")
    _write_manifest(out_dir, "certify", argv,
                    {"region": args.region, "proj_radius": float(args.proj_radius),
                     "samples": samples, "seed": seed, "margin": backoff,
                     "threads": threads},
                    seed, [c.to_dict() for c in cert.constants_used], started)
    return 0 if cert.passed else 2


def _cmd_converge(args, argv, config) -> int:
    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    nu = float(_opt(args, config, "nu", 1.0))
    h = float(_opt(args, config, "h", 2e-3))
    horizon = float(_opt(args, config, "T", 1.0))
    ladder = [float(r) for r in args.ladder.split(",")]
    fine_radius = float(args.fine_radius)
    init = parse_field_spec(args.init, symmetrize=args.symmetrize)
    fine = ModeSet.ball(fine_radius, init.dimension)
    init = project(init, fine)
    force = _load_force(args.force, init.dimension)
    params = PhysicsParams(viscosity=nu, dimension=init.dimension)
    if args.growth_rate is not None:
        rate = float(args.growth_rate)
    elif args.amplitude is not None and args.gamma is not None:
        rate = uniform_lognorm_bound(float(args.amplitude), float(args.gamma),
                                     init.dimension, nu)
    else:
        raise ParameterError("converge needs --growth-rate or --amplitude with --gamma")
    cfg = IntegratorConfig(step=h, horizon=horizon, stride=max(1, round(0.05 / h)))
    rows = []
    for radius in ladder:
        coarse = ModeSet.ball(radius, init.dimension)
        report = galerkin_difference_experiment(init, force, params, cfg, coarse, fine, rate)
        rows.append([radius, report.defect,
                     float(np.max(report.differences - report.bounds)),
                     "pass" if report.passed else "fail"])
        print(f"radius {radius:g}: defect {report.defect:.6g} "
              f"({'pass' if report.passed else 'fail'})")
    _write_csv(out_dir / "converge.csv",
               ["coarse_radius", "defect", "max_excess", "verdict"], rows)
    _write_manifest(out_dir, "converge", argv,
                    {"ladder": args.ladder, "fine_radius": fine_radius, "init": args.init,
                     "force": args.force, "nu": nu, "h": h, "T": horizon,
                     "growth_rate": rate},
                    None, [], started)
    return 0


def _cmd_lognorm(args, argv, config) -> int:
    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    nu = float(_opt(args, config, "nu", 1.0))
    state = parse_field_spec(args.init, symmetrize=args.symmetrize)
    params = PhysicsParams(viscosity=nu, dimension=state.dimension)
    coords = RealCoordinates(state.modeset)
    jac = jacobian(state, params, coords)
    descriptor = f"single state, digest {state.digest()[:16]}"
    bounds = [
        LogNormBound(state.dimension, coords.size, "euclidean-eig",
                     lognorm_euclidean(jac), descriptor),
        LogNormBound(state.dimension, coords.size, "gershgorin",
                     lognorm_gershgorin(jac), descriptor),
    ]
    if args.amplitude is not None and args.gamma is not None:
        value = uniform_lognorm_bound(float(args.amplitude), float(args.gamma),
                                      state.dimension, nu,
                                      k_max=float(_opt(args, config, "kmax", 60.0)))
        bounds.append(LogNormBound(state.dimension, coords.size, "uniform-row-bound",
                                   value, f"envelope D={args.amplitude}, gamma={args.gamma}"))
    payload = [b.to_dict() for b in bounds]
    _write_json(out_dir / "lognorm.json", payload)
    print(json.dumps(payload, sort_keys=True, indent=2))
    _write_manifest(out_dir, "lognorm", argv,
                    {"init": args.init, "nu": nu, "amplitude": args.amplitude,
                     "gamma": args.gamma},
                    None, [], started)
    return 0


def _cmd_check_conditions(args, argv, config) -> int:
    from .trapping import check_compactness_conditions

    started = time.time()
    out_dir = Path(_opt(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = check_compactness_conditions(float(args.gamma), float(args.amplitude),
                                          int(args.d))
    _write_json(out_dir / "conditions.json", report.to_dict())
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    _write_manifest(out_dir, "check-conditions", argv,
                    {"d": int(args.d), "gamma": float(args.gamma),
                     "amplitude": float(args.amplitude)},
                    None, [], started)
    return 0


def _cmd_replay(args, argv, config) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    replay_argv = list(manifest["argv"])
    cleaned = []
    skip = False
    for token in replay_argv:
        if skip:
            skip = False
            continue
        if token == "--out":
            skip = True
            continue
        cleaned.append(token)
    cleaned += ["--out", args.out or "."]
    return run(cleaned)


# -- parser ----------------------------------------------------------------------


def _default_threads() -> int:
    env = os.environ.get("GALERKIN_TRAP_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _opt(args, config: dict, key: str, default):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="galerkin-trap",
        description="Trapping-region certification and convergence experiments "
                    "for truncated spectral flow systems.",
    )
    parser.add_argument("--config", type=str, default=None,
                        help="flat key-value JSON file of flag defaults")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("constants", help="estimate the convolution lattice-sum bound")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--kmax", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--table", action="store_true")
    p.add_argument("--gammas", type=str, default="3.5,4.0,4.5,5.0")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_constants)

    p = sub.add_parser("simulate", help="integrate a truncated system and write a CSV")
    p.add_argument("--init", type=str, required=True)
    p.add_argument("--force", type=str, default="none")
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--scheme", type=str, default=None)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("certify", help="sample a region boundary for inwardness")
    p.add_argument("--region", type=str, required=True)
    p.add_argument("--proj-radius", type=float, required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_certify)

    p = sub.add_parser("converge", help="coarse-versus-fine truncation ladder")
    p.add_argument("--ladder", type=str, required=True)
    p.add_argument("--fine-radius", type=float, required=True)
    p.add_argument("--init", type=str, required=True)
    p.add_argument("--force", type=str, default="none")
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--growth-rate", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_converge)

    p = sub.add_parser("lognorm", help="logarithmic-norm bounds at a state")
    p.add_argument("--init", type=str, required=True)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--kmax", type=float, default=None)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_lognorm)

    p = sub.add_parser("check-conditions", help="limit-readiness thresholds of an envelope class")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_check_conditions)

    p = sub.add_parser("replay", help="re-run a manifest into a fresh output directory")
    p.add_argument("manifest", type=str)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(handler=_cmd_replay)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Execute one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    config: dict = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config file: {exc}", file=sys.stderr)
            return 1
    try:
        return args.handler(args, argv, config)
    except GalerkinTrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
