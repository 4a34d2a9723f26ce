"""Command-line entry point: config parsing, subcommands and CSV/JSON emission.

Settings are resolved with precedence ``flags > config file > defaults``. The
output directory is ``--out`` if given, else ``$LADDERFLUX_OUT``, else the
config file's ``out`` key, else the working directory.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bands import BandParams, Branch, band_energy, critical_coupling, minima_count
from .currents import chiral_current, count_vortices, ground_state_observables, link_currents, phase_diagram
from .dynamics import (
    DissipationSpec,
    MeasurementPair,
    NumericalError,
    extract_current,
    fidelity_exact,
    fidelity_strong_coupling,
    generation_plan,
    pair_fit_parameters,
    simulate_measurement,
)
from .eigensolve import diagonalize, fit_mode_expansion, quasimomentum_map
from .floquet import DriveSpec, IntegrationError, interleg_tuning_curve, renormalized_couplings, validate_effective_model
from .model import ConfigError, LadderConfig, Units, build_open_ladder, check_config

OUT_ENV = "LADDERFLUX_OUT"

DEFAULTS = {
    "ladder": {"n_rungs": 20, "g_mhz": 1.0, "k_mhz": 0.5, "phi_over_pi": 0.5, "units": "dimensionless"},
    "drive": {
        "omega1_mhz": 178.0,
        "omega2_mhz": 178.0,
        "delta1_mhz": 1000.0,
        "delta2_mhz": 1100.0,
        "phi0_over_pi": 0.5,
        "phi_over_pi": 0.5,
        "omega_l_mhz": 1900.0,
        "omega_r_mhz": 2000.0,
        "g0_mhz": 3.5,
        "k0_mhz": 33.0,
    },
    "dissipation": {"gamma_mhz": 0.05, "dephasing_mhz": 0.1},
    "seed": 0,
    "out": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- output -------------------------------------------------------------------


def _format(cell) -> str:
    if isinstance(cell, (bool, np.bool_)):
        return "1" if cell else "0"
    if isinstance(cell, (int, np.integer)):
        return str(int(cell))
    if isinstance(cell, (float, np.floating)):
        x = float(cell)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(cell)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_csv(table, path) -> None:
    """Write ``table = (header, rows)`` as CSV with round-trip floats and LF endings."""
    header, rows = table
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        lines.append(",".join(_format(c) for c in row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def emit_json(data, path) -> None:
    _atomic_write(Path(path), json.dumps(data, indent=2, sort_keys=True) + "\n")


# --- configuration ------------------------------------------------------------


def load_config_file(path) -> dict:
    """Read a JSON or YAML document (JSON is parsed as YAML)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror or exc}"]) from exc
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"cannot parse config {path}: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([f"config {path} must be a mapping"])
    return doc


def merge_config(doc: dict) -> dict:
    """Overlay a config document on the defaults; ladder keys may sit at top level."""
    cfg = copy.deepcopy(DEFAULTS)
    errors = []
    for key, value in doc.items():
        if key in cfg["ladder"]:
            cfg["ladder"][key] = value
        elif key in ("ladder", "drive", "dissipation"):
            if not isinstance(value, dict):
                errors.append(f"section {key!r} must be a mapping")
                continue
            for sub, v in value.items():
                if sub not in cfg[key]:
                    errors.append(f"unknown key {key}.{sub}")
                else:
                    cfg[key][sub] = v
        elif key in ("seed", "out"):
            cfg[key] = value
        else:
            errors.append(f"unknown key {key}")
    if errors:
        raise ConfigError(errors)
    return cfg


def ladder_config(section: dict) -> LadderConfig:
    try:
        cfg = LadderConfig(
            n_rungs=section["n_rungs"],
            g=float(section["g_mhz"]),
            k=float(section["k_mhz"]),
            phi=math.pi * float(section["phi_over_pi"]),
            units=Units(section["units"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"invalid ladder section: {exc}"]) from exc
    check_config(cfg)
    return cfg


def drive_spec(section: dict) -> DriveSpec:
    try:
        spec = DriveSpec(
            omega1=float(section["omega1_mhz"]),
            omega2=float(section["omega2_mhz"]),
            delta1=float(section["delta1_mhz"]),
            delta2=float(section["delta2_mhz"]),
            phi0=math.pi * float(section["phi0_over_pi"]),
            phi=math.pi * float(section["phi_over_pi"]),
            omega_l=float(section["omega_l_mhz"]),
            omega_r=float(section["omega_r_mhz"]),
            g0=float(section["g0_mhz"]),
            k0=float(section["k0_mhz"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"invalid drive section: {exc}"]) from exc
    errors = []
    if spec.delta1 == 0 or spec.delta2 == 0:
        errors.append("tone detunings must be nonzero")
    if spec.delta == 0:
        errors.append("delta2_mhz must differ from delta1_mhz")
    if spec.g0 <= 0:
        errors.append("g0_mhz must be > 0")
    if errors:
        raise ConfigError(errors)
    return spec


def dissipation_rates(section: dict, n_rungs: int) -> DissipationSpec:
    try:
        gamma, dephasing = float(section["gamma_mhz"]), float(section["dephasing_mhz"])
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"invalid dissipation section: {exc}"]) from exc
    if gamma < 0 or dephasing < 0:
        raise ConfigError(["dissipation rates must be ≥ 0"])
    return DissipationSpec.homogeneous(n_rungs, gamma, dephasing)


# --- subcommands --------------------------------------------------------------


def _ladder(ctx):
    return ladder_config(ctx.config["ladder"])


def cmd_bands(ctx, args):
    cfg = _ladder(ctx)
    p = BandParams.from_config(cfg)
    q = -math.pi + 2 * math.pi * np.arange(args.q_steps) / (args.q_steps - 1)
    lo, hi = band_energy(q, Branch.MINUS, p), band_energy(q, Branch.PLUS, p)
    ctx.write_csv("bands.csv", ["q", "omega_minus", "omega_plus"], zip(q, lo, hi))
    ctx.report["minima"] = minima_count(p)
    if abs(cfg.phi) < math.pi:
        ctx.report["k_critical"] = critical_coupling(cfg.g, cfg.phi)


def cmd_spectrum(ctx, args):
    cfg = _ladder(ctx)
    sys_ = diagonalize(build_open_ladder(cfg))
    if not 1 <= args.level <= cfg.dim:
        raise ConfigError([f"level must lie in 1..{cfg.dim}"])
    ctx.write_csv("spectrum.csv", ["n", "mu"], zip(range(1, cfg.dim + 1), sys_.energies))
    chi = sys_.state(args.level).reshape(cfg.n_rungs, 2)
    rows = [
        (leg, l, chi[l - 1, d].real, chi[l - 1, d].imag, abs(chi[l - 1, d]))
        for d, leg in enumerate("LR")
        for l in range(1, cfg.n_rungs + 1)
    ]
    ctx.write_csv("wavefunction.csv", ["leg", "l", "re", "im", "abs"], rows)
    p = BandParams.from_config(cfg)
    exp = fit_mode_expansion(sys_, args.level, p)
    qmap = quasimomentum_map(exp, sys_, p)
    ctx.write_csv(
        "quasimomentum.csv",
        ["leg", "q", "intensity"],
        ((leg.value, q, w) for leg, q, w in zip(qmap.legs, qmap.q, qmap.intensity)),
    )
    ctx.report["fit_residual"] = exp.residual


def cmd_currents(ctx, args):
    cfg = _ladder(ctx)
    sys_ = diagonalize(build_open_ladder(cfg))
    if not 1 <= args.level <= cfg.dim:
        raise ConfigError([f"level must lie in 1..{cfg.dim}"])
    field = link_currents(sys_.state(args.level), cfg)
    rows = [("leg_link", leg, l, field.leg_links[d, l - 1]) for d, leg in enumerate("LR") for l in range(1, cfg.n_rungs)]
    rows += [("rung", "LR", l, field.rungs[l - 1]) for l in range(1, cfg.n_rungs + 1)]
    ctx.write_csv("currents.csv", ["kind", "leg", "l", "value_mhz"], rows)
    n_v, d_v = count_vortices(field)
    ctx.report.update(j_chiral=chiral_current(field) if cfg.n_rungs > 1 else float("nan"), n_vortices=n_v, vortex_density=d_v)


def cmd_phase_diagram(ctx, args):
    cfg = _ladder(ctx)
    if args.phi_steps < 1 or args.k_steps < 1 or args.k_max <= 0:
        raise ConfigError(["phase-diagram needs positive step counts and k-max"])
    phi_grid = math.pi * np.linspace(args.phi_min, args.phi_max, args.phi_steps)
    if np.any(np.abs(phi_grid) > math.pi):
        raise ConfigError(["phi range must lie within [-1, 1] (units of pi)"])
    # K = 0 decouples the legs; start one step above it
    k_grid = cfg.g * args.k_max * np.arange(1, args.k_steps + 1) / args.k_steps
    diagram = phase_diagram(cfg, phi_grid, k_grid, workers=args.workers)
    rows = ((phi / math.pi, k / cfg.g, jc, dv, int(deg)) for phi, k, jc, dv, deg in diagram.rows())
    ctx.write_csv("phase_diagram.csv", ["phi_over_pi", "k_over_g", "j_chiral", "vortex_density", "degenerate_flag"], rows)


def cmd_vortex_density(ctx, args):
    cfg = _ladder(ctx)
    if args.k_steps < 1 or args.k_max <= 0:
        raise ConfigError(["vortex-density needs positive k-steps and k-max"])
    k_grid = cfg.g * args.k_max * np.arange(1, args.k_steps + 1) / args.k_steps
    rows = []
    for k in k_grid:
        jc, dv, deg = ground_state_observables(cfg.with_(k=float(k)))
        rows.append((k / cfg.g, jc, dv, int(deg)))
    ctx.write_csv("vortex_density.csv", ["k_over_g", "j_chiral", "vortex_density", "degenerate_flag"], rows)


def cmd_drive(ctx, args):
    spec = drive_spec(ctx.config["drive"])
    g, k, phi = renormalized_couplings(spec)
    ctx.report.update(
        stark_shift_mhz=spec.stark_shift,
        modulation_mhz=spec.modulation_strength,
        g_mhz=g,
        k_mhz=k,
        phi_over_pi=phi / math.pi,
        warnings=spec.check(),
    )
    phi0 = math.pi * np.linspace(0.0, 1.0, args.phi0_steps)
    curve = interleg_tuning_curve(spec, g, phi0)
    ctx.write_csv("tuning_curve.csv", ["phi0_over_pi", "k_over_g"], ((a / math.pi, b) for a, b in curve))


def cmd_floquet_validate(ctx, args):
    spec = drive_spec(ctx.config["drive"])
    if not 1 <= args.n_rungs <= 3:
        raise ConfigError(["floquet-validate supports 1..3 rungs"])
    report = validate_effective_model(spec, n_rungs=args.n_rungs, steps_per_period=args.steps_per_period)
    sites = [f"{leg}{l}" for l in range(1, args.n_rungs + 1) for leg in "LR"]
    header = ["t_us"] + [f"full_{s}" for s in sites] + [f"effective_{s}" for s in sites]
    rows = (
        (t, *full, *eff) for t, full, eff in zip(report.times, report.full_populations, report.effective_populations)
    )
    ctx.write_csv("floquet.csv", header, rows)
    ctx.report.update(max_deviation=report.max_deviation, horizon_us=report.horizon, g_mhz=report.g, k_mhz=report.k)


def cmd_generate(ctx, args):
    cfg = _ladder(ctx)
    rates = dissipation_rates(ctx.config["dissipation"], cfg.n_rungs)
    sys_ = diagonalize(build_open_ladder(cfg))
    plan = generation_plan(sys_, args.c1_mhz)
    gamma1, dephasing1 = rates.collective(sys_.state(1))
    t = plan.t_pi
    ctx.report.update(
        t_pi_us=t,
        fidelity_exact=float(fidelity_exact(t, args.c1_mhz, gamma1, dephasing1)),
        fidelity_approx=float(fidelity_strong_coupling(t, args.c1_mhz, gamma1, dephasing1)),
        mu1=float(sys_.energies[0]),
    )
    rows = [(leg, l, plan.drive[2 * (l - 1) + d]) for d, leg in enumerate("LR") for l in range(1, cfg.n_rungs + 1)]
    ctx.write_csv("drive_profile.csv", ["leg", "l", "b_mhz"], ((a, b, c.real) for a, b, c in rows))


def cmd_measure(ctx, args):
    cfg = _ladder(ctx)
    rates = dissipation_rates(ctx.config["dissipation"], cfg.n_rungs)
    if args.pair == "intraleg":
        if not 1 <= args.rung < cfg.n_rungs:
            raise ConfigError([f"intraleg pair needs rung in 1..{cfg.n_rungs - 1}"])
        pair = MeasurementPair.intraleg(args.rung, args.leg)
    else:
        if not 1 <= args.rung <= cfg.n_rungs:
            raise ConfigError([f"rung pair needs rung in 1..{cfg.n_rungs}"])
        pair = MeasurementPair.rung_pair(args.rung)
    sys_ = diagonalize(build_open_ladder(cfg))
    coupling, decay = pair_fit_parameters(pair, cfg, rates)
    if coupling <= 0:
        raise ConfigError(["measured pair has zero coupling"])
    horizon = args.periods * math.pi / coupling
    trace = simulate_measurement(
        pair, sys_.state(1), cfg, rates, horizon, samples=args.samples, noise_sigma=args.noise_sigma, seed=ctx.seed
    )
    ctx.write_csv("trace.csv", ["t_us", "value"], zip(trace.times, trace.values))
    fit = extract_current(trace, coupling, decay, window_periods=min(args.window_periods, args.periods))
    ctx.report.update(j_estimate_mhz=fit.j_estimate, residual=fit.residual, window_periods=fit.window_periods)


# --- dispatch -----------------------------------------------------------------


class _Context:
    def __init__(self, command: str, config: dict, out: Path, seed: int):
        self.command, self.config, self.out, self.seed = command, config, out, seed
        self.outputs: list[str] = []
        self.report: dict = {}
        self._pending: list[tuple[str, tuple]] = []

    def write_csv(self, name: str, header, rows) -> None:
        # buffered so a failure halfway through a command leaves nothing behind
        self._pending.append((name, (list(header), list(rows))))

    def commit(self) -> None:
        for name, table in self._pending:
            emit_csv(table, self.out / name)
            self.outputs.append(name)
        if self.report:
            name = f"{self.command.replace('-', '_')}_report.json"
            emit_json(_jsonable(self.report), self.out / name)
            self.outputs.append(name)
        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": __version__,
            "outputs": self.outputs,
        }
        emit_json(_jsonable(manifest), self.out / "manifest.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else _format(x)
    return obj


def _add_ladder_flags(p):
    p.add_argument("--n-rungs", type=int, help="number of rungs N")
    p.add_argument("--g", type=float, dest="g_mhz", help="intraleg hopping g")
    p.add_argument("--k", type=float, dest="k_mhz", help="interleg hopping K")
    p.add_argument("--phi-over-pi", type=float, help="flux per plaquette in units of pi")
    p.add_argument("--units", choices=[u.value for u in Units])


def _add_dissipation_flags(p):
    p.add_argument("--gamma-mhz", type=float, help="site relaxation rate")
    p.add_argument("--dephasing-mhz", type=float, help="site pure-dephasing rate")


def _add_drive_flags(p):
    for key in DEFAULTS["drive"]:
        p.add_argument("--" + key.replace("_", "-"), type=float, dest=f"drive_{key}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ladderflux", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON or YAML config document")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
    common.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bands", parents=[common], help="infinite-ladder dispersion")
    _add_ladder_flags(p)
    p.add_argument("--q-steps", type=int, default=513)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("spectrum", parents=[common], help="finite-ladder spectrum and mode fit")
    _add_ladder_flags(p)
    p.add_argument("--level", type=int, default=1)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("currents", parents=[common], help="link currents of one eigenstate")
    _add_ladder_flags(p)
    p.add_argument("--level", type=int, default=1)
    p.set_defaults(func=cmd_currents)

    p = sub.add_parser("phase-diagram", parents=[common], help="chiral current and vortex density over (phi, K)")
    _add_ladder_flags(p)
    p.add_argument("--phi-steps", type=int, default=64)
    p.add_argument("--k-steps", type=int, default=64)
    p.add_argument("--k-max", type=float, default=3.0, help="largest K in units of g")
    p.add_argument("--phi-min", type=float, default=0.0, help="in units of pi")
    p.add_argument("--phi-max", type=float, default=1.0, help="in units of pi")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("vortex-density", parents=[common], help="vortex density against K at fixed phi")
    _add_ladder_flags(p)
    p.add_argument("--k-steps", type=int, default=128)
    p.add_argument("--k-max", type=float, default=3.0, help="largest K in units of g")
    p.set_defaults(func=cmd_vortex_density)

    p = sub.add_parser("drive", parents=[common], help="Stark shift, modulation and renormalized couplings")
    _add_drive_flags(p)
    p.add_argument("--phi0-steps", type=int, default=101)
    p.set_defaults(func=cmd_drive)

    p = sub.add_parser("floquet-validate", parents=[common], help="modulated ladder against the effective model")
    _add_drive_flags(p)
    p.add_argument("--n-rungs", type=int, default=2, dest="fv_n_rungs")
    p.add_argument("--steps-per-period", type=int, default=200)
    p.set_defaults(func=cmd_floquet_validate)

    p = sub.add_parser("generate", parents=[common], help="pi-pulse preparation of the ground level")
    _add_ladder_flags(p)
    _add_dissipation_flags(p)
    p.add_argument("--c1-mhz", type=float, default=1.0, help="collective Rabi frequency C1")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("measure", parents=[common], help="Rabi-trace current measurement on a site pair")
    _add_ladder_flags(p)
    _add_dissipation_flags(p)
    p.add_argument("--pair", choices=["intraleg", "rung"], default="intraleg")
    p.add_argument("--rung", type=int, default=10)
    p.add_argument("--leg", choices=["L", "R"], default="L")
    p.add_argument("--periods", type=float, default=3.0)
    p.add_argument("--window-periods", type=float, default=3.0)
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("--noise-sigma", type=float)
    p.set_defaults(func=cmd_measure)
    return parser


def resolve(args, env=None) -> tuple[dict, Path]:
    """Merge defaults, config file and flags; return the snapshot and output dir."""
    env = os.environ if env is None else env
    config = merge_config(load_config_file(args.config) if args.config else {})
    flags = vars(args)
    for key in config["ladder"]:
        if flags.get(key) is not None:
            config["ladder"][key] = flags[key]
    for key in config["drive"]:
        if flags.get(f"drive_{key}") is not None:
            config["drive"][key] = flags[f"drive_{key}"]
    for key in config["dissipation"]:
        if flags.get(key) is not None:
            config["dissipation"][key] = flags[key]
    if args.seed is not None:
        config["seed"] = args.seed
    if not isinstance(config["seed"], int) or isinstance(config["seed"], bool):
        raise ConfigError(["seed must be an integer"])
    out = args.out or env.get(OUT_ENV) or config.pop("out", None) or "."
    config.pop("out", None)
    if hasattr(args, "fv_n_rungs"):
        args.n_rungs = args.fv_n_rungs
    return config, Path(out)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        config, out = resolve(args)
        # validate every section a command relies on before computing anything
        if args.func in (cmd_drive, cmd_floquet_validate):
            drive_spec(config["drive"])
        else:
            ladder_config(config["ladder"])
        ctx = _Context(args.command, config, out, config["seed"])
        args.func(ctx, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, IntegrationError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    try:
        ctx.commit()
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 1
    for key, value in ctx.report.items():
        print(f"{key} = {_format(value) if not isinstance(value, list) else value}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
