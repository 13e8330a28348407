"""``relqkd`` command line: calc, simulate, sweep, attack."""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

from ..errors import CausalityViolation, DomainError, ValidationError
from ..keymath import (
    GeometryParams,
    SecurityParams,
    critical_qber,
    delta_t_min,
    holevo_bound,
    l_max,
    mu_from_power,
    secret_fraction,
    usd_success_prob,
)
from . import report
from .config import ScenarioConfig, default_config, load_config, parse_quantity
from .scenario import SweepSpec, log_grid, run_attack, run_scenario, run_sweep

EXIT_USAGE = 2
EXIT_AUDIT = 3
EXIT_IO = 4

CALC_QUANTITIES = ("chi", "pusd", "rate", "qcrit", "dtmin", "lmax", "mu", "all")


def _quantity(text: str) -> float:
    try:
        return parse_quantity(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relqkd", description="Relativistic two-pulse WCP QKD calculator and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    calc = sub.add_parser("calc", help="closed-form security and geometry numbers")
    calc.add_argument("quantity", choices=CALC_QUANTITIES)
    calc.add_argument("--mu", type=_quantity, default=0.116)
    calc.add_argument("--phi", type=_quantity, default="0.8pi")
    calc.add_argument("--qber", type=_quantity, default=None)
    calc.add_argument("--dt", type=_quantity, default="20ns", help="pulse separation")
    calc.add_argument("--n", type=_quantity, default=1.0002804, help="refractive index")
    calc.add_argument("--lmin", type=_quantity, default=None, help="distance lower bound (m)")
    calc.add_argument("--tof", type=_quantity, default=None, help="observed time of flight")
    calc.add_argument("--trusted-sync", action="store_true", help="external synchronization is trusted")
    calc.add_argument("--power-dbm", type=_quantity, default=None)
    calc.add_argument("--wavelength", type=_quantity, default="1550e-9")
    calc.add_argument("--pulse-duration", type=_quantity, default="10ns")

    def scenario_flags(p, attack_required=False):
        p.add_argument("--config", help="INI scenario file")
        p.add_argument("--seed", type=_seed)
        p.add_argument("--packets", type=int)
        p.add_argument("--mu", type=_quantity)
        p.add_argument("--mode", choices=("relativistic", "nonrelativistic"))
        p.add_argument("--attack", choices=("honest", "usd_block_resend", "intercept_resend", "sync_shift"))
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override any config key")
        p.add_argument("--out", help="CSV output path; overrides run.output_path (sweep writes to stdout when unset)")

    sim = sub.add_parser("simulate", help="run a scenario; per-packet CSV plus summary")
    scenario_flags(sim)
    sim.add_argument("--summary", help="also write the summary to this path")

    sweep = sub.add_parser("sweep", help="sweep mu; one CSV row per grid point")
    scenario_flags(sweep)
    sweep.add_argument("--grid", help="comma-separated values")
    sweep.add_argument("--min", type=_quantity, default=0.02)
    sweep.add_argument("--max", type=_quantity, default=0.5)
    sweep.add_argument("--points", type=int, default=12)
    sweep.add_argument("--workers", type=int, default=1, help="grid points run concurrently")

    attack = sub.add_parser("attack", help="run an adversary and print an attack report")
    scenario_flags(attack)
    return parser


def _cmd_calc(args) -> list[str]:
    q = args.quantity
    out = []
    sec = SecurityParams(args.mu, args.phi)
    if q in ("chi", "all"):
        out.append(f"chi: {holevo_bound(sec):.6g}")
    if q in ("pusd", "all"):
        out.append(f"P_USD: {usd_success_prob(sec):.6g}")
    if q in ("qcrit", "all"):
        out.append(f"critical_qber: {critical_qber(sec):.6g}")
    if q == "rate" or (q == "all" and args.qber is not None):
        if args.qber is None:
            raise DomainError("calc rate needs --qber")
        out.append(f"secret_fraction: {secret_fraction(sec, args.qber):.6g}")
    if q in ("lmax", "all"):
        out.append(f"L_max: {l_max(args.dt, args.n) / 1e3:.1f} km")
    if q == "dtmin" or (q == "all" and args.lmin is not None and args.tof is not None):
        if args.lmin is None or args.tof is None:
            raise DomainError("calc dtmin needs --lmin and --tof")
        geom = GeometryParams(args.lmin, args.tof, args.dt, args.n)
        out.append(f"delta_T_min: {delta_t_min(geom, args.trusted_sync) * 1e9:.6g} ns")
    if q == "mu" or (q == "all" and args.power_dbm is not None):
        if args.power_dbm is None:
            raise DomainError("calc mu needs --power-dbm")
        out.append(f"mu: {mu_from_power(args.power_dbm, args.wavelength, args.pulse_duration):.6g}")
    return out


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else default_config()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ValidationError(f"bad --set {item!r}; expected SECTION.KEY=VALUE", [key])
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.packets is not None:
        overrides["run.packets"] = str(args.packets)
    if args.mu is not None:
        overrides["security.mu"] = repr(args.mu)
    if args.mode is not None:
        overrides["eve.mode"] = args.mode
    if args.attack is not None:
        overrides["eve.strategy"] = args.attack
    if args.out is not None:
        overrides["run.output_path"] = args.out
    return cfg.with_values(overrides) if overrides else cfg


def _emit(text: str, path: str):
    if path and path != "-":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "calc":
            print("\n".join(_cmd_calc(args)))
            return 0
        cfg = _scenario(args)
        if args.command == "simulate":
            result = run_scenario(cfg)
            summary = report.summary_text(result.summary)
            if cfg.output_path:
                _emit(report.packets_csv(result.packets), cfg.output_path)
            if args.summary:
                _emit(summary, args.summary)
            sys.stdout.write(summary)
            return 0
        if args.command == "sweep":
            grid = (
                tuple(parse_quantity(v) for v in args.grid.split(",") if v.strip())
                if args.grid
                else log_grid(args.min, args.max, args.points)
            )
            rows = run_sweep(SweepSpec("mu", grid, cfg), workers=args.workers)
            _emit(report.sweep_csv(rows), cfg.output_path)
            return 0
        if args.command == "attack":
            if cfg.eve.strategy == "honest":
                parser.error("attack needs a non-honest strategy (--attack NAME)")
            rep = run_attack(cfg)
            print("\n".join(rep.lines()))
            return 0
    except CausalityViolation as exc:
        print(f"causality audit failed: {exc.report}", file=sys.stderr)
        return EXIT_AUDIT
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
