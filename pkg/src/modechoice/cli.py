"""Command-line front end: prepare, fuse, estimate, effects, report, simulate-fixture.

Exit codes: 0 success, 1 usage or input error, 2 estimation did not converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import choice_data as cd
from .effects import marginal_effects, max_row_sum, sign_shares
from .estimate import EstimationOptions, EstimationResult, maximize, stepwise_retain
from .likelihood import ModelSpecification, SpecificationError
from .report import render_csv, render_table
from .simulate import FIXTURES, PIPELINE_TRUTH, pipeline_spec, simulate_observations, simulate_raw_trips, write_trips_csv
from .weather import (DEFAULT_MAX_GAP_MINUTES, WeatherIndex, fuse, match_endpoints, read_weather_csv,
                      write_weather_csv)

log = logging.getLogger("modechoice")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    trips: str | None = None
    weather: str | None = None
    observations: str | None = None
    spec: str | None = None
    result: str | None = None
    out: str | None = None
    max_gap_minutes: float = DEFAULT_MAX_GAP_MINUTES
    options: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        doc = _read_json(path, "config")
        if not isinstance(doc, dict):
            raise InputError(f"{path}: config must be a JSON object")
        unknown = sorted(set(doc) - set(cls.__dataclass_fields__))
        if unknown:
            raise InputError(f"{path}: unknown config key {unknown[0]!r}")
        return cls(**doc)


def _read_json(path, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _require(value, flag: str) -> str:
    if not value:
        raise InputError(f"missing required input {flag}")
    if flag not in ("--out",) and not Path(value).exists():
        raise InputError(f"{flag}: file not found: {value}")
    return value


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for key in ("trips", "weather", "observations", "spec", "result", "out"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "max_gap_minutes", None) is not None:
        cfg.max_gap_minutes = args.max_gap_minutes
    return cfg


def _outdir(path) -> Path:
    out = Path(_require(path, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _load_spec(path) -> ModelSpecification:
    try:
        return ModelSpecification.from_dict(_read_json(path, "spec"))
    except SpecificationError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_observations(path) -> list[cd.ChoiceObservation]:
    try:
        return cd.read_observations_csv(_require(path, "--observations"))
    except cd.RecordError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_weather_index(path) -> WeatherIndex:
    try:
        records = read_weather_csv(_require(path, "--weather"))
    except cd.RecordError as exc:
        raise InputError(f"{path}: {exc}") from None
    if not records:
        raise InputError(f"{path}: weather file has no records")
    return WeatherIndex(records)


def _options(cfg: RunConfig, args) -> EstimationOptions:
    opts = dict(cfg.options)
    for flag, key in (("draws", "n_draws"), ("skip", "skip"), ("max_iterations", "max_iterations"),
                      ("gradient_tolerance", "gradient_tolerance"), ("hessian", "hessian_method"),
                      ("workers", "workers")):
        v = getattr(args, flag, None)
        if v is not None:
            opts[key] = v
    if getattr(args, "warm_start", False):
        opts["warm_start"] = True
    if getattr(args, "per_trip_draws", False):
        opts["per_trip_draws"] = True
    try:
        return EstimationOptions.from_dict(opts)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid estimation options: {exc}") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    cfg = _config(args)
    trips_path = _require(cfg.trips, "--trips")
    try:
        records = cd.read_trips_csv(trips_path, passthrough=not args.no_passthrough)
    except cd.RecordError as exc:
        raise InputError(f"{trips_path}: {exc}") from None
    index = _load_weather_index(cfg.weather) if cfg.weather else None

    row_of = {id(r): i for i, r in enumerate(records, start=1)}
    sample = cd.filter_tld_adults(records)
    observations = []
    for rec in sample:
        try:
            observations.append(cd.recode(rec))
        except ValueError as exc:
            raise InputError(f"{trips_path}: row {row_of[id(rec)]}: {exc}") from None
    if index is not None:
        observations = fuse(observations, index, cfg.max_gap_minutes)
    if not records:
        log.warning("%s: no trip rows found; writing empty output", trips_path)

    summary = {
        "schema_version": "modechoice.prepare/1",
        "n_input": len(records),
        "n_dropped_filter": len(records) - len(sample),
        "n_retained": len(observations),
        "n_incomplete": sum(o.incomplete for o in observations),
        "chosen": {a.label: sum(o.chosen == a for o in observations) for a in cd.ALTERNATIVES},
        "weather_fused": index is not None,
    }
    out = _outdir(cfg.out)
    cd.write_observations_csv(out / "observations.csv", observations)
    _write(out / "prepare_summary.json", _dump_json(summary))
    print(f"read {summary['n_input']} trips; retained {summary['n_retained']} "
          f"({summary['n_dropped_filter']} filtered, {summary['n_incomplete']} incomplete)")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _config(args)
    observations = _load_observations(cfg.observations)
    index = _load_weather_index(cfg.weather)
    try:
        fused = fuse(observations, index, cfg.max_gap_minutes)
        matches = match_endpoints(observations, index, cfg.max_gap_minutes)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _outdir(cfg.out)
    cd.write_observations_csv(out / "observations.csv", fused)
    lines = ["obs_id,endpoint,station_id,time_gap_minutes,weather_missing"]
    for obs, pair in zip(observations, matches):
        for m in pair:
            lines.append(f"{obs.obs_id},{m.endpoint},{m.matched_station},{m.time_gap!r},{int(m.missing)}")
    _write(out / "weather_matches.csv", "\n".join(lines) + "\n")
    n_missing = sum(m.missing for pair in matches for m in pair)
    print(f"fused weather onto {len(fused)} trips; {n_missing} endpoints without weather")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config(args)
    spec = _load_spec(_require(cfg.spec, "--spec"))
    observations = _load_observations(cfg.observations)
    options = _options(cfg, args)
    if not observations:
        raise InputError("no observations to estimate")
    missing = [c for c in spec.covariates if not any(c in o.covariates for o in observations)]
    if missing:
        raise InputError(f"covariate {missing[0]!r} does not appear in the observations")
    out = _outdir(cfg.out)
    try:
        if args.stepwise:
            spec, result, history = stepwise_retain(spec, observations, options)
            _write(out / "stepwise.json", _dump_json(
                {"steps": [asdict(h) for h in history], "final_spec": spec.to_dict()}))
        else:
            result = maximize(spec, observations, options)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write(out / "result.json", _dump_json(result.to_dict()))
    text = render_table(result)
    _write(out / "report.txt", text)
    _write(out / "report.csv", render_csv(result))
    print(text, end="")
    if not result.converged:
        log.error("estimation did not converge: %s", result.message)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load_result(path) -> EstimationResult:
    try:
        return EstimationResult.from_dict(_read_json(_require(path, "--result"), "result"))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_effects(args) -> int:
    cfg = _config(args)
    result = _load_result(cfg.result)
    observations = _load_observations(cfg.observations)
    try:
        table = marginal_effects(result, None, observations, terms=args.terms or None)
    except (KeyError, ValueError) as exc:
        raise InputError(str(exc).strip("'\"")) from None
    out = _outdir(cfg.out)
    _write(out / "effects.csv", table.to_csv())
    _write(out / "effects.txt", table.render())
    shares = {k: round(v, 6) for k, v in sign_shares(result).items()}
    _write(out / "sign_shares.json", _dump_json(shares))
    print(table.render(), end="")
    for name, share in shares.items():
        print(f"{name}: {100 * share:.2f}% of the population has a negative coefficient")
    log.info("largest |row sum| %.3e", max_row_sum(table))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    result = _load_result(cfg.result)
    text = render_table(result)
    if cfg.out:
        out = _outdir(cfg.out)
        _write(out / "report.txt", text)
        _write(out / "report.csv", render_csv(result))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _outdir(args.out)
    if args.fixture == "pipeline":
        trips, weather = simulate_raw_trips(args.n or 400, seed=args.seed)
        write_trips_csv(out / "trips.csv", trips)
        write_weather_csv(out / "weather.csv", weather)
        pipeline_spec().dump(out / "spec.json")
        truth = dict(zip(pipeline_spec().param_names, PIPELINE_TRUTH.tolist()))
        print(f"wrote {len(trips)} trips and {len(weather)} weather records to {out}")
    else:
        fx = FIXTURES[args.fixture]()
        obs = simulate_observations(fx, args.n or 5000, seed=args.seed)
        cd.write_observations_csv(out / "observations.csv", obs)
        fx.spec.dump(out / "spec.json")
        truth = dict(zip(fx.spec.param_names, np.asarray(fx.truth).tolist()))
        print(f"wrote {len(obs)} observations to {out}")
    _write(out / "truth.json", _dump_json({"seed": args.seed, "fixture": args.fixture, "params": truth}))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="modechoice", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *flags):
        sp.add_argument("--config", help="JSON run configuration; flags override it")
        sp.add_argument("--out", help="output directory")
        for f in flags:
            sp.add_argument(f)

    sp = sub.add_parser("prepare", help="filter and recode a raw trip table")
    common(sp, "--trips", "--weather")
    sp.add_argument("--max-gap-minutes", type=float)
    sp.add_argument("--no-passthrough", action="store_true", help="ignore unknown trip columns")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("fuse", help="attach station weather to recoded observations")
    common(sp, "--observations", "--weather")
    sp.add_argument("--max-gap-minutes", type=float)
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("estimate", help="fit a model by maximum simulated likelihood")
    common(sp, "--observations", "--spec")
    sp.add_argument("--draws", type=int, help="Halton draws per individual (default 200)")
    sp.add_argument("--skip", type=int, help="initial Halton points discarded (default 100)")
    sp.add_argument("--max-iterations", type=int)
    sp.add_argument("--gradient-tolerance", type=float)
    sp.add_argument("--hessian", choices=["numerical", "outer-product"])
    sp.add_argument("--warm-start", action="store_true", help="seed random means from a fixed-coefficient fit")
    sp.add_argument("--per-trip-draws", action="store_true", help="independent draws for every trip")
    sp.add_argument("--stepwise", action="store_true", help="drop terms insignificant at the 95%% level")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("effects", help="average marginal effects of a fitted model")
    common(sp, "--observations", "--result")
    sp.add_argument("--terms", nargs="*", help="restrict to these term names")
    sp.set_defaults(func=cmd_effects)

    sp = sub.add_parser("report", help="render a result JSON as text and CSV")
    common(sp, "--result")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("simulate-fixture", help="write seeded synthetic data with known parameters")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--fixture", choices=[*FIXTURES, "pipeline"], default="mnl")
    sp.add_argument("--n", type=int, help="observations (or persons for the pipeline fixture)")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"modechoice {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
