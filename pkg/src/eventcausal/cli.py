"""Command-line front end.

Subcommands: simulate, estimate, montecarlo, biasplot, ingest-ff. Options
may come from a JSON config (``--config``); flags given on the command line
override it. Every output that involves randomness records its seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import montecarlo as mc
from .dgp import FileFactors, SimDesign, SyntheticFatTail, generate, load_factor_history
from .effects import aggregate_event_time, geometric_att
from .errors import EventStudyError, InvalidConfig
from .estimators import EstimatorSpec, estimate
from .inference import bootstrap_se_gsynth, placebo_se, ttest_event_time
from .panel import (
    CohortWeights,
    emit_events_csv,
    emit_factors_csv,
    emit_panel_csv,
    load_events_csv,
    load_factors_csv,
    load_ff_daily,
    load_panel_csv,
    to_excess,
)

FF_ENV = "EVENTCAUSAL_FF_PATH"
FORMATS = ("csv", "json", "table")
INFERENCE = ("none", "ttest", "placebo", "bootstrap")


def _strict(cls, data, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise InvalidConfig(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidConfig(f"unknown keys in {section!r}: {unknown}")
    return cls(**data)


@dataclass
class EstimateSection:
    panel: str | None = None
    factors: str | None = None
    events: str | None = None
    estimators: list = field(default_factory=lambda: ["diff_means"])
    horizon: int = 0
    inference: str = "none"
    pre_window: list | None = None
    anticipation: int = 0
    excess: bool = False
    n_reps: int = 100
    n_samples: int = 1000


@dataclass
class MonteCarloSection:
    design: dict = field(default_factory=dict)
    panels: list = field(default_factory=lambda: ["A", "B", "C", "D"])
    estimators: list | None = None
    n_reps: int = 50
    seed: int = 0
    threads: int = 1
    inference: str = "ttest"
    scatter_estimator: str = "factor:Mkt-RF"
    scatter_panel: str = "A"
    omitted: str = "SMB"
    factor_file: str | None = None
    synthetic_fallback: bool = True


@dataclass
class OutputSection:
    directory: str = "."
    formats: list = field(default_factory=lambda: list(FORMATS))


@dataclass
class RunConfig:
    simulate: dict = field(default_factory=dict)
    estimate: EstimateSection = field(default_factory=EstimateSection)
    montecarlo: MonteCarloSection = field(default_factory=MonteCarloSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a JSON object")
        unknown = sorted(set(data) - {"simulate", "estimate", "montecarlo", "output"})
        if unknown:
            raise InvalidConfig(f"unknown config sections: {unknown}")
        sim = data.get("simulate") or {}
        SimDesign.from_dict(sim)  # validate eagerly
        return cls(
            simulate=dict(sim),
            estimate=_strict(EstimateSection, data.get("estimate"), "estimate"),
            montecarlo=_strict(MonteCarloSection, data.get("montecarlo"), "montecarlo"),
            output=_strict(OutputSection, data.get("output"), "output"),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise InvalidConfig(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{p}: {exc}") from None
        return cls.from_dict(data)


def _out_dir(args, cfg: RunConfig) -> Path:
    d = Path(args.out if args.out is not None else cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _formats(cfg: RunConfig) -> set:
    bad = sorted(set(cfg.output.formats) - set(FORMATS))
    if bad:
        raise InvalidConfig(f"unknown output formats {bad}; expected a subset of {FORMATS}")
    return set(cfg.output.formats)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig) -> int:
    data = dict(cfg.simulate)
    if args.seed is not None:
        data["seed"] = args.seed
    for key in ("n_firms", "n_pre", "n_post", "noise_sd"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    design = SimDesign.from_dict(data)
    panel, factors, schedule, truth = generate(design)
    out = _out_dir(args, cfg)
    emit_panel_csv(panel, out / "panel.csv", seed=design.seed)
    emit_factors_csv(factors, out / "factors.csv", seed=design.seed)
    emit_events_csv(schedule, out / "events.csv", seed=design.seed)
    doc = {"seed": design.seed, "design": design.to_dict(), **truth.to_dict()}
    _write(out / "truth.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"simulated {panel.n_securities} x {panel.n_periods} panel (seed {design.seed}) into {out}")
    return 0


def _intervals(method, panel, schedule, spec, effects, horizon, factors, sec: EstimateSection, seed):
    if method == "none":
        return {}
    if method == "ttest":
        ivs = ttest_event_time(panel, schedule, effects, spec, horizon)
    elif method == "placebo":
        ivs = placebo_se(panel, schedule, spec, sec.n_reps, seed, horizon, factors)
    elif method == "bootstrap":
        if spec.kind != "gsynth":
            raise InvalidConfig("bootstrap inference is only defined for gsynth")
        ivs = bootstrap_se_gsynth(panel, schedule, spec, sec.n_samples, seed, horizon)
    else:
        raise InvalidConfig(f"unknown inference method {method!r}; expected one of {INFERENCE}")
    return {("event_time_att", k): iv for k, iv in ivs.items()}


def cmd_estimate(args, cfg: RunConfig) -> int:
    sec = dataclasses.replace(cfg.estimate)
    for key in ("panel", "factors", "events", "horizon", "inference", "anticipation"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(sec, key, v)
    if args.estimators is not None:
        sec.estimators = args.estimators.split(";") if ";" in args.estimators else [args.estimators]
    if args.pre_window is not None:
        sec.pre_window = [int(x) for x in args.pre_window.split(",")]
    if args.excess:
        sec.excess = True
    if sec.panel is None or sec.events is None:
        raise InvalidConfig("estimate needs --panel and --events")
    seed = 0 if args.seed is None else args.seed

    panel = load_panel_csv(sec.panel)
    schedule = load_events_csv(sec.events, sec.anticipation)
    factors = None
    if sec.factors is not None:
        factors = load_factors_csv(sec.factors)
        if not sec.excess:
            panel = to_excess(panel, factors)
    window = tuple(sec.pre_window) if sec.pre_window is not None else None
    specs = [EstimatorSpec.parse(code, pre_window=window) for code in sec.estimators]
    weights = CohortWeights.from_schedule(schedule)

    series_list = []
    for spec in specs:
        effects = estimate(panel, schedule, spec, factors)
        series = aggregate_event_time(effects, weights, sec.horizon)
        series.intervals = _intervals(sec.inference, panel, schedule, spec, effects, sec.horizon, factors, sec, seed)
        cfs = {ce.cohort: ce for ce in effects}
        series.geometric_att = {h: geometric_att(panel, schedule, cfs, weights, h) for h in range(sec.horizon + 1)}
        series_list.append(series)

    out = _out_dir(args, cfg)
    lines = [f"# seed: {seed}", "estimator," + series_list[0].to_csv().splitlines()[0]]
    for s in series_list:
        lines += [f"{s.estimator},{row}" for row in s.to_csv(header=False).splitlines()]
    csv_text = "\n".join(lines) + "\n"
    json_text = json.dumps({"seed": seed, "inference": sec.inference, "series": [s.to_dict() for s in series_list]},
                           indent=2, sort_keys=True) + "\n"
    formats = _formats(cfg)
    if "csv" in formats:
        _write(out / "effects.csv", csv_text)
    if "json" in formats:
        _write(out / "effects.json", json_text)
    fmt = args.format or "csv"
    sys.stdout.write(json_text if fmt == "json" else csv_text)
    return 0


def resolve_factor_source(file_path: str | None, fallback: bool):
    """Factor source for simulations: explicit file, then the env var, then synthetic."""
    path = file_path or os.environ.get(FF_ENV) or None
    if path is not None:
        if Path(path).exists():
            return FileFactors(str(path)), load_factor_history(path)
        if not fallback:
            raise InvalidConfig(f"factor history {path} not found and synthetic fallback is disabled")
        print(f"warning: factor history {path} not found; using synthetic factors", file=sys.stderr)
        return SyntheticFatTail(), None
    if not fallback:
        raise InvalidConfig(f"no factor history given (--factor-file or ${FF_ENV}) and synthetic fallback is disabled")
    return SyntheticFatTail(), None


def _mc_section(args, cfg: RunConfig) -> MonteCarloSection:
    sec = dataclasses.replace(cfg.montecarlo)
    if args.seed is not None:
        sec.seed = args.seed
    if args.reps is not None:
        sec.n_reps = args.reps
    if args.threads is not None:
        sec.threads = args.threads
    if getattr(args, "factor_file", None) is not None:
        sec.factor_file = args.factor_file
    if getattr(args, "no_synthetic_fallback", False):
        sec.synthetic_fallback = False
    return sec


def _mc_design(sec: MonteCarloSection):
    source, history = resolve_factor_source(sec.factor_file, sec.synthetic_fallback)
    design = SimDesign.from_dict(dict(sec.design)).replace(factor_source=source)
    return design, history


def cmd_montecarlo(args, cfg: RunConfig) -> int:
    sec = _mc_section(args, cfg)
    if args.panels is not None:
        sec.panels = list(args.panels)
    if getattr(args, "inference", None) is not None:
        sec.inference = args.inference
    design, history = _mc_design(sec)
    specs = mc.benchmark_specs() if not sec.estimators else [EstimatorSpec.parse(c) for c in sec.estimators]
    report = mc.run_table(design, sec.panels, specs, sec.n_reps, sec.seed, sec.threads, history, sec.inference)
    scatter_spec = EstimatorSpec.parse(sec.scatter_estimator)
    points = mc.bias_scatter(mc.panel_design(sec.scatter_panel, design), scatter_spec, sec.n_reps, sec.seed,
                             sec.omitted, history)
    out = _out_dir(args, cfg)
    table = report.to_table() + "\n"
    formats = _formats(cfg)
    if "csv" in formats:
        _write(out / "report.csv", report.to_csv())
    if "json" in formats:
        _write(out / "report.json", report.to_json() + "\n")
    if "table" in formats:
        _write(out / "table.txt", table)
    _write(out / "scatter.csv", mc.scatter_csv(points, sec.seed))
    fmt = args.format or "table"
    sys.stdout.write({"csv": report.to_csv(), "json": report.to_json() + "\n", "table": table}[fmt])
    return 0


def cmd_biasplot(args, cfg: RunConfig) -> int:
    sec = _mc_section(args, cfg)
    if args.estimator is not None:
        sec.scatter_estimator = args.estimator
    if args.omitted is not None:
        sec.omitted = args.omitted
    if args.panel is not None:
        sec.scatter_panel = args.panel
    design, history = _mc_design(sec)
    points = mc.bias_scatter(mc.panel_design(sec.scatter_panel, design), EstimatorSpec.parse(sec.scatter_estimator),
                             sec.n_reps, sec.seed, sec.omitted, history)
    text = mc.scatter_csv(points, sec.seed)
    _write(_out_dir(args, cfg) / "scatter.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_ingest_ff(args, cfg: RunConfig) -> int:
    series = load_ff_daily(args.source)
    out = _out_dir(args, cfg)
    emit_factors_csv(series, out / "factors.csv")
    span = f"{series.dates[0]}..{series.dates[-1]}" if series.dates else ""
    print(f"ingested {len(series)} daily rows {span} ({', '.join(series.names)}) into {out / 'factors.csv'}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; command-line flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=FORMATS, help="what to echo on stdout")
    common.add_argument("--threads", type=int, help="cap on worker processes")
    common.add_argument("--reps", type=int, help="Monte Carlo replications")

    p = argparse.ArgumentParser(prog="eventcausal", description="Event-study simulation and estimation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a panel with known truth")
    s.add_argument("--n-firms", dest="n_firms", type=int)
    s.add_argument("--n-pre", dest="n_pre", type=int)
    s.add_argument("--n-post", dest="n_post", type=int)
    s.add_argument("--noise-sd", dest="noise_sd", type=float)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=[common], help="estimate effects on panel files")
    e.add_argument("--panel")
    e.add_argument("--factors")
    e.add_argument("--events")
    e.add_argument("--estimators", help="estimator codes separated by ';', e.g. 'diff_means;factor:Mkt-RF,SMB'")
    e.add_argument("--horizon", type=int)
    e.add_argument("--inference", choices=INFERENCE)
    e.add_argument("--pre-window", dest="pre_window", help="inclusive offsets lo,hi relative to the event")
    e.add_argument("--anticipation", type=int)
    e.add_argument("--excess", action="store_true", help="panel already holds excess returns")
    e.set_defaults(func=cmd_estimate)

    for name, func in (("montecarlo", cmd_montecarlo), ("biasplot", cmd_biasplot)):
        m = sub.add_parser(name, parents=[common])
        m.add_argument("--factor-file", dest="factor_file", help=f"factor history (default ${FF_ENV})")
        m.add_argument("--no-synthetic-fallback", dest="no_synthetic_fallback", action="store_true")
        if name == "montecarlo":
            m.add_argument("--panels", help="subset of ABCD")
            m.add_argument("--inference", choices=("none", "ttest", "placebo"))
        else:
            m.add_argument("--estimator")
            m.add_argument("--omitted")
            m.add_argument("--panel", choices=tuple(mc.PANELS))
        m.set_defaults(func=func)

    i = sub.add_parser("ingest-ff", parents=[common], help="normalize a daily factor file")
    i.add_argument("source")
    i.set_defaults(func=cmd_ingest_ff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        return args.func(args, cfg)
    except EventStudyError as exc:
        print(f"error [{exc.component}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
