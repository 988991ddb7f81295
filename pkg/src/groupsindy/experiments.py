"""Reproducible multi-trial experiments and their reports.

Three experiment kinds are supported:

* ``trials``: simulate one system per source, add velocity noise, identify,
  and score support recovery over many seeds (logistic two-regime study).
* ``lorenz_regimes``: the same loop for the five-regime Lorenz data set, plus
  a table of recovered second-component coefficients.
* ``switching``: one Lorenz trajectory whose parameter jumps, cut into
  segments that are treated as sources; the anomalous segment is located.
"""

from __future__ import annotations

import configparser
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import IdentifiedModel, RegressionProblem, StructuralError, _frozen
from .dictionary import build_dictionary, enumerate_monomials, rescale, term_name
from .differentiation import add_noise, central_difference
from .dynamics import (
    IntegrationError,
    OdeSystem,
    integrate,
    lorenz,
    make_system,
    simulate_switching,
    split_into_segments,
)
from .pipeline import identify_problems, noise_seed
from .solver import VARIANTS, ConfigError, SolverConfig

LORENZ_REGIMES = (
    # alpha, initial condition, final time
    (-1.0, (-8.0, 7.0, 27.0), 7.5),
    (4.7, (0.0, -0.01, 9.0), 12.5),
    (6.9, (1.0, 2.0, 1.0), 50.0),
    (7.075, (1.0, 1.0, 2.0), 15.0),
    (7.73, (2.0, 1.0, -5.0), 10.0),
)
KINDS = ("trials", "lorenz_regimes", "switching")


class ReportError(OSError):
    pass


@dataclass
class SourceSetup:
    params: dict[str, float]
    x0: tuple[float, ...]
    t_final: float
    sigma: float = 0.0


@dataclass
class SwitchingSetup:
    alpha_before: float = -1.0
    alpha_after: float = 6.6
    x0: tuple[float, ...] = (-8.0, 7.0, 27.0)
    t_final: float = 64.0
    segments: int = 32
    t_switch: float | None = None
    sigma: float = 0.0

    @property
    def switch_time(self) -> float:
        # middle of segment 17 when segments = 32
        if self.t_switch is not None:
            return self.t_switch
        return (self.segments // 2 + 0.5) / self.segments * self.t_final


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "trials"
    system: str = "logistic"
    sources: list[SourceSetup] = field(default_factory=list)
    dt: float = 0.005
    degree: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_trials: int = 1
    base_seed: int = 0
    variants: tuple[str, ...] = ("group-l20",)
    keep_traces: bool = False
    switching: SwitchingSetup | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError("experiment.kind", f"must be one of {KINDS}, got {self.kind!r}")
        if not self.dt > 0:
            raise ConfigError("experiment.dt", "must be > 0")
        if int(self.degree) != self.degree or self.degree < 0:
            raise ConfigError("experiment.degree", "must be a non-negative integer")
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigError("experiment.n_trials", "must be >= 1")
        if int(self.base_seed) != self.base_seed or self.base_seed < 0:
            raise ConfigError("experiment.base_seed", "must be a non-negative integer")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError("experiment.variants", f"unknown variant {v!r}")
        self.solver.validate()
        if self.kind == "switching":
            sw = self.switching
            if sw is None:
                raise ConfigError("switching", "section required for kind = switching")
            if sw.segments < 2:
                raise ConfigError("switching.segments", "must be >= 2")
            if not 0 < sw.switch_time < sw.t_final:
                raise ConfigError("switching.t_switch", "must lie inside (0, t_final)")
            if sw.sigma < 0:
                raise ConfigError("switching.sigma", "must be >= 0")
            return
        if not self.sources:
            raise ConfigError("source", "at least one [source.N] section is required")
        for i, src in enumerate(self.sources, 1):
            if src.sigma < 0:
                raise ConfigError(f"source.{i}.sigma", "must be >= 0")
            if not src.t_final >= self.dt:
                raise ConfigError(f"source.{i}.t_final", "must be >= dt")
            try:
                system = make_system(self.system, **src.params)
            except (TypeError, StructuralError) as exc:
                raise ConfigError(f"source.{i}", f"bad parameters for {self.system}: {exc}")
            if len(src.x0) != system.n:
                raise ConfigError(f"source.{i}.x0", f"needs {system.n} values, got {len(src.x0)}")

    def systems(self) -> list[OdeSystem]:
        return [make_system(self.system, **s.params) for s in self.sources]

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "kind": self.kind,
            "system": self.system,
            "dt": self.dt,
            "degree": self.degree,
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "variants": list(self.variants),
            "keep_traces": self.keep_traces,
            "solver": self.solver.to_dict(),
            "sources": [
                {"params": dict(s.params), "x0": list(s.x0), "t_final": s.t_final, "sigma": s.sigma}
                for s in self.sources
            ],
        }
        if self.switching is not None:
            sw = asdict(self.switching)
            sw["x0"] = list(sw["x0"])
            sw["t_switch"] = self.switching.switch_time
            out["switching"] = sw
        return out


# --- config files -----------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _get(section, key, conv, path, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(path, "missing required field")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(path, f"cannot parse {raw!r}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text: str) -> ExperimentConfig:
    """Parse an INI-style experiment description (see README for the schema)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0])
    if "experiment" not in cp:
        raise ConfigError("experiment", "section is required")
    ex = cp["experiment"]
    known = {"name", "kind", "system", "dt", "degree", "n_trials", "base_seed", "variants", "keep_traces"}
    for key in ex:
        if key not in known:
            raise ConfigError(f"experiment.{key}", "unknown field")
    cfg = ExperimentConfig(
        name=ex.get("name", "experiment"),
        kind=ex.get("kind", "trials"),
        system=ex.get("system", "lorenz" if ex.get("kind") in ("lorenz_regimes", "switching") else "logistic"),
        dt=_get(ex, "dt", float, "experiment.dt", 0.005),
        degree=_get(ex, "degree", int, "experiment.degree", 2),
        n_trials=_get(ex, "n_trials", int, "experiment.n_trials", 1),
        base_seed=_get(ex, "base_seed", int, "experiment.base_seed", 0),
        variants=tuple(v.strip() for v in ex.get("variants", "group-l20").split(",") if v.strip()),
        keep_traces=_get(ex, "keep_traces", _bool, "experiment.keep_traces", False),
    )
    if "solver" in cp:
        sv = cp["solver"]
        conv = {"threshold": float, "tol": float, "max_iter": int, "variant": str, "s": int,
                "k_factor": float, "init": str, "check_descent": _bool}
        data = {}
        for key in sv:
            if key not in conv:
                raise ConfigError(f"solver.{key}", "unknown field")
            data[key] = _get(sv, key, conv[key], f"solver.{key}")
        cfg.solver = SolverConfig.from_dict(data)
    if not cfg.variants:
        cfg.variants = (cfg.solver.variant,)

    src_sections = sorted(
        (s for s in cp.sections() if s.startswith("source.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else 10**9,
    )
    for name in src_sections:
        sec = cp[name]
        params = {}
        for key in sec:
            if key not in ("x0", "t_final", "sigma"):
                params[key] = _get(sec, key, float, f"{name}.{key}")
        cfg.sources.append(
            SourceSetup(
                params,
                _get(sec, "x0", _floats, f"{name}.x0"),
                _get(sec, "t_final", float, f"{name}.t_final"),
                _get(sec, "sigma", float, f"{name}.sigma", 0.0),
            )
        )
    if "switching" in cp:
        sec = cp["switching"]
        allowed = {"alpha_before", "alpha_after", "x0", "t_final", "segments", "t_switch", "sigma"}
        for key in sec:
            if key not in allowed:
                raise ConfigError(f"switching.{key}", "unknown field")
        d = SwitchingSetup()
        cfg.switching = SwitchingSetup(
            _get(sec, "alpha_before", float, "switching.alpha_before", d.alpha_before),
            _get(sec, "alpha_after", float, "switching.alpha_after", d.alpha_after),
            _get(sec, "x0", _floats, "switching.x0", d.x0),
            _get(sec, "t_final", float, "switching.t_final", d.t_final),
            _get(sec, "segments", int, "switching.segments", d.segments),
            _get(sec, "t_switch", float, "switching.t_switch") if "t_switch" in sec else None,
            _get(sec, "sigma", float, "switching.sigma", d.sigma),
        )
    if cfg.kind == "lorenz_regimes" and not cfg.sources:
        cfg.sources = default_lorenz_sources()
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}")
    return parse_config(text)


# --- scoring ----------------------------------------------------------------


def _truth_indices(truth: OdeSystem, j: int, spec) -> tuple[int, ...]:
    return tuple(sorted(spec.index(e) for e in truth.support(j)))


def support_match(estimated: IdentifiedModel, truth) -> bool:
    """Exact support agreement for every component and every source.

    ``truth`` is one OdeSystem shared by all sources, or one per source.
    """
    m = estimated.m
    truths = list(truth) if isinstance(truth, (list, tuple)) else [truth] * m
    if len(truths) != m:
        raise StructuralError(f"{len(truths)} truth systems for {m} sources")
    spec = estimated.spec
    for j, fit in enumerate(estimated.components):
        for i in range(m):
            est = fit.column_supports[i] if estimated.variant == "per-source-l0" else fit.support
            if tuple(sorted(est)) != _truth_indices(truths[i], j, spec):
                return False
    return True


def relative_error(estimated: Mapping, truth: Mapping) -> float:
    """Mean percent error over the entries of ``truth``; absent estimates count as 0."""
    if not truth:
        raise StructuralError("truth support is empty")
    errs = []
    for key, c in truth.items():
        if c == 0:
            raise StructuralError(f"true coefficient for {key} is zero")
        errs.append(abs(estimated.get(key, 0.0) - c) / abs(c))
    return 100.0 * float(np.mean(errs))


def model_relative_errors(model: IdentifiedModel, truths: Sequence[OdeSystem]) -> list[float]:
    """Per-source mean percent error pooled over all components' true terms."""
    spec = model.spec
    out = []
    for i, truth in enumerate(truths):
        est, tru = {}, {}
        for j, fit in enumerate(model.components):
            for exps, c in truth.coefficients[j].items():
                tru[(j, exps)] = c
                est[(j, exps)] = float(fit.coefficients[spec.index(exps), i])
        out.append(relative_error(est, tru))
    return out


# --- reports ----------------------------------------------------------------


@dataclass
class ExperimentReport:
    name: str
    kind: str
    n_trials: int
    base_seed: int
    summary: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    # figure data written as CSV files; not part of report.json
    tables: dict = field(default_factory=dict, compare=False, repr=False)

    def probability(self, variant: str = "group-l20") -> float:
        return self.summary[variant]["P"]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "summary": self.summary,
            "trials": self.trials,
            "config": self.config,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            data["name"], data["kind"], data["n_trials"], data["base_seed"],
            data.get("summary", {}), data.get("trials", []), data.get("config", {}),
            data.get("extra", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    @classmethod
    def empty(cls, name: str = "empty") -> "ExperimentReport":
        return cls(name, "trials", 0, 0)


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- trial loop ---------------------------------------------------------------


def default_lorenz_sources(sigma: float = 0.005) -> list[SourceSetup]:
    return [SourceSetup({"alpha": a}, x0, T, sigma) for a, x0, T in LORENZ_REGIMES]


@dataclass
class _Prepared:
    spec: object
    dictionaries: tuple
    scale_factor: float
    velocities: list  # clean central-difference velocities per source
    times: list
    states: list


def _prepare(config: ExperimentConfig) -> _Prepared:
    states, vels, times = [], [], []
    for i, (src, system) in enumerate(zip(config.sources, config.systems()), 1):
        series = integrate(system, src.x0, config.dt, src.t_final, source_id=i)
        X, V = central_difference(series)
        states.append(X)
        vels.append(V)
        times.append(series.times[1:-1])
    spec = enumerate_monomials(states[0].shape[1], config.degree)
    scaled, factor = rescale([build_dictionary(X, spec) for X in states])
    return _Prepared(spec, tuple(_frozen(d) for d in scaled), factor, vels, times, states)


def _noisy_velocities(prep: _Prepared, sigmas, seed: int) -> list[np.ndarray]:
    return [
        add_noise(V, sig, noise_seed(seed, i)) if sig else V
        for i, (V, sig) in enumerate(zip(prep.velocities, sigmas))
    ]


def _problems(prep: _Prepared, velocities) -> list[RegressionProblem]:
    f = prep.scale_factor
    return [
        RegressionProblem(prep.dictionaries, tuple(f * V[:, j] for V in velocities), prep.spec, f)
        for j in range(prep.spec.n)
    ]


def _supports_as_names(model: IdentifiedModel) -> list:
    spec = model.spec
    if model.variant == "per-source-l0":
        return [
            [[term_name(spec.multi_indices[k]) for k in cs] for cs in fit.column_supports]
            for fit in model.components
        ]
    return [model.term_names(j) for j in range(len(model.components))]


def _run_one_trial(config: ExperimentConfig, prep: _Prepared, truths, t: int) -> dict:
    seed = config.base_seed + t
    record = {"trial": t, "seed": seed, "failed": False, "error": None, "variants": {}}
    sigmas = [s.sigma for s in config.sources]
    velocities = _noisy_velocities(prep, sigmas, seed)
    problems = _problems(prep, velocities)
    for variant in config.variants:
        solver = SolverConfig(**{**config.solver.to_dict(), "variant": variant})
        try:
            model = identify_problems(problems, solver, quiet=True)
        except (np.linalg.LinAlgError, StructuralError) as exc:
            record["variants"][variant] = {"match": False, "failed": True, "error": str(exc)}
            continue
        rec = {
            "match": support_match(model, truths),
            "failed": False,
            "supports": _supports_as_names(model),
            "rel_err_pct": model_relative_errors(model, truths),
            "iterations": [fit.trace.iterations for fit in model.components],
            "converged": [fit.trace.converged for fit in model.components],
        }
        if config.keep_traces:
            rec["traces"] = [fit.trace.objective for fit in model.components]
        record["variants"][variant] = rec
        if t == 1 and variant == config.variants[0]:
            record["_model"] = model
    return record


def _summarize(config: ExperimentConfig, trials: list[dict]) -> dict:
    N = config.n_trials
    m = len(config.sources)
    truths = config.systems()
    summary = {}
    for variant in config.variants:
        recs = [tr["variants"].get(variant) for tr in trials]
        ok = [r for r in recs if r and not r.get("failed")]
        matches = sum(1 for r in ok if r["match"])
        per_source = (
            [float(np.mean([r["rel_err_pct"][i] for r in ok])) for i in range(m)] if ok else [None] * m
        )
        summary[variant] = {
            "P": matches / N,
            "matches": matches,
            "n_failed": N - len(ok),
            "mean_rel_err_pct": float(np.mean(per_source)) if ok else None,
            "per_source_rel_err_pct": per_source,
            "per_source_P": [
                sum(1 for r in ok if _source_match(r, i, truths[i], variant)) / N for i in range(m)
            ],
        }
    return summary


def _source_match(rec: dict, i: int, truth: OdeSystem, variant: str) -> bool:
    for j, sup in enumerate(rec["supports"]):
        names = sup[i] if variant == "per-source-l0" else sup
        if sorted(names) != sorted(term_name(e) for e in truth.support(j)):
            return False
    return True


def run_trials(config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """Score support recovery over ``config.n_trials`` noise realizations.

    Trial ``t`` (1-based) uses seed ``base_seed + t``. The trajectories are
    deterministic, so they are simulated once and only the noise changes
    between trials. A blow-up during simulation marks every trial as failed.
    """
    config.validate()
    truths = config.systems()
    report = ExperimentReport(config.name, config.kind, config.n_trials, config.base_seed,
                              config=config.to_dict())
    try:
        prep = _prepare(config)
    except IntegrationError as exc:
        report.trials = [
            {"trial": t, "seed": config.base_seed + t, "failed": True, "error": str(exc), "variants": {}}
            for t in range(1, config.n_trials + 1)
        ]
        report.summary = _summarize(config, report.trials)
        return report

    def job(t):
        return _run_one_trial(config, prep, truths, t)

    ids = range(1, config.n_trials + 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trials = list(pool.map(job, ids))
    else:
        trials = [job(t) for t in ids]
    first_model = trials[0].pop("_model", None)
    for tr in trials:
        tr.pop("_model", None)
    report.trials = trials
    report.summary = _summarize(config, trials)
    report.tables.update(_figure_tables(config, prep))
    if first_model is not None:
        report.extra["first_trial_model"] = first_model.to_dict()
        report.tables["objective_trace"] = _trace_table(first_model)
    return report


def _trace_table(model: IdentifiedModel) -> dict:
    rows = []
    for fit in model.components:
        for k, (F, S) in enumerate(zip(fit.trace.objective, fit.trace.supports)):
            rows.append([fit.component, k, F, len(S)])
    return {"columns": ["component", "iteration", "F", "support_size"], "rows": rows}


def _figure_tables(config: ExperimentConfig, prep: _Prepared) -> dict:
    n = prep.spec.n
    state_rows, vel_rows = [], []
    sigmas = [s.sigma for s in config.sources]
    noisy = _noisy_velocities(prep, sigmas, config.base_seed + 1)
    for i, (t, X, V) in enumerate(zip(prep.times, prep.states, noisy), 1):
        for k in range(len(t)):
            state_rows.append([i, t[k], *X[k]])
            vel_rows.append([i, t[k], *V[k]])
    xs = [f"x{d + 1}" for d in range(n)]
    vs = [f"v{d + 1}" for d in range(n)]
    return {
        "state_space": {"columns": ["source", "t", *xs], "rows": state_rows},
        "velocity_space": {"columns": ["source", "t", *vs], "rows": vel_rows},
    }


# --- Lorenz five-regime study ---------------------------------------------------


def lorenz_config(**overrides) -> ExperimentConfig:
    """Five-regime Lorenz setup: dt 0.005, 0.5% noise, degree 4, threshold 1.7."""
    sigma = overrides.pop("sigma", 0.005)
    solver = overrides.pop("solver", None) or SolverConfig(threshold=1.7, init="lstsq")
    base = dict(
        name="lorenz5", kind="lorenz_regimes", system="lorenz",
        sources=default_lorenz_sources(sigma), dt=0.005, degree=4,
        solver=solver, n_trials=100, base_seed=0, variants=("group-l20",),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def coefficient_table(model: IdentifiedModel, truths: Sequence[OdeSystem], component: int = 2) -> dict:
    """Rows = dictionary terms, columns = sets, for one component (1-based)."""
    j = component - 1
    spec = model.spec
    m = model.m
    columns = ["term"] + [f"set_{i + 1}" for i in range(m)] + [f"true_{i + 1}" for i in range(m)]
    rows = []
    for k, e in enumerate(spec.multi_indices):
        est = [float(model.components[j].coefficients[k, i]) for i in range(m)]
        tru = [float(t.coefficients[j].get(tuple(e), 0.0)) for t in truths]
        rows.append([term_name(e), *est, *tru])
    return {"columns": columns, "rows": rows}


def lorenz_regimes_experiment(config: ExperimentConfig | None = None, n_jobs: int = 1, **overrides) -> ExperimentReport:
    config = config or lorenz_config(**overrides)
    report = run_trials(config, n_jobs=n_jobs)
    truths = config.systems()
    prep = _prepare(config)
    velocities = _noisy_velocities(prep, [s.sigma for s in config.sources], config.base_seed + 1)
    model = identify_problems(_problems(prep, velocities), config.solver, quiet=True)
    table = coefficient_table(model, truths, component=2)
    report.tables["table1"] = table
    report.extra["table1"] = table
    return report


# --- switching system -------------------------------------------------------------


def _segment_residuals(problems, C_by_component) -> np.ndarray:
    """(M, n) array of ||D_i c_i - V_i|| / sqrt(l_i) in physical units."""
    M = problems[0].m
    out = np.zeros((M, len(problems)))
    for j, prob in enumerate(problems):
        C = C_by_component[j]
        for i, (D, V) in enumerate(zip(prob.unscaled_dictionaries(), prob.unscaled_velocities())):
            out[i, j] = np.linalg.norm(D @ C[:, i] - V) / np.sqrt(len(V))
    return out


def switching_config(**overrides) -> ExperimentConfig:
    sw_keys = {"alpha_before", "alpha_after", "x0", "t_final", "segments", "t_switch", "sigma"}
    sw = SwitchingSetup(**{k: overrides.pop(k) for k in list(overrides) if k in sw_keys})
    solver = overrides.pop("solver", None) or SolverConfig(threshold=1.7, init="lstsq")
    base = dict(name="switching", kind="switching", system="lorenz", dt=0.005, degree=4,
                solver=solver, n_trials=1, base_seed=0, switching=sw)
    base.update(overrides)
    return ExperimentConfig(**base)


def switching_experiment(config: ExperimentConfig | None = None, **overrides) -> ExperimentReport:
    """Locate the parameter switch in a segmented Lorenz trajectory.

    The group problem is solved over all segments; the segment with the largest
    normalized residual is reported as the switch. Because that segment's
    mixed dynamics can drag spurious rows into the shared support, the support
    is then re-selected without it and every segment is refitted on that
    support.
    """
    config = config or switching_config(**overrides)
    config.validate()
    sw = config.switching
    t_switch = sw.switch_time
    series = simulate_switching(sw.alpha_before, sw.alpha_after, sw.x0, config.dt, t_switch, sw.t_final)
    segments = split_into_segments(series, sw.segments)
    states, vels, seg_times = [], [], []
    for i, seg in enumerate(segments):
        X, V = central_difference(seg)
        if sw.sigma:
            V = add_noise(V, sw.sigma, noise_seed(config.base_seed + 1, i))
        states.append(X)
        vels.append(V)
        seg_times.append((float(seg.times[0]), float(seg.times[-1])))
    spec = enumerate_monomials(3, config.degree)
    raw = [build_dictionary(X, spec) for X in states]
    scaled, factor = rescale(raw)
    scaled = tuple(_frozen(d) for d in scaled)
    problems = [
        RegressionProblem(scaled, tuple(factor * V[:, j] for V in vels), spec, factor)
        for j in range(3)
    ]
    solver = config.solver
    first = identify_problems(problems, solver, quiet=True)
    residuals = _segment_residuals(problems, [f.coefficients for f in first.components])
    combined = np.sqrt(np.sum(residuals**2, axis=1))
    switch_seg = int(np.argmax(combined)) + 1
    true_seg = next(i + 1 for i, (a, b) in enumerate(seg_times) if t_switch <= b)

    keep = [i for i in range(len(segments)) if i != switch_seg - 1]
    sub = [
        RegressionProblem(tuple(scaled[i] for i in keep), tuple(p.velocities[i] for i in keep), spec, factor)
        for p in problems
    ]
    refined = identify_problems(sub, solver, quiet=True)
    # refit every segment, including the switch segment, on the refined support
    from .solver import _refit

    final_C = []
    for prob, fit in zip(problems, refined.components):
        C, _ = _refit(prob, [fit.support] * prob.m, prob.unscaled_dictionaries(), prob.unscaled_velocities())
        final_C.append(C)

    before, after = lorenz(sw.alpha_before), lorenz(sw.alpha_after)
    comp2_truth = {"before": before.coefficients[1], "after": after.coefficients[1]}
    seg_info = []
    max_err = 0.0
    for i, (a, b) in enumerate(seg_times):
        regime = "before" if b <= t_switch else ("after" if a >= t_switch else "switch")
        est = {e: float(final_C[1][spec.index(e), i]) for e in spec.multi_indices}
        err = None
        if regime != "switch":
            tru = comp2_truth[regime]
            err = max(abs(est[e] - c) / abs(c) for e, c in tru.items()) * 100
            if i + 1 != switch_seg:
                max_err = max(max_err, err)
        seg_info.append({
            "segment": i + 1, "t_start": a, "t_end": b, "regime": regime,
            "residual": float(combined[i]), "residual_by_component": residuals[i].tolist(),
            "max_rel_err_pct_component2": err,
        })

    supports = [[term_name(spec.multi_indices[k]) for k in fit.support] for fit in refined.components]
    truth_supports = [sorted(term_name(e) for e in before.support(j)) for j in range(3)]
    support_ok = all(sorted(s) == t for s, t in zip(supports, truth_supports))
    located = switch_seg == true_seg
    median = float(np.median(combined))

    report = ExperimentReport(config.name, "switching", 1, config.base_seed, config=config.to_dict())
    report.summary = {
        solver.variant: {
            "P": float(support_ok and located),
            "matches": int(support_ok and located),
            "n_failed": 0,
            "mean_rel_err_pct": None,
            "per_source_rel_err_pct": [],
            "per_source_P": [],
        }
    }
    report.extra = {
        "t_switch": t_switch,
        "switch_segment": switch_seg,
        "true_switch_segment": true_seg,
        "located": located,
        "support": supports,
        "first_pass_support": [first.term_names(j) for j in range(3)],
        "support_match": support_ok,
        "max_rel_err_pct_non_switch": max_err,
        "residual_median": median,
        "residual_max_over_median": float(combined.max() / median) if median > 0 else None,
        "segments": seg_info,
        "objective_traces": [
            fit.trace.objective for model in (first, refined) for fit in model.components
        ],
    }
    coeff_rows = []
    for i in range(len(segments)):
        for k, e in enumerate(spec.multi_indices):
            coeff_rows.append([i + 1, k, term_name(e), float(final_C[1][k, i])])
    report.tables["coefficient_map"] = {
        "columns": ["segment", "term_index", "term", "coefficient"], "rows": coeff_rows,
    }
    regime_of = np.where(series.times <= t_switch, 0, 1)
    report.tables["state_space"] = {
        "columns": ["regime", "t", "x1", "x2", "x3"],
        "rows": [[int(r), t, *x] for r, t, x in zip(regime_of, series.times, series.states)],
    }
    report.tables["segment_residuals"] = {
        "columns": ["segment", "residual", "regime"],
        "rows": [[s["segment"], s["residual"], s["regime"]] for s in seg_info],
    }
    return report


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    if config.kind == "switching":
        return switching_experiment(config)
    if config.kind == "lorenz_regimes":
        return lorenz_regimes_experiment(config, n_jobs=n_jobs)
    return run_trials(config, n_jobs=n_jobs)


# --- output -----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_table(table: dict, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([_fmt(v) for v in row])
    return path


def emit_report(report: ExperimentReport, path, figures: bool = True) -> list[Path]:
    """Write report.json, summary.csv, one CSV per figure table and, optionally, SVGs."""
    out = Path(path)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        rj = out / "report.json"
        rj.write_text(report.to_json())
        written.append(rj)
        sc = out / "summary.csv"
        with open(sc, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "P", "mean_rel_err_pct", "n_trials", "n_failed"])
            for variant, s in report.summary.items():
                err = s.get("mean_rel_err_pct")
                w.writerow([variant, _fmt(s["P"]), "" if err is None else _fmt(err),
                            report.n_trials, s.get("n_failed", 0)])
        written.append(sc)
        for name, table in sorted(report.tables.items()):
            written.append(write_table(table, out / f"{name}.csv"))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    if figures and report.tables:
        from .plotting import render_report_figures

        written.extend(render_report_figures(out))
    return written
