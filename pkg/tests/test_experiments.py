import json
from importlib import resources

import numpy as np
import pytest

from groupsindy.core import ComponentFit, IdentifiedModel, StructuralError
from groupsindy.dictionary import enumerate_monomials
from groupsindy.dynamics import logistic
from groupsindy.experiments import (
    ExperimentConfig,
    ExperimentReport,
    ReportError,
    SourceSetup,
    emit_report,
    load_config,
    lorenz_config,
    lorenz_regimes_experiment,
    parse_config,
    relative_error,
    run_trials,
    support_match,
    switching_experiment,
)
from groupsindy.solver import ConfigError, SolverConfig


def shipped(name):
    return (resources.files("groupsindy") / "configs" / name).read_text()


def _model_with_support(spec, rows):
    C = np.zeros((spec.nbar, 1))
    for e in rows:
        C[spec.index(e), 0] = 1.0
    nz = tuple(int(k) for k in np.flatnonzero(C[:, 0]))
    return IdentifiedModel(spec, [ComponentFit(1, nz, C)])


def test_support_match_examples():
    spec = enumerate_monomials(1, 6)
    truth = logistic(0.05)
    assert support_match(_model_with_support(spec, [(1,), (2,)]), truth)
    assert not support_match(_model_with_support(spec, [(1,), (2,), (3,)]), truth)
    assert not support_match(_model_with_support(spec, [(1,)]), truth)


def test_relative_error_examples():
    truth = {"a": 2.0, "b": -3.0}
    assert relative_error(dict(truth), truth) == 0.0
    assert relative_error({k: 1.05 * v for k, v in truth.items()}, truth) == pytest.approx(5.0)
    assert relative_error({}, truth) == pytest.approx(100.0)


def test_relative_error_table_one_set_one():
    est = {"x1": 28.0232, "x2": -1.0093, "x1x3": -1.0002}
    tru = {"x1": 28.0, "x2": -1.0, "x1x3": -1.0}
    expected = 100 * (0.0232 / 28 + 0.0093 + 0.0002) / 3
    assert relative_error(est, tru) == pytest.approx(expected, rel=1e-12)
    assert relative_error(est, tru) == pytest.approx(0.344, abs=5e-4)


def test_relative_error_rejects_zero_truth():
    with pytest.raises(StructuralError):
        relative_error({"a": 1.0}, {"a": 0.0})
    with pytest.raises(StructuralError):
        relative_error({}, {})


def _logistic_config(**kw):
    cfg = parse_config(shipped("logistic.cfg"))
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def test_noise_free_single_trial_exact_recovery():
    cfg = _logistic_config(n_trials=1, variants=("group-l20",))
    for s in cfg.sources:
        s.sigma = 0.0
    rep = run_trials(cfg)
    assert rep.probability() == 1.0
    assert rep.summary["group-l20"]["mean_rel_err_pct"] < 0.1


def test_noise_free_lorenz_single_source():
    cfg = ExperimentConfig(
        name="one", kind="trials", system="lorenz", degree=2,
        sources=[SourceSetup({"alpha": 4.7}, (0, -0.01, 9), 12.5)],
        solver=SolverConfig(threshold=0.5, init="lstsq"),
    )
    rep = run_trials(cfg)
    assert rep.probability() == 1.0
    assert rep.summary["group-l20"]["mean_rel_err_pct"] < 0.1


def test_blow_up_counts_as_failed_trial():
    cfg = ExperimentConfig(
        name="boom", kind="trials", system="logistic", degree=2, n_trials=3,
        sources=[SourceSetup({"alpha": 1.0}, (-1.0,), 5.0, 0.01)],
        solver=SolverConfig(threshold=0.01),
    )
    rep = run_trials(cfg)
    s = rep.summary["group-l20"]
    assert s["P"] == 0 and s["n_failed"] == 3
    assert all(t["failed"] and "non-finite" in t["error"] for t in rep.trials)


def test_report_json_is_deterministic():
    cfg = _logistic_config(n_trials=4)
    a = run_trials(cfg).to_json()
    b = run_trials(_logistic_config(n_trials=4)).to_json()
    c = run_trials(_logistic_config(n_trials=4), n_jobs=3).to_json()
    assert a == b == c


def test_seed_schedule_allows_rerunning_one_trial():
    full = run_trials(_logistic_config(n_trials=3, base_seed=10))
    single = run_trials(_logistic_config(n_trials=1, base_seed=12))
    assert full.trials[2]["seed"] == single.trials[0]["seed"] == 13
    assert full.trials[2]["variants"] == single.trials[0]["variants"]


@pytest.mark.slow
def test_probability_non_increasing_in_noise():
    failures = 0
    for rep in range(20):
        P = []
        for mult in (16384, 65536):
            cfg = _logistic_config(n_trials=100, base_seed=1000 * rep, variants=("group-l20",))
            for s in cfg.sources:
                s.sigma *= mult
            P.append(run_trials(cfg).probability())
        failures += P[0] < P[1]
    assert failures <= 1


def test_lorenz_short_run_table():
    rep = lorenz_regimes_experiment(n_trials=2)
    table = rep.tables["table1"]
    names = [r[0] for r in table["rows"]]
    assert table["columns"][:6] == ["term", "set_1", "set_2", "set_3", "set_4", "set_5"]
    assert len(names) == 35 and names[-1] == "x3^4"
    nonzero = {r[0] for r in table["rows"] if any(v != 0 for v in r[1:6])}
    assert nonzero == {"x1", "x2", "x1*x3"}
    assert table["rows"][names.index("x1")][1] == pytest.approx(28, rel=0.01)


def test_lorenz_config_defaults():
    cfg = lorenz_config()
    assert [s.params["alpha"] for s in cfg.sources] == [-1.0, 4.7, 6.9, 7.075, 7.73]
    assert [s.t_final for s in cfg.sources] == [7.5, 12.5, 50.0, 15.0, 10.0]
    assert cfg.degree == 4 and cfg.solver.threshold == 1.7 and cfg.dt == 0.005


def test_switching_default_locates_segment():
    rep = switching_experiment()
    assert rep.extra["switch_segment"] == rep.extra["true_switch_segment"] == 17
    assert rep.extra["support"][1] == ["x1", "x2", "x1*x3"]


def test_switching_without_switch_is_homogeneous():
    rep = switching_experiment(alpha_after=-1.0)
    res = np.array([s["residual"] for s in rep.extra["segments"]])
    assert res.max() <= 5 * np.median(res)


def test_switching_two_segments_at_boundary():
    # with 12801 samples the first segment ends exactly at t = 32.0; the row
    # norm of a unit coefficient shared by two sources is sqrt(2), so the
    # threshold is lowered accordingly
    rep = switching_experiment(segments=2, t_switch=32.0, solver=SolverConfig(threshold=0.5, init="lstsq"))
    segs = rep.extra["segments"]
    assert [s["regime"] for s in segs] == ["before", "after"]
    assert all(s["max_rel_err_pct_component2"] < 1.0 for s in segs)


def test_empty_report(tmp_path):
    emit_report(ExperimentReport.empty(), tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["n_trials"] == 0


def test_emit_report_files_and_round_trip(tmp_path):
    rep = run_trials(_logistic_config(n_trials=2))
    written = emit_report(rep, tmp_path)
    names = {p.name for p in written}
    assert {"report.json", "summary.csv", "state_space.csv", "velocity_space.csv", "state_space.svg"} <= names
    header = (tmp_path / "summary.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["variant", "P", "mean_rel_err_pct"]
    back = ExperimentReport.from_json((tmp_path / "report.json").read_text())
    assert back == ExperimentReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()


def test_emit_report_io_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError, match="file"):
        emit_report(ExperimentReport.empty(), blocker / "sub", figures=False)


@pytest.mark.parametrize("name", ["logistic.cfg", "lorenz5.cfg", "switching.cfg"])
def test_shipped_configs_parse(name):
    cfg = parse_config(shipped(name))
    assert cfg.to_dict()["name"] == name.split(".")[0]


def test_logistic_config_contents():
    cfg = parse_config(shipped("logistic.cfg"))
    assert [s.params["alpha"] for s in cfg.sources] == [0.05, 0.23]
    assert [s.sigma for s in cfg.sources] == [0.0005, 0.0001]
    assert cfg.solver.threshold == 0.0018 and cfg.degree == 6 and cfg.n_trials == 100


@pytest.mark.parametrize(
    "text, field",
    [
        ("[experiment]\nkind = trials\nfoo = 1\n", "experiment.foo"),
        ("[experiment]\ndt = fast\n", "experiment.dt"),
        ("[experiment]\n[solver]\nthreshold = -1\n[source.1]\nalpha=1\nx0=0.1\nt_final=1\n", "solver.threshold"),
        ("[experiment]\n[solver]\ngamma = 1\n", "solver.gamma"),
        ("[experiment]\n[source.1]\nalpha = 1\nt_final = 1\n", "source.1.x0"),
        ("[experiment]\n[source.1]\nalpha = 1\nx0 = 1, 2\nt_final = 1\n", "source.1.x0"),
        ("[experiment]\n", "source"),
        ("[solver]\nthreshold = 1\n", "experiment"),
        ("[experiment]\nkind = switching\n", "switching"),
        ("[experiment]\nkind = switching\n[switching]\nsegments = 1\n", "switching.segments"),
        ("[experiment]\nvariants = lasso\n[source.1]\nalpha=1\nx0=0.1\nt_final=1\n", "experiment.variants"),
    ],
)
def test_config_schema_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == field


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_config(tmp_path / "nope.cfg")


def test_inline_comments_allowed():
    cfg = parse_config(
        "[experiment]\nkind = trials  ; the default\ndegree = 2  # quadratic\n"
        "[source.1]  ; first source\nalpha = 0.1\nx0 = 0.01\nt_final = 1\n"
    )
    assert cfg.kind == "trials" and cfg.degree == 2 and cfg.sources[0].params == {"alpha": 0.1}
