import csv
import json
import os
import stat
from pathlib import Path

import pytest

from prlatency.cli import RunConfig, bundled_path, build_parser, main, resolve_config
from prlatency.features import FEATURES, Role
from prlatency.ingest import EventArchive, load_archive
from prlatency.ingest.mock import MockGitHub
from prlatency.synthetic import FAST_HELPER, simulate_project

ARCHIVE = str(bundled_path("fixture_archive"))

FAST_HP = {
    "gbdt": {"iterations": 20, "max_depth": 3},
    "random_forest": {"n_trees": 20},
    "mlp": {"epochs": 10, "hidden": 16},
    "logistic": {"epochs": 20},
    "linear_svm": {"epochs": 10},
}


def fast_config(tmp_path, **extra):
    cfg = {"archive": ARCHIVE, "hyperparams": FAST_HP, "permutation_repeats": 3, "shap_samples": 32,
           "shap_rows": 20, "shap_background": 32, "impact_features": 2, **extra}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ------------------------------------------------------------------


def test_precedence_flags_over_file_over_defaults(tmp_path):
    path = fast_config(tmp_path, seed=4, k=3)
    args = build_parser().parse_args(["evaluate", "--config", path, "--seed", "9", "--out", str(tmp_path / "o")])
    cfg = resolve_config(args)
    assert cfg.seed == 9  # flag
    assert cfg.k == 3  # file
    assert cfg.window_days == 90.0  # default
    assert cfg.output_dir == str(tmp_path / "o")


def test_unknown_config_key_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"archive": ARCHIVE, "colour": "blue"}))
    assert main(["extract", "--config", str(path), "--out", str(tmp_path / "o")]) == 18
    assert "colour" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [{"k": 1}, {"kinds": ["xgb"]}, {"class_boundaries_hours": [200, 100]},
                                 {"hyperparams": {"knn": {"k": -1}}}, {"mode": "sideways"}])
def test_invalid_config_values(bad):
    with pytest.raises(Exception) as info:
        RunConfig.from_dict(bad).validate()
    assert getattr(info.value, "exit_code", None) == 18


def test_missing_archive_exit_code(tmp_path):
    assert main(["extract", "--archive", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 7


# -- ingest ----------------------------------------------------------------------------


def test_ingest_against_mock_is_idempotent(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("GITHUB_TOKEN", raising=False)
    recs = simulate_project("o/r", 12, seed=1)
    arch = tmp_path / "arch"
    with MockGitHub({"o/r": recs}) as srv:
        argv = ["ingest", "--repo", "o/r", "--archive", str(arch), "--base-url", srv.base_url, "--jobs", "2"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        second = capsys.readouterr().out
    events = sum(len(r.events) for r in recs)
    assert f"o/r: fetched 12 pull requests, {events} events; added 12, replaced 0, unchanged 0" in first
    assert "added 0, replaced 0, unchanged 12" in second
    assert len(load_archive(arch)) == 12


def test_ingest_auth_failures(tmp_path, monkeypatch):
    monkeypatch.delenv("GITHUB_TOKEN", raising=False)
    assert main(["ingest", "--repo", "o/r", "--archive", str(tmp_path), "--require-auth"]) == 3
    with MockGitHub({"o/r": []}, token="sekrit") as srv:
        base = ["ingest", "--repo", "o/r", "--archive", str(tmp_path / "a"), "--base-url", srv.base_url]
        assert main(base) == 3
        monkeypatch.setenv("GITHUB_TOKEN", "sekrit")
        assert main(base) == 0
        assert main(base[:2] + ["o/missing"] + base[3:]) == 4


def test_ingest_rejects_bad_slug(tmp_path):
    assert main(["ingest", "--repo", "not-a-slug", "--archive", str(tmp_path)]) == 10


# -- extract ---------------------------------------------------------------------------


def test_extract_is_deterministic_and_ordered(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["extract", "--archive", ARCHIVE, "--out", str(out)]) == 0
        outs.append({p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()})
    # config.json echoes the differing output directory; everything else must match
    configs = [json.loads(o.pop(Path("config.json"))) for o in outs]
    assert outs[0] == outs[1]
    assert configs[0].pop("output_dir") != configs[1].pop("output_dir") and configs[0] == configs[1]
    out = tmp_path / "a"
    for role in Role:
        rows = read_csv(out / "features" / role.value / "acme__widgets.csv")
        assert rows[0][3:-1] == FEATURES[role]
    excl = json.loads((out / "exclusions.json").read_text())
    widgets = excl["contributor"]["acme/widgets"]
    assert widgets["no_contributor_response"] > 0
    assert widgets["rows"] == len(read_csv(out / "features" / "contributor" / "acme__widgets.csv")) - 1
    assert json.loads((out / "config.json").read_text())["archive"] == ARCHIVE


def test_extract_project_filter(tmp_path):
    assert main(["extract", "--archive", ARCHIVE, "--out", str(tmp_path), "--project", "acme/gadgets",
                 "--role", "maintainer"]) == 0
    assert sorted(p.name for p in (tmp_path / "features" / "maintainer").glob("*.csv")) == ["acme__gadgets.csv"]
    assert not (tmp_path / "features" / "contributor").exists()
    assert main(["extract", "--archive", ARCHIVE, "--out", str(tmp_path), "--project", "acme/none"]) == 18


# -- evaluate, explain, predict -----------------------------------------------------------------


@pytest.fixture(scope="module")
def evaluated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("eval")
    cfg = fast_config(tmp)
    out = tmp / "out"
    assert main(["evaluate", "--config", cfg, "--out", str(out), "--role", "maintainer", "--k", "3",
                 "--save-models", "gbdt", "knn"]) == 0
    return cfg, out


def test_evaluate_report_contents(evaluated):
    _, out = evaluated
    report = json.loads((out / "evaluation_maintainer.json").read_text())
    assert report["kinds"] == ["gbdt", "knn", "logistic", "naive_bayes", "mlp", "random_forest", "linear_svm"]
    assert report["rankings"]["across_projects"]["groups"]
    assert report["config"]["k"] == 3 and report["hyperparameters"]["gbdt"]["iterations"] == 20
    for project, kinds in report["results"].items():
        for kind, res in kinds.items():
            assert len(res["folds"]) == 3
            assert "improvement_roc" in res["mean"]
    table = read_csv(out / "evaluation_maintainer_auc_roc.csv")
    assert table[0] == ["project", "CB", "KNN", "LR", "NB", "NN", "RF", "SVM"]
    assert (out / "models" / "maintainer" / "acme__widgets__gbdt.model").is_file()


def test_model_files_follow_umask(evaluated):
    _, out = evaluated
    mode = stat.S_IMODE(os.stat(out / "models" / "maintainer" / "acme__widgets__knn.model").st_mode)
    mask = os.umask(0)
    os.umask(mask)
    assert mode == 0o666 & ~mask


def test_evaluate_rerun_is_byte_identical(evaluated, tmp_path):
    cfg, out = evaluated
    again = tmp_path / "again"
    assert main(["evaluate", "--config", str(out / "config.json"), "--out", str(again)]) == 0
    assert (again / "evaluation_maintainer.json").read_bytes().replace(str(again).encode(), b"") == \
        (out / "evaluation_maintainer.json").read_bytes().replace(str(out).encode(), b"")


def test_cross_project_mode(tmp_path):
    cfg = fast_config(tmp_path, kinds=["gbdt"], mode="cross-project", roles=["contributor"])
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "evaluation_contributor.json").read_text())
    assert report["mode"] == "cross-project"
    assert report["provenance"]["acme/gadgets"]["train_projects"] == ["acme/widgets"]


def test_predict_outputs_and_mismatch(evaluated, tmp_path):
    _, out = evaluated
    model = out / "models" / "maintainer" / "acme__widgets__gbdt.model"
    assert main(["extract", "--archive", ARCHIVE, "--out", str(tmp_path / "x"), "--role", "maintainer"]) == 0
    features = tmp_path / "x" / "features" / "maintainer" / "acme__widgets.csv"
    assert "MISSING" in features.read_text()
    assert main(["predict", "--model", str(model), "--features", str(features), "--output", str(tmp_path / "p.csv")]) == 0
    rows = read_csv(tmp_path / "p.csv")
    assert rows[0] == ["project_id", "pr_number", "predicted", "p_within_1_day", "p_day_to_week", "p_over_week"]
    assert len(rows) == len(read_csv(features))
    assert all(abs(sum(float(v) for v in r[3:]) - 1) < 1e-9 for r in rows[1:])
    knn = out / "models" / "maintainer" / "acme__widgets__knn.model"
    assert main(["predict", "--model", str(knn), "--features", str(features), "--output", str(tmp_path / "k.csv")]) == 0
    assert read_csv(tmp_path / "k.csv")[0][3] == "score_within_1_day"
    contributor = tmp_path / "c"
    assert main(["extract", "--archive", ARCHIVE, "--out", str(contributor), "--role", "contributor"]) == 0
    other = contributor / "features" / "contributor" / "acme__widgets.csv"
    # pruned maintainer features are all present for contributors, so cut a column out
    lines = [",".join(r[:4] + r[5:]) for r in read_csv(other)]
    (tmp_path / "cut.csv").write_text("\n".join(lines) + "\n")
    assert main(["predict", "--model", str(model), "--features", str(tmp_path / "cut.csv")]) == 14


def test_predict_with_prior_only_model(tmp_path):
    from prlatency.features import FeatureMatrix
    from prlatency.learn import save_model, train

    assert main(["extract", "--archive", ARCHIVE, "--out", str(tmp_path), "--role", "maintainer"]) == 0
    features = tmp_path / "features" / "maintainer" / "acme__gadgets.csv"
    m = FeatureMatrix.from_csv(features)
    save_model(train("gbdt", m, hp={"iterations": 0}), tmp_path / "prior.model")
    assert main(["predict", "--model", str(tmp_path / "prior.model"), "--features", str(features),
                 "--output", str(tmp_path / "p.csv")]) == 0
    majority = ["within_1_day", "day_to_week", "over_week"][int(max(set(m.y.tolist()), key=m.y.tolist().count))]
    assert {r[2] for r in read_csv(tmp_path / "p.csv")[1:]} == {majority}


def test_explain_outputs(tmp_path):
    cfg = fast_config(tmp_path)
    out = tmp_path / "o"
    assert main(["explain", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "explain.json").read_text())
    for role in ("maintainer", "contributor"):
        assert set(report["roles"][role]["projects"]) == {"acme/gadgets", "acme/widgets"}
        assert (out / f"feature_ranks_{role}.csv").is_file()
        assert (out / f"importance_{role}_acme__widgets.csv").is_file()
        assert read_csv(out / f"shapley_{role}_acme__gadgets.csv")[0][:3] == ["row", "feature", "class"]
    assert len(list(out.glob("impact_maintainer_acme__widgets_*.svg"))) == 2


def test_explain_seed_changes_only_stochastic_outputs(tmp_path):
    cfg = fast_config(tmp_path, roles=["maintainer"], kinds=["gbdt"])
    for seed in ("1", "2"):
        assert main(["explain", "--config", cfg, "--out", str(tmp_path / seed), "--seed", seed]) == 0
    a = json.loads((tmp_path / "1" / "explain.json").read_text())["roles"]["maintainer"]["projects"]
    b = json.loads((tmp_path / "2" / "explain.json").read_text())["roles"]["maintainer"]["projects"]
    assert a.keys() == b.keys()
    assert any(a[p]["importance"] != b[p]["importance"] for p in a)


def test_explain_missing_model_is_io_error(tmp_path):
    assert main(["explain", "--archive", ARCHIVE, "--out", str(tmp_path), "--model", str(tmp_path / "no.model")]) == 7


# -- suspects ------------------------------------------------------------------------


def test_suspects_lists_fast_helper(tmp_path):
    assert main(["suspects", "--archive", ARCHIVE, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "suspects.csv")
    assert rows[0] == ["login", "actor_id", "events", "events_per_day", "median_response_seconds", "sub_minute"]
    by_login = {r[0]: r for r in rows[1:]}
    assert by_login[FAST_HELPER[0]][5] == "yes"
    counts = [int(r[2]) for r in rows[1:]]
    assert counts == sorted(counts, reverse=True)


def test_suspects_of_empty_archive(tmp_path):
    EventArchive.open(tmp_path / "empty", create=True)
    assert main(["suspects", "--archive", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "suspects.csv")) == 1
