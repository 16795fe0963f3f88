import json

import numpy as np
import pytest

from cascademl.cli import EXIT_CONFIG, EXIT_IO, EXIT_NO_FEATURES, build_parser, main, parse_config
from cascademl.datatools import load_csv, write_csv
from cascademl.errors import ValidationError
from conftest import make_tree, rank_k_data


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


NAS_CONFIG = {
    "schema_version": 1,
    "seed": 42,
    "search": {"layers": 2, "pca_variance": [0.99, 0.9]},
    "train": {"epochs": 30, "batch_size": 32, "learn_rate": 0.01, "es_patience": 5},
}


@pytest.mark.parametrize("command", ["split", "subsample", "select", "nas", "report"])
def test_help_lists_defaults(command, capsys):
    assert main([command, "--help"]) == 0
    out = capsys.readouterr().out
    assert "--" in out
    if command in ("split", "nas"):
        assert "default" in out


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="unknown config keys"):
        parse_config({"schema_version": 1, "bogus": 1})
    with pytest.raises(ValidationError, match="unknown keys in 'train'"):
        parse_config({"train": {"epochz": 3}})
    with pytest.raises(ValidationError, match="schema_version"):
        parse_config({"schema_version": 99})


def test_split_command(tmp_path, capsys):
    src = make_tree(tmp_path / "src", {"a": 10, "b": 6})
    assert main(["split", "--data-dir", str(src), "--dest", str(tmp_path / "o"), "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "a" in out and "7" in out
    assert len(list((tmp_path / "o" / "train" / "a").iterdir())) == 7
    assert len(list((tmp_path / "o" / "test" / "b").iterdir())) == 6 - 4 - 0


def test_split_bad_ratios_exit_2(tmp_path, capsys):
    src = make_tree(tmp_path / "src", {"a": 3})
    code = main(["split", "--data-dir", str(src), "--dest", str(tmp_path / "o"),
                 "--train", "0.5", "--val", "0.2", "--test", "0.2", "--seed", "1"])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "0.5" in err and "0.2" in err
    assert not (tmp_path / "o").exists()


def test_split_nonempty_dest_exit_1(tmp_path):
    src = make_tree(tmp_path / "src", {"a": 3})
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / "f").write_text("x")
    assert main(["split", "--data-dir", str(src), "--dest", str(tmp_path / "o"), "--seed", "1"]) == EXIT_IO


def test_subsample_command(tmp_path):
    src = make_tree(tmp_path / "src", {"a": 10, "b": 4})
    assert main(["subsample", "--data-dir", str(src), "--dest", str(tmp_path / "full"),
                 "--fraction", "1.0", "--seed", "3"]) == 0
    assert len(list((tmp_path / "full" / "b").iterdir())) == 4
    assert main(["subsample", "--data-dir", str(src), "--dest", str(tmp_path / "half"),
                 "--fraction", "0.5", "--seed", "3"]) == 0
    assert len(list((tmp_path / "half" / "a").iterdir())) == 5
    assert main(["subsample", "--data-dir", str(src), "--dest", str(tmp_path / "z"),
                 "--fraction", "0", "--seed", "3"]) == EXIT_CONFIG


def _variance_fixture(tmp_path):
    signs = np.array([1.0, -1.0, 1.0, -1.0])
    X = np.column_stack([signs * np.sqrt(v) for v in (0.0, 1.0, 2.0, 3.0)])
    p = tmp_path / "in.csv"
    write_csv(p, X, ["v0", "v1", "v2", "v3"], np.array(["a", "b", "a", "b"]), "label")
    return p


def test_select_keep_all_is_identity(tmp_path):
    src = _variance_fixture(tmp_path)
    cfg = write_json(tmp_path / "c.json", {"selectors": [{"kind": "adaptive_variance", "percentile": 0}]})
    assert main(["select", "--in", str(src), "--label", "label", "--config", str(cfg),
                 "--out", str(tmp_path / "o.csv")]) == 0
    assert (tmp_path / "o.csv").read_bytes() == src.read_bytes()


def test_select_avt_median(tmp_path, capsys):
    src = _variance_fixture(tmp_path)
    cfg = write_json(tmp_path / "c.json", {"selectors": [{"kind": "adaptive_variance", "percentile": 50}]})
    assert main(["select", "--in", str(src), "--label", "label", "--config", str(cfg),
                 "--out", str(tmp_path / "o.csv")]) == 0
    assert load_csv(tmp_path / "o.csv", "label").feature_names == ["v2", "v3"]
    assert "2\tv2" in capsys.readouterr().out


def test_select_mixed_pipeline_and_errors(tmp_path):
    src = _variance_fixture(tmp_path)
    mixed = {"selectors": [
        {"kind": "adaptive_variance", "percentile": 1.5},
        {"kind": "rank_aggregated", "k": 2, "methods": [
            {"kind": "select_k_best", "k": 2, "score_fn": "mutual_info"},
            {"kind": "select_k_best", "k": 2, "score_fn": "f_classif"},
        ]},
    ]}
    out = tmp_path / "o.csv"
    assert main(["select", "--in", str(src), "--label", "label",
                 "--config", str(write_json(tmp_path / "m.json", mixed)), "--out", str(out)]) == 0
    assert len(load_csv(out, "label").feature_names) == 2
    too_many = {"selectors": [{"kind": "select_k_best", "k": 9, "score_fn": "f_classif"}]}
    assert main(["select", "--in", str(src), "--label", "label",
                 "--config", str(write_json(tmp_path / "k.json", too_many)), "--out", str(out)]) == EXIT_CONFIG
    drop_all = {"selectors": [{"kind": "variance_threshold", "threshold": 100.0}]}
    assert main(["select", "--in", str(src), "--label", "label",
                 "--config", str(write_json(tmp_path / "d.json", drop_all)), "--out", str(out)]) == EXIT_NO_FEATURES


def test_nas_rank5_width(tmp_path, capsys):
    X, y = rank_k_data(n=300, dim=50, k=5, seed=1)
    train = tmp_path / "t.csv"
    write_csv(train, X, [f"f{i}" for i in range(50)], y, "y")
    cfg = write_json(tmp_path / "c.json", {"seed": 1, "search": {"layers": 1, "pca_variance": 0.95},
                                           "train": {"epochs": 2, "es_patience": 2}})
    code = main(["nas", "--train", str(train), "--label", "y", "--config", str(cfg),
                 "--out-model", str(tmp_path / "m.cmnet"), "--report-dir", str(tmp_path / "r")])
    assert code == 0
    assert (tmp_path / "r" / "widths.tsv").read_text().splitlines()[1].split("\t")[1] == "5"
    assert "1\t5" in capsys.readouterr().out


def test_nas_scalar_vs_list_threshold(tmp_path):
    X, y = rank_k_data(n=200, dim=20, k=4, seed=2)
    train = tmp_path / "t.csv"
    write_csv(train, X, [f"f{i}" for i in range(20)], y, "y")
    outs = []
    for tag, pv in (("s", "0.9"), ("l", "0.9,0.9")):
        assert main(["nas", "--train", str(train), "--label", "y", "--seed", "3", "--layers", "2",
                     "--pca-variance", pv, "--epochs", "5",
                     "--out-model", str(tmp_path / f"{tag}.cmnet"), "--report-dir", str(tmp_path / tag)]) == 0
        outs.append((tmp_path / tag / "widths.tsv").read_text())
    assert outs[0] == outs[1]


def test_nas_errors(tmp_path):
    X, y = rank_k_data(n=50, dim=5, k=2, seed=3)
    train = tmp_path / "t.csv"
    write_csv(train, X, [f"f{i}" for i in range(5)], y, "y")
    base = ["nas", "--train", str(train), "--out-model", str(tmp_path / "m.cmnet"), "--report-dir", str(tmp_path / "r")]
    assert main(base + ["--label", "nope", "--seed", "1"]) == EXIT_CONFIG
    assert main(base + ["--label", "y"]) == EXIT_CONFIG  # no seed anywhere
    bad = write_json(tmp_path / "b.json", {"seed": 1, "search": {"pca_variance": 2.0}})
    assert main(base + ["--label", "y", "--config", str(bad)]) == EXIT_CONFIG


def test_report_perfect_classifier_and_determinism(tmp_path, gaussian_csvs):
    train, val = gaussian_csvs
    cfg = write_json(tmp_path / "c.json", NAS_CONFIG)
    model = tmp_path / "m.cmnet"
    assert main(["nas", "--train", str(train), "--val", str(val), "--label", "label", "--config", str(cfg),
                 "--out-model", str(model), "--report-dir", str(tmp_path / "r")]) == 0
    for out in ("o1", "o2"):
        assert main(["report", "--model", str(model), "--data", str(val), "--label", "label",
                     "--out-dir", str(tmp_path / out), "--history", str(tmp_path / "r" / "history.json")]) == 0
    for name in ("confusion.svg", "confusion.txt", "history.svg"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()

    # perfectly separable fixture: each class far from the other
    Xp = np.array([[-10.0, -10.0], [-11.0, -9.0], [12.0, 11.0], [10.0, 13.0]])
    perfect = tmp_path / "perfect.csv"
    write_csv(perfect, Xp, ["x0", "x1"], np.array(["neg", "neg", "pos", "pos"]), "label")
    assert main(["report", "--model", str(model), "--data", str(perfect), "--label", "label",
                 "--out-dir", str(tmp_path / "p")]) == 0
    text = (tmp_path / "p" / "confusion.txt").read_text()
    assert "2 (100.0%)" in text and text.count("0 (0.0%)") == 2


def test_report_width_mismatch(tmp_path, gaussian_csvs):
    train, val = gaussian_csvs
    cfg = write_json(tmp_path / "c.json", dict(NAS_CONFIG, train={"epochs": 1, "es_patience": 1}))
    model = tmp_path / "m.cmnet"
    assert main(["nas", "--train", str(train), "--label", "label", "--config", str(cfg),
                 "--out-model", str(model), "--report-dir", str(tmp_path / "r")]) == 0
    wide = tmp_path / "w.csv"
    write_csv(wide, np.ones((2, 3)), ["a", "b", "c"], np.array(["neg", "pos"]), "label")
    assert main(["report", "--model", str(model), "--data", str(wide), "--label", "label",
                 "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_parser_builds():
    assert build_parser().prog == "cascademl"
