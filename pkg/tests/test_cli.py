"""Exit codes, file outputs, and determinism of the embproc command line."""

import csv
import io
import subprocess

import numpy as np
import pytest

from embproc import load_fitted, read_shard, read_word_vectors
from embproc.cli import _default_threads, run

from synthgen import cli_workspace


@pytest.fixture()
def workspace(tmp_path):
    return cli_workspace(tmp_path / "data"), tmp_path


def test_normalize_writes_named_shard_and_model(workspace, capsys):
    paths, tmp = workspace
    out = tmp / "run1"
    code = run(
        ["normalize", "--shard", str(paths["shards"][0]), "--pipeline", "zscore",
         "--out", str(out)]
    )
    assert code == 0
    assert (out / "l0.zscore.ceb").exists()
    assert (out / "model.npf").exists()
    summary = capsys.readouterr().out
    assert summary.startswith("normalize:")
    original = read_shard(paths["shards"][0])
    transformed = read_shard(out / "l0.zscore.ceb")
    fitted = load_fitted(out / "model.npf")
    expected = fitted.apply(original.matrix()).astype(np.float32)
    assert np.array_equal(transformed.matrix(), expected.astype(np.float64))
    assert transformed.layer == original.layer


def test_normalize_suffix_encodes_the_pipeline(workspace):
    paths, tmp = workspace
    out = tmp / "run2"
    code = run(
        ["normalize", "--shard", str(paths["shards"][1]), "--pipeline", "abtt:1,zscore",
         "--out", str(out)]
    )
    assert code == 0
    assert (out / "l1.abtt1.zscore.ceb").exists()


def test_normalize_bad_pipeline_is_usage_error(workspace, capsys):
    paths, tmp = workspace
    code = run(
        ["normalize", "--shard", str(paths["shards"][0]), "--pipeline", "bogus",
         "--out", str(tmp / "x")]
    )
    assert code == 1
    assert "bogus" in capsys.readouterr().err


def test_aggregate_outputs_and_determinism(workspace, capsys):
    paths, tmp = workspace
    args = ["aggregate", "--shard", str(paths["shards"][0]), "--min-contexts", "50",
            "--max-contexts", "200", "--seed", "42"]
    assert run(args + ["--out", str(tmp / "a")]) == 0
    assert run(args + ["--out", str(tmp / "b")]) == 0
    vec_a = (tmp / "a" / "vectors.txt").read_bytes()
    vec_b = (tmp / "b" / "vectors.txt").read_bytes()
    assert vec_a == vec_b
    report = (tmp / "a" / "aggregate_report.csv").read_text(encoding="utf-8")
    assert report.splitlines()[0] == "word,n_total,n_used,dropped"
    table = read_word_vectors(tmp / "a" / "vectors.txt")
    assert len(table) == 6
    assert capsys.readouterr().out.count("aggregate: kept 6 of 6") == 2


def test_aggregate_bad_band_is_data_error(workspace, capsys):
    paths, tmp = workspace
    code = run(
        ["aggregate", "--shard", str(paths["shards"][0]), "--min-contexts", "10",
         "--max-contexts", "5", "--out", str(tmp / "x")]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def aggregated_vectors(paths, tmp):
    out = tmp / "vecs"
    run(["aggregate", "--shard", str(paths["shards"][0]), "--out", str(out), "--quiet"])
    return out / "vectors.txt"


def test_eval_sim_writes_results(workspace, capsys):
    paths, tmp = workspace
    vectors = aggregated_vectors(paths, tmp)
    code = run(
        ["eval-sim", "--vectors", str(vectors), "--dataset", str(paths["sim"]),
         "--out", str(tmp / "sim")]
    )
    assert code == 0
    lines = (tmp / "sim" / "eval_sim.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "dataset,metric,value,n_used,n_skipped"
    fields = lines[1].split(",")
    assert fields[0] == "toysim" and fields[1] == "spearman"
    assert fields[3] == "5" and fields[4] == "1"


def test_eval_analogy_writes_results(workspace):
    paths, tmp = workspace
    vectors = aggregated_vectors(paths, tmp)
    code = run(
        ["eval-analogy", "--vectors", str(vectors), "--dataset", str(paths["analogy"]),
         "--out", str(tmp / "an"), "--quiet"]
    )
    assert code == 0
    lines = (tmp / "an" / "eval_analogy.csv").read_text(encoding="utf-8").splitlines()
    assert lines[1].split(",")[1] == "accuracy"


def test_eval_sim_missing_dataset_exits_two(workspace, capsys):
    paths, tmp = workspace
    vectors = aggregated_vectors(paths, tmp)
    code = run(
        ["eval-sim", "--vectors", str(vectors), "--dataset", "does_not_exist.tsv",
         "--out", str(tmp / "x")]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "does_not_exist.tsv" in err


def test_usage_errors_exit_one(workspace, capsys):
    paths, _ = workspace
    assert run([]) == 1
    assert run(["no-such-command"]) == 1
    assert run(["aggregate", "--shard", str(paths["shards"][0]), "--bogus-flag"]) == 1
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "normalize" in capsys.readouterr().out


def test_fmt_check_reports_all_shards(workspace, capsys):
    paths, _ = workspace
    shards = [str(p) for p in paths["shards"]]
    assert run(["fmt-check", "--shard", *shards]) == 0
    out = capsys.readouterr().out
    assert "2 shard(s) ok" in out
    assert "720 records" in out


def test_fmt_check_corrupted_shard_exits_two(workspace, capsys):
    paths, tmp = workspace
    whole = paths["shards"][0].read_bytes()
    bad = tmp / "cut.ceb"
    bad.write_bytes(whole[:-5])
    assert run(["fmt-check", "--shard", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "byte offset" in err


def test_variance_writes_csv_and_svg(workspace, capsys):
    paths, tmp = workspace
    shards = [str(p) for p in paths["shards"]]
    code = run(
        ["variance", "--shard", *shards, "--model", "toy", "--out", str(tmp / "var")]
    )
    assert code == 0
    lines = (tmp / "var" / "variance.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "model,layer,mean_var,max_var,min_var"
    assert len(lines) == 3
    assert lines[1].startswith("toy,0,")
    svg = (tmp / "var" / "variance.svg").read_text(encoding="utf-8")
    assert svg.count("<polyline") == 1


def test_probe_writes_ranking_and_histogram(workspace, capsys):
    paths, tmp = workspace
    shards = [str(p) for p in paths["shards"]]
    code = run(
        ["probe", "--shard", *shards, "--labels", str(paths["labels"]),
         "--epochs", "30", "--out", str(tmp / "probe")]
    )
    assert code == 0
    ranking = (tmp / "probe" / "ranking.csv").read_text(encoding="utf-8").splitlines()
    assert ranking[0] == "neuron,layer,importance"
    assert len(ranking) == 1 + 16
    hist = (tmp / "probe" / "histogram.csv").read_text(encoding="utf-8").splitlines()
    assert hist[0] == "layer,count"
    assert [row.split(",")[0] for row in hist[1:]] == ["0", "1"]
    assert (tmp / "probe" / "histogram.svg").exists()
    assert "salient" in capsys.readouterr().out


def test_pipeline_report_structure_and_determinism(workspace, capsys):
    paths, tmp = workspace
    shards = [str(p) for p in paths["shards"]]
    args = [
        "pipeline", "--shard", *shards,
        "--pipeline", "raw", "zscore", "abtt:1,zscore",
        "--sim-dataset", str(paths["sim"]),
        "--analogy-dataset", str(paths["analogy"]),
        "--quiet",
    ]
    assert run(args + ["--out", str(tmp / "p1")]) == 0
    assert run(args + ["--out", str(tmp / "p2")]) == 0
    report_a = (tmp / "p1" / "report.csv").read_bytes()
    report_b = (tmp / "p2" / "report.csv").read_bytes()
    assert report_a == report_b
    rows = list(csv.reader(io.StringIO(report_a.decode("utf-8"))))
    assert rows[0] == ["layer", "pipeline", "dataset", "metric", "value", "n_used", "n_skipped"]
    # 2 layers x 3 pipelines x (2 datasets + 1 average row)
    assert len(rows) == 1 + 2 * 3 * 3
    assert {row[1] for row in rows[1:]} == {"raw", "zscore", "abtt:1,zscore"}
    averages = [row for row in rows[1:] if row[2] == "average"]
    assert len(averages) == 6
    assert all(row[3] == "mean" for row in averages)


def test_pipeline_without_datasets_exits_two(workspace, capsys):
    paths, tmp = workspace
    code = run(
        ["pipeline", "--shard", str(paths["shards"][0]), "--pipeline", "raw",
         "--out", str(tmp / "x")]
    )
    assert code == 2
    assert "dataset" in capsys.readouterr().err


def test_pipeline_bad_spec_is_usage_error(workspace, capsys):
    paths, tmp = workspace
    code = run(
        ["pipeline", "--shard", str(paths["shards"][0]), "--pipeline", "raw", "junk",
         "--sim-dataset", str(paths["sim"]), "--out", str(tmp / "x")]
    )
    assert code == 1
    capsys.readouterr()


def test_quiet_suppresses_summary(workspace, capsys):
    paths, tmp = workspace
    code = run(
        ["fmt-check", "--shard", str(paths["shards"][0]), "--quiet"]
    )
    assert code == 0
    assert capsys.readouterr().out == ""


def test_threads_default_comes_from_environment(monkeypatch):
    monkeypatch.delenv("EMBPROC_THREADS", raising=False)
    assert _default_threads() == 1
    monkeypatch.setenv("EMBPROC_THREADS", "4")
    assert _default_threads() == 4
    monkeypatch.setenv("EMBPROC_THREADS", "0")
    assert _default_threads() == 1
    monkeypatch.setenv("EMBPROC_THREADS", "many")
    assert _default_threads() == 1


def test_console_script_entry_point(workspace):
    paths, _ = workspace
    proc = subprocess.run(
        ["embproc", "fmt-check", "--shard", str(paths["shards"][0])],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "ok" in proc.stdout
