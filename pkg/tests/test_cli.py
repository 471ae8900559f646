import json

import pytest

from cognlp.cli import main


def run(argv):
    return main([str(a) for a in argv])


def synth_args(out, sentences=25, delta=120.0, seed=3):
    return [
        "synth", "--out", out, "--task", "ner", "--sentences", sentences,
        "--subjects", 2, "--delta-trt", delta, "--seed", seed,
        "--entity-rate", 0.3,
    ]


def pipeline(tmp, seed=3):
    data = tmp / "data"
    feats = tmp / "feats"
    assert run(synth_args(data, seed=seed)) == 0
    assert run([
        "extract-gaze", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--fixations", data / "fixations.jsonl", "--out", feats / "gaze.jsonl",
        "--fixp-out", feats / "fixp.jsonl", "--seed", seed,
    ]) == 0
    assert run([
        "extract-eeg", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--fixations", data / "fixations.jsonl", "--eeg", data / "eeg.jsonl",
        "--out", feats / "eeg.jsonl", "--seed", seed,
    ]) == 0
    assert run([
        "assemble", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--gaze", feats / "gaze.jsonl", "--eeg", feats / "eeg.jsonl",
        "--out", feats / "dataset.jsonl", "--seed", seed,
    ]) == 0
    assert run([
        "assemble", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--out", feats / "baseline.jsonl", "--seed", seed,
    ]) == 0
    for name, ds in (("gaze", "dataset.jsonl"), ("base", "baseline.jsonl")):
        assert run([
            "train", "--dataset", feats / ds, "--out", tmp / "runs" / name,
            "--model", "tagger", "--folds", 5, "--ratios", "0.8,0.0,0.2",
            "--epochs", 2, "--seed", seed,
        ]) == 0
        assert run([
            "evaluate", "--dataset", feats / ds, "--run", tmp / "runs" / name,
            "--label", name, "--seed", seed,
        ]) == 0
    return data, feats


def test_end_to_end_pipeline(tmp_path, capsys):
    data, feats = pipeline(tmp_path)
    report = json.loads((tmp_path / "runs/gaze/report.json").read_text())
    assert "ner" in report["tasks"]
    assert report["tasks"]["ner"]["gaze"]["n_folds"] == 5
    preds = (tmp_path / "runs/gaze/predictions.jsonl").read_text().splitlines()
    assert len(preds) == 26  # header + one line per sentence
    assert run([
        "evaluate", "--dataset", feats / "dataset.jsonl",
        "--compare", f"{tmp_path}/runs/base,{tmp_path}/runs/gaze",
        "--rounds", 200, "--seed", 1,
    ]) == 0
    out = capsys.readouterr().out
    comparison = json.loads(out.strip().splitlines()[-1])
    assert 0.0 < comparison["p_value"] <= 1.0
    assert comparison["threshold"] == pytest.approx(0.01 / 12)


def test_validate_and_significance(tmp_path, capsys):
    data, feats = pipeline(tmp_path)
    capsys.readouterr()  # drop pipeline chatter
    assert run([
        "ingest-validate", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--fixations", data / "fixations.jsonl", "--eeg", data / "eeg.jsonl",
    ]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["sentences"] == 25
    assert report["fixations_without_eeg"] == 0
    assert run([
        "significance", "--dataset", feats / "baseline.jsonl",
        "--pred-a", tmp_path / "runs/base/predictions.jsonl",
        "--pred-b", tmp_path / "runs/gaze/predictions.jsonl",
        "--rounds", 100, "--seed", 0,
    ]) == 0
    sig = json.loads(capsys.readouterr().out)
    assert set(sig) == {"alpha", "n_hypotheses", "p_value", "stars", "threshold"}


def test_reruns_are_byte_identical(tmp_path):
    files = [
        "data/corpus.jsonl", "data/fixations.jsonl", "data/eeg.jsonl", "data/meta.json",
        "feats/gaze.jsonl", "feats/fixp.jsonl", "feats/eeg.jsonl",
        "feats/dataset.jsonl", "feats/baseline.jsonl",
        "runs/gaze/fold_plan.json", "runs/gaze/model_fold0.json",
        "runs/gaze/report.json", "runs/gaze/predictions.jsonl",
        "runs/base/model_fold4.json",
    ]
    pipeline(tmp_path)
    before = {rel: (tmp_path / rel).read_bytes() for rel in files}
    pipeline(tmp_path)  # rerun every stage in place, same config and seed
    for rel in files:
        assert (tmp_path / rel).read_bytes() == before[rel], f"{rel} differs on rerun"


def test_combined_report_with_significance(tmp_path, capsys):
    data, feats = pipeline(tmp_path)
    capsys.readouterr()
    assert run([
        "evaluate", "--dataset", feats / "baseline.jsonl",
        "--runs", f"baseline={tmp_path}/runs/base,gaze={tmp_path}/runs/gaze",
        "--rounds", 100, "--seed", 0, "--out", tmp_path / "combined.json",
    ]) == 0
    table = capsys.readouterr().out
    lines = [l for l in table.splitlines() if l.strip()]
    assert lines[-2].startswith("baseline") and lines[-1].startswith("gaze")
    payload = json.loads((tmp_path / "combined.json").read_text())
    gaze_cell = payload["tasks"]["ner"]["gaze"]
    assert "significance" in gaze_cell
    assert 0.0 < gaze_cell["significance"]["p_value"] <= 1.0
    assert "significance" not in payload["tasks"]["ner"]["baseline"]


def test_lexicon_commands(tmp_path, capsys):
    data, feats = pipeline(tmp_path)
    lex = tmp_path / "lexicon.json"
    assert run([
        "build-lexicon", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--gaze", feats / "gaze.jsonl", "--agg", "mean", "--out", lex, "--seed", 3,
    ]) == 0
    payload = json.loads(lex.read_text())
    assert payload["unknown_policy"] == "zeros+flag"
    assert payload["dims"][0] == "gaze/NFIX"
    assert run([
        "apply-lexicon", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--lexicon", lex, "--out", feats / "lexfeats.jsonl", "--seed", 3,
    ]) == 0
    coverage = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert coverage["unknown"] == 0  # same corpus covers itself
    assert run([
        "assemble", "--corpus", data / "corpus.jsonl", "--task", "ner",
        "--lex", feats / "lexfeats.jsonl", "--out", feats / "lexds.jsonl", "--seed", 3,
    ]) == 0


def test_mtl_command(tmp_path, capsys):
    data, feats = pipeline(tmp_path)
    assert run([
        "mtl", "--dataset", feats / "dataset.jsonl", "--out", tmp_path / "mtlrun",
        "--aux", "TRT,word_frequency", "--folds", 5, "--ratios", "0.8,0.0,0.2",
        "--epochs", 1, "--seed", 2, "--embed", 8, "--hidden", 8,
    ]) == 0
    report = json.loads((tmp_path / "mtlrun/mtl_report.json").read_text())
    assert set(report["mean"]) == {"main", "TRT", "word_frequency"}
    for head in report["mean"].values():
        assert 0.0 <= head["accuracy"] <= 100.0
        assert "majority_baseline" in head


def test_error_exit_code_and_record(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id":"s1","tokens":["a"],"labels":["I-PER"]}\n')
    code = run(["ingest-validate", "--corpus", bad, "--task", "ner"])
    assert code == 1
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "ValidationError"
    assert record["line"] == 1


def test_config_file_defaults(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"sentences": 7, "task": "ner", "subjects": 2}))
    out = tmp_path / "synthcfg"
    assert run(["--config", config, "synth", "--out", out, "--seed", 1]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["n_sentences"] == 7
    # explicit flag wins over config default
    assert run(["--config", config, "synth", "--out", tmp_path / "s2", "--sentences", 4, "--seed", 1]) == 0
    meta2 = json.loads((tmp_path / "s2" / "meta.json").read_text())
    assert meta2["n_sentences"] == 4
