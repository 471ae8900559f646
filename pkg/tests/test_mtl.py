import numpy as np
import pytest

from cognlp.datasets import Dataset, Instance
from cognlp.errors import ConfigError
from cognlp.models import TrunkConfig
from cognlp.mtl import (
    AuxTaskSpec,
    FrequencyLexicon,
    MultitaskModel,
    TaskData,
    evaluate_multitask,
    main_task_data,
    make_aux_targets,
    train_multitask,
)


def random_ner_dataset(n=12, seed=0, manifest=("gaze/TRT", "gaze/NFIX")):
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n):
        tokens = tuple(rng.choice(["aa", "bb", "cc", "dd", "ee"], size=4))
        tags = tuple(rng.choice(["O", "B-PER"], size=4))
        feats = rng.random((4, len(manifest))) if manifest else None
        instances.append(Instance(f"s{i}", tokens, tags, feats))
    return Dataset("ner", tuple(manifest), tuple(instances))


def test_make_aux_targets_binning():
    dataset = Dataset(
        "ner",
        ("gaze/TRT",),
        (Instance("a", ("x", "y", "z"), ("O", "O", "O"), np.array([[0.0], [0.73], [1.0]])),),
    )
    targets = make_aux_targets(dataset, AuxTaskSpec("TRT", n_bins=10))
    assert list(targets["a"]) == [0, 7, 9]


def test_make_aux_targets_constant_feature_all_zero():
    dataset = Dataset(
        "ner",
        ("gaze/TRT",),
        (Instance("a", ("x", "y"), ("O", "O"), np.full((2, 1), 0.5)),),
    )
    targets = make_aux_targets(dataset, AuxTaskSpec("TRT", n_bins=10))
    assert list(targets["a"]) == [0, 0]


def test_make_aux_targets_frequency_and_oov():
    dataset = Dataset(
        "ner", (), (Instance("a", ("the", "XYZZY", "the"), ("O", "O", "O")),)
    )
    freq = FrequencyLexicon({"the": 100})
    targets = make_aux_targets(dataset, AuxTaskSpec("word_frequency", n_bins=10), freq=freq)
    assert list(targets["a"]) == [9, 0, 9]  # log10(100) max, OOV count 1 -> lowest
    with pytest.raises(ConfigError):
        make_aux_targets(dataset, AuxTaskSpec("word_frequency"))


def test_make_aux_targets_combined_band_and_errors():
    manifest = ("eeg/alpha1", "eeg/alpha2")
    values = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
    dataset = Dataset("ner", manifest, (Instance("a", ("x", "y", "z"), ("O", "O", "O"), values),))
    targets = make_aux_targets(dataset, AuxTaskSpec("EEG_a", n_bins=4))
    assert list(targets["a"]) == [0, 3, 2]  # means 0, 1, 0.5
    with pytest.raises(ConfigError):
        make_aux_targets(dataset, AuxTaskSpec("EEG_t"))
    with pytest.raises(ConfigError):
        make_aux_targets(dataset, AuxTaskSpec("GPT"))


def test_aux_target_histogram_is_complete():
    dataset = random_ner_dataset(8, seed=2)
    spec = AuxTaskSpec("TRT", n_bins=5)
    targets = make_aux_targets(dataset, spec)
    n_tokens = sum(len(i.tokens) for i in dataset.instances)
    flat = np.concatenate(list(targets.values()))
    assert flat.size == n_tokens
    assert np.all((0 <= flat) & (flat < 5))
    assert np.bincount(flat, minlength=5).sum() == n_tokens


def test_frequency_lexicon_parsing():
    lex = FrequencyLexicon.from_lines(["the\t100", "cat\t3", ""])
    assert lex.count("THE") == 100
    assert lex.count("dog") == 1
    with pytest.raises(Exception):
        FrequencyLexicon.from_lines(["the 100"])
    built = FrequencyLexicon.from_corpus_tokens(["The", "the", "cat"])
    assert built.count("the") == 2


def test_zero_weight_aux_is_bitwise_noop():
    dataset = random_ner_dataset()
    ids = dataset.sentence_ids()
    config = TrunkConfig(embed_dim=4, hidden_dim=5, seed=3)
    single = train_multitask(dataset, ids, [], net_config=config, epochs=2, seed=3)
    zeroed = train_multitask(
        dataset, ids, [AuxTaskSpec("TRT", weight=0.0)], net_config=config, epochs=2, seed=3
    )
    assert np.array_equal(single.net.embed, zeroed.net.embed)
    assert np.array_equal(single.net.w1, zeroed.net.w1)
    assert np.array_equal(single.net.b1, zeroed.net.b1)
    assert np.array_equal(single.net.heads["main"][0], zeroed.net.heads["main"][0])
    assert np.array_equal(single.net.heads["main"][1], zeroed.net.heads["main"][1])


def test_duplicated_main_equals_doubled_sampling():
    dataset = random_ner_dataset()
    ids = dataset.sentence_ids()
    config = TrunkConfig(embed_dim=4, hidden_dim=5, seed=3)
    main = main_task_data(dataset)
    duplicated = train_multitask(
        dataset,
        ids,
        [],
        net_config=config,
        epochs=2,
        seed=3,
        extra_tasks=[TaskData("main", main.classes, main.targets, 1.0)],
    )
    doubled = train_multitask(dataset, ids, [], net_config=config, epochs=4, seed=3)
    assert np.array_equal(duplicated.net.embed, doubled.net.embed)
    assert np.array_equal(duplicated.net.w1, doubled.net.w1)
    assert np.array_equal(duplicated.net.heads["main"][0], doubled.net.heads["main"][0])


def test_role_swap_feature_as_main():
    dataset = random_ner_dataset()
    ids = dataset.sentence_ids()
    model = train_multitask(
        dataset,
        ids,
        [AuxTaskSpec("NFIX", n_bins=4)],
        net_config=TrunkConfig(embed_dim=4, hidden_dim=4, seed=1),
        epochs=1,
        seed=1,
        main_source="TRT",
    )
    assert set(model.tasks) == {"main", "NFIX"}
    scores = evaluate_multitask(
        dataset=dataset,
        model=model,
        ids=ids,
        aux_specs=[AuxTaskSpec("NFIX", n_bins=4)],
        main_source="TRT",
    )
    assert set(scores) == {"main", "NFIX"}
    assert 0.0 <= scores["main"]["accuracy"] <= 100.0


def test_evaluate_reports_majority_and_perfect_accuracy():
    dataset = random_ner_dataset(8, seed=5)
    ids = dataset.sentence_ids()
    model = train_multitask(
        dataset, ids, [], net_config=TrunkConfig(embed_dim=4, hidden_dim=4, seed=2),
        epochs=1, seed=2,
    )
    scores = evaluate_multitask(model, dataset, ids)
    entry = scores["main"]
    assert 0.0 <= entry["accuracy"] <= 100.0
    assert 0.0 <= entry["majority_baseline"] <= 100.0
    assert "accuracy_excluding_o" in entry
    # a model that memorizes a single sentence reaches 100 on it
    tiny = Dataset("ner", (), (Instance("s0", ("a", "b"), ("B-PER", "O")),))
    memorizer = train_multitask(
        tiny, ("s0",), [], net_config=TrunkConfig(embed_dim=8, hidden_dim=8, seed=0),
        epochs=60, lr=0.5, seed=0,
    )
    assert evaluate_multitask(memorizer, tiny, ("s0",))["main"]["accuracy"] == 100.0
    with pytest.raises(ConfigError):
        evaluate_multitask(model, dataset, ids, [AuxTaskSpec("TRT")])


def test_sentiment_broadcast_and_neutral_mode():
    instances = tuple(
        Instance(f"s{i}", ("w1", "w2"), label)
        for i, label in enumerate(["pos", "neu", "neg"])
    )
    dataset = Dataset("sentiment3", (), instances)
    main = main_task_data(dataset)
    assert main.classes == ("neg", "neu", "pos")
    assert list(main.targets["s0"]) == [2, 2]
    binary = main_task_data(dataset, label_mode="neutral-vs-rest")
    assert binary.classes == ("NEUTRAL", "NOT-NEUTRAL")
    assert list(binary.targets["s1"]) == [0, 0]
    assert list(binary.targets["s2"]) == [1, 1]
    with pytest.raises(ConfigError):
        main_task_data(Dataset("relclass", (), ()), label_mode="task")


def test_multitask_model_roundtrip():
    import json

    dataset = random_ner_dataset(6, seed=4)
    ids = dataset.sentence_ids()
    model = train_multitask(
        dataset, ids, [AuxTaskSpec("TRT", n_bins=4)],
        net_config=TrunkConfig(embed_dim=3, hidden_dim=3, seed=4), epochs=1, seed=4,
    )
    again = MultitaskModel.from_json(json.loads(json.dumps(model.to_json())))
    assert again.predict_tokens(dataset, ids) == model.predict_tokens(dataset, ids)
