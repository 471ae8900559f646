import json

import numpy as np
import pytest

from cognlp.datasets import Dataset, Instance, assemble
from cognlp.errors import ConfigError, ValidationError
from cognlp.ingest import Corpus, Sentence
from cognlp.models import (
    LogisticConfig,
    LogisticModel,
    PerceptronTagger,
    TaggerConfig,
    TrunkConfig,
    TrunkNet,
    predict,
    repair_bio,
    train_logistic,
    train_tagger,
)


def sentiment_corpus():
    return Corpus(
        "sentiment2",
        (
            Sentence("t1", ("good", "movie"), ("pos",)),
            Sentence("t2", ("bad", "film"), ("neg",)),
            Sentence("t3", ("great", "plot"), ("pos",)),
            Sentence("t4", ("awful", "acting"), ("neg",)),
        ),
    )


def all_ids(corpus):
    return [s.id for s in corpus.sentences]


def test_logistic_fits_separable_toy():
    corpus = sentiment_corpus()
    dataset = assemble(corpus)
    model = train_logistic(dataset, all_ids(corpus), LogisticConfig(lr=1.0, epochs=200))
    preds = model.predict(dataset.instances)
    assert preds == [i.label for i in dataset.instances]
    # monitored cross-entropy trends down
    history = model.history
    assert np.mean(history[len(history) // 2 :]) <= np.mean(history[: len(history) // 2])
    assert history[-1] < history[0]


def test_logistic_probabilities_sum_to_one():
    corpus = sentiment_corpus()
    dataset = assemble(corpus)
    model = train_logistic(dataset, all_ids(corpus), LogisticConfig(epochs=5))
    for inst in dataset.instances:
        assert abs(model.predict_proba(inst).sum() - 1.0) < 1e-9


def test_logistic_duplicated_training_set_same_decision_function():
    corpus = sentiment_corpus()
    doubled = Corpus(
        "sentiment2",
        corpus.sentences
        + tuple(Sentence(s.id + "d", s.tokens, s.labels) for s in corpus.sentences),
    )
    config = LogisticConfig(lr=0.5, epochs=600, l2=0.01, seed=0)
    m1 = train_logistic(assemble(corpus), all_ids(corpus), config)
    m2 = train_logistic(assemble(doubled), all_ids(doubled), config)
    w2 = {t: m2.weights[:, i] for i, t in enumerate(m2.vocab)}
    gap = max(abs(m1.weights[:, i] - w2[t]).max() for i, t in enumerate(m1.vocab))
    assert gap < 0.05
    probes = [
        Instance("p", tokens, "pos")
        for tokens in (("good",), ("awful",), ("movie", "plot"), ("film", "acting"), ("great", "good"))
    ]
    assert m1.predict(probes) == m2.predict(probes)


def test_logistic_errors_and_determinism():
    corpus = sentiment_corpus()
    dataset = assemble(corpus)
    with pytest.raises(ValidationError):
        train_logistic(dataset, [], LogisticConfig())
    config = LogisticConfig(epochs=20, seed=9)
    a = train_logistic(dataset, all_ids(corpus), config)
    b = train_logistic(dataset, all_ids(corpus), config)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    again = LogisticModel.from_json(json.loads(json.dumps(a.to_json())))
    assert again.predict(dataset.instances) == a.predict(dataset.instances)


def test_logistic_zero_cognitive_dims_match_baseline():
    corpus = sentiment_corpus()
    base = assemble(corpus)
    instances = tuple(
        Instance(i.sentence_id, i.tokens, i.label, np.zeros((2, 3)), np.zeros(3))
        for i in base.instances
    )
    padded = Dataset("sentiment2", ("g/a", "g/b", "g/c"), instances)
    config = LogisticConfig(epochs=30, seed=1)
    mb = train_logistic(base, all_ids(corpus), config)
    mp = train_logistic(padded, all_ids(corpus), config)
    assert predict(mb, base, all_ids(corpus)) == predict(mp, padded, all_ids(corpus))
    # the cognitive weight block never moved
    assert np.all(mp.weights[:, len(mp.vocab) :] == 0.0)


def ner_dataset(n=6):
    return Dataset(
        "ner",
        (),
        tuple(Instance(f"s{i}", ("a", "b", "c"), ("O", "B-PER", "O")) for i in range(n)),
    )


def test_tagger_memorizes_single_sentence():
    corpus = Corpus("ner", (Sentence("s1", ("John", "slept", "in", "Rome"), ("B-PER", "O", "O", "B-LOC")),))
    dataset = assemble(corpus)
    tagger = train_tagger(dataset, ["s1"], TaggerConfig(epochs=5, seed=0))
    assert predict(tagger, dataset, ["s1"]) == [("B-PER", "O", "O", "B-LOC")]


def test_tagger_all_o_corpus():
    dataset = Dataset(
        "ner", (), tuple(Instance(f"s{i}", ("x", "y"), ("O", "O")) for i in range(4))
    )
    tagger = train_tagger(dataset, [f"s{i}" for i in range(4)], TaggerConfig(epochs=2))
    assert predict(tagger, dataset, [f"s{i}" for i in range(4)]) == [("O", "O")] * 4


def test_tagger_zero_cognitive_bins_match_baseline():
    base = ner_dataset()
    ids = base.sentence_ids()
    padded = Dataset(
        "ner",
        ("g/x", "g/y"),
        tuple(
            Instance(i.sentence_id, i.tokens, i.label, np.zeros((3, 2)))
            for i in base.instances
        ),
    )
    config = TaggerConfig(epochs=3, seed=3)
    t_base = train_tagger(base, ids, config)
    t_pad = train_tagger(padded, ids, config)
    assert predict(t_base, base, ids) == predict(t_pad, padded, ids)
    assert sorted(t_base.weights) == sorted(t_pad.weights)


def test_tagger_deterministic_serialization():
    dataset = ner_dataset()
    ids = dataset.sentence_ids()
    a = train_tagger(dataset, ids, TaggerConfig(epochs=3, seed=7))
    b = train_tagger(dataset, ids, TaggerConfig(epochs=3, seed=7))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    again = PerceptronTagger.from_json(json.loads(json.dumps(a.to_json())))
    assert predict(again, dataset, ids) == predict(a, dataset, ids)
    with pytest.raises(ValidationError):
        train_tagger(dataset, [], TaggerConfig())


def test_repair_bio():
    assert repair_bio(("I-PER", "I-PER", "O", "I-LOC")) == ("B-PER", "I-PER", "O", "B-LOC")
    assert repair_bio(("B-PER", "I-LOC")) == ("B-PER", "B-LOC")
    assert repair_bio(("O", "B-X", "I-X")) == ("O", "B-X", "I-X")


def test_predict_contracts():
    dataset = ner_dataset()
    ids = dataset.sentence_ids()
    tagger = train_tagger(dataset, ids, TaggerConfig(epochs=2))
    assert predict(tagger, dataset, []) == []
    assert predict(tagger, dataset, ids) == predict(tagger, dataset, ids)
    other = Dataset("ner", ("g/x",), dataset.instances)
    with pytest.raises(ConfigError):
        predict(tagger, other, ids)


def numeric_gradient_check(net, ids, cog, targets, head, eps=1e-5):
    _, grads = net.forward_backward(ids, cog, targets, head)
    worst = 0.0

    def sweep(arr, grad):
        nonlocal worst
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + eps
            up = net.loss(ids, cog, targets, head)
            arr[idx] = old - eps
            down = net.loss(ids, cog, targets, head)
            arr[idx] = old
            numeric = (up - down) / (2 * eps)
            worst = max(worst, abs(numeric - grad[idx]) / max(abs(numeric) + abs(grad[idx]), 1e-8))

    sweep(net.embed, grads["embed"])
    sweep(net.w1, grads["w1"])
    sweep(net.b1, grads["b1"])
    for name, (w, b) in net.heads.items():
        gw, gb = grads["heads"][name]
        sweep(w, gw)
        sweep(b, gb)
    return worst


def test_trunknet_gradients_small_config():
    rng = np.random.default_rng(0)
    net = TrunkNet(
        [f"w{i}" for i in range(8)],
        3,
        {"main": 4, "aux": 3},
        TrunkConfig(embed_dim=4, hidden_dim=5, seed=1),
    )
    ids = net.token_ids(["w1", "w3", "w1", "w7"])
    cog = rng.normal(size=(4, 3))
    targets = np.array([0, 2, 1, 3])
    assert numeric_gradient_check(net, ids, cog, targets, "main") < 1e-4


def test_trunknet_inactive_head_zero_and_uniform_loss():
    net = TrunkNet(["a", "b"], 0, {"main": 4, "aux": 7}, TrunkConfig(embed_dim=3, hidden_dim=3))
    ids = net.token_ids(["a", "b"])
    targets = np.array([1, 2])
    _, grads = net.forward_backward(ids, None, targets, "main")
    assert np.all(grads["heads"]["aux"][0] == 0.0)
    assert np.all(grads["heads"]["aux"][1] == 0.0)
    net.heads["main"] = (np.zeros_like(net.heads["main"][0]), np.zeros_like(net.heads["main"][1]))
    assert net.loss(ids, None, targets, "main") == pytest.approx(np.log(4), abs=1e-12)
    with pytest.raises(ConfigError):
        net.loss(ids, None, targets, "missing")


def test_trunknet_parameter_count_formula():
    net = TrunkNet(
        [f"w{i}" for i in range(10)], 3, {"main": 4, "aux": 5},
        TrunkConfig(embed_dim=5, hidden_dim=6),
    )
    v, e, h, c = net.n_vocab, 5, 6, 3
    assert net.parameter_count() == v * e + (e + c) * h + h + (h * 4 + 4) + (h * 5 + 5)


def test_trunknet_shared_groups_independent_of_extras():
    base = TrunkNet(["a", "b"], 0, {"main": 3}, TrunkConfig(embed_dim=4, hidden_dim=5, seed=2))
    wider = TrunkNet(["a", "b"], 6, {"main": 3, "aux": 9}, TrunkConfig(embed_dim=4, hidden_dim=5, seed=2))
    assert np.array_equal(base.embed, wider.embed)
    assert np.array_equal(base.w1, wider.w1[:4])
    assert np.array_equal(base.heads["main"][0], wider.heads["main"][0])


def test_trunknet_serialization_roundtrip():
    net = TrunkNet(["a", "b", "c"], 2, {"main": 3}, TrunkConfig(embed_dim=3, hidden_dim=4, seed=5))
    again = TrunkNet.from_json(json.loads(json.dumps(net.to_json())))
    ids = net.token_ids(["a", "zzz", "c"])
    cog = np.ones((3, 2))
    assert np.array_equal(
        net.logits(ids, cog, "main"), again.logits(ids, cog, "main")
    )
