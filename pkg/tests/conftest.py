import pytest

from cognlp.ingest import Corpus, FixationEvent, Sentence


def make_events(spec, subject="A", sid="s1"):
    """Build seq-ordered events from (word_index, duration) pairs."""
    return [
        FixationEvent(subject, sid, seq, w, float(dur))
        for seq, (w, dur) in enumerate(spec)
    ]


@pytest.fixture
def ner_corpus():
    return Corpus(
        task="ner",
        sentences=(
            Sentence("s1", ("John", "slept", "here"), ("B-PER", "O", "O")),
            Sentence("s2", ("Mary", "visited", "Rome"), ("B-PER", "O", "B-LOC")),
        ),
    )
