from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshqs.errors import ConfigurationError, PreconditionError
from meshqs.hypotheses import Hypothesis, HypothesisKind, ItemKind
from meshqs.tokenizer import (
    BOS, EOS, FIRST_MERGE_ID, N_CONTROL, PAD, SEP, TokenSequence, Tokenizer, Vocab, pad_batch, train_bpe,
)


def brute_first_merge(corpus):
    """Count every adjacent byte pair inside space-split words by hand."""
    counts = Counter()
    for text in corpus:
        for k, w in enumerate(text.split(" ")):
            b = ((" " if k else "") + w).encode()
            for i in range(len(b) - 1):
                counts[(b[i : i + 1], b[i + 1 : i + 2])] += 1
    best = max(counts.values())
    return min(p for p, v in counts.items() if v == best)


def test_first_merge_aaab():
    vocab = train_bpe(["aaab"], FIRST_MERGE_ID + 1)
    assert len(vocab.merges) == 1
    a, b = vocab.merges[0]
    assert (vocab.token_bytes[a], vocab.token_bytes[b]) == (b"a", b"a")


@pytest.mark.parametrize("corpus", [["hello world", "yellow wood"], ["ab ab ba", "ba"], ["xyz"]])
def test_first_merge_matches_pair_count(corpus):
    vocab = train_bpe(corpus, FIRST_MERGE_ID + 1)
    a, b = vocab.merges[0]
    assert (vocab.token_bytes[a], vocab.token_bytes[b]) == brute_first_merge(corpus)


@pytest.mark.parametrize("size", [0, 5, FIRST_MERGE_ID])
def test_vocab_size_too_small(size):
    with pytest.raises(PreconditionError):
        train_bpe(["abc"], size)


def test_empty_corpus():
    with pytest.raises(PreconditionError):
        train_bpe([], 300)
    with pytest.raises(PreconditionError):
        train_bpe(["", "   "], 300)


def test_controls_reserved(small_tokenizer):
    v = small_tokenizer.vocab
    assert (BOS, EOS, SEP, PAD) == (0, 1, 2, 3)
    assert all(a >= N_CONTROL and b >= N_CONTROL for a, b in v.merges)
    ids = small_tokenizer.encode_items(["data engineer", "nurse"]).ids
    assert [i for i in ids if i < N_CONTROL] == [BOS, SEP, EOS]
    assert sorted(v.token_to_id().values()) == list(range(v.size))


def test_encode_single_and_pair(small_tokenizer):
    tok = small_tokenizer
    one = tok.encode_items(["chef"]).ids
    assert one[0] == BOS and one[-1] == EOS and SEP not in one
    two = tok.encode_items(["chef", "nurse"]).ids
    k = two.index(SEP)
    assert two[1:k] == tuple(tok.vocab.encode_text("chef"))
    assert two[k + 1 : -1] == tuple(tok.vocab.encode_text("nurse"))


def test_prefix_stability(small_tokenizer):
    a = small_tokenizer.encode_items(["data engineer"]).ids
    ab = small_tokenizer.encode_items(["data engineer", "head chef"]).ids
    assert ab[: len(a) - 1] == a[:-1]


def test_roundtrip_items(small_tokenizer):
    ids = small_tokenizer.encode_items(["a", "b"]).ids
    assert small_tokenizer.decode_items(ids) == ["a", "b"]
    assert small_tokenizer.decode(ids) == "a <sep> b"


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=30).map(lambda s: " ".join(s.split())).filter(bool))
def test_roundtrip_any_unicode(small_tokenizer, text):
    ids = small_tokenizer.vocab.encode_text(text)
    assert small_tokenizer.vocab.decode_ids(ids) == text


def test_encode_hypothesis(small_tokenizer):
    h = Hypothesis(HypothesisKind.K4, (("chef", ItemKind.QUERY), ("head chef", ItemKind.TITLE)))
    seq = small_tokenizer.encode_hypothesis(h)
    assert all(seq.mask) and PAD not in seq.ids


def test_deterministic_serialization(tmp_path):
    corpus = ["data engineer sydney", "nurse", "data analyst"] * 4
    a = train_bpe(corpus, 300).dumps()
    b = train_bpe(corpus, 300).dumps()
    assert a == b
    v = Vocab.loads(a)
    assert v.dumps() == a
    (tmp_path / "v.txt").write_text(a)
    assert Tokenizer.load(tmp_path / "v.txt").vocab.merges == v.merges


def test_corrupt_vocab_rejected():
    text = train_bpe(["abab"], 263).dumps().replace("6162", "6163")
    with pytest.raises(ValueError):
        Vocab.loads(text)


def test_untrained_tokenizer_errors():
    with pytest.raises(ConfigurationError):
        Tokenizer().encode_items(["x"])


class TestPadBatch:
    def test_pad(self):
        (out,) = pad_batch([TokenSequence.of([0, 7, 1])], 5)
        assert out.mask == (True, True, True, False, False)
        assert out.ids[3:] == (PAD, PAD)

    def test_empty(self):
        assert pad_batch([], 4) == []

    def test_exact_length_unchanged(self):
        s = TokenSequence.of([0, 5, 6, 7, 1])
        assert pad_batch([s], 5) == [s]

    def test_too_short(self):
        with pytest.raises(PreconditionError):
            pad_batch([TokenSequence.of([0, 1, 2])], 2)
