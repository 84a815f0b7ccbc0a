import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convtok.corpus import RESERVED_SURFACES, TaskToken
from convtok.tokenizer import (
    MARKER,
    UNK_ID,
    VocabSizeError,
    decode,
    encode,
    load_vocab,
    save_vocab,
    train_bpe,
)

SC, EP, NO, NC = TaskToken.SC, TaskToken.EP, TaskToken.NE_OPEN, TaskToken.NE_CLOSE

CORPUS = [
    ["hello", "there", EP, SC, "hi", EP],
    ["my", "name", "is", NO, "alexa", NC, EP],
    ["hello", "thank", "you", "for", "calling", NO, "geico", "insurance", NC, EP],
]


def test_first_merge_hand_run():
    # words "▁a a" x3: pairs (a,a) and (▁,a) both occur 3 times; (a,a) is lexicographically smaller
    base = 4 + 2
    vocab = train_bpe(["aa aa aa"], vocab_size=base + 5, protected=())
    assert vocab.merges[0] == ("a", "a")
    assert vocab.merges == (("a", "a"), (MARKER, "aa"))
    assert vocab.pieces[4:] == ("a", MARKER, "aa", MARKER + "aa")


def test_protected_single_piece():
    vocab = train_bpe(["hello [SC] hi"], 100, protected={"[SC]"})
    assert len(encode(vocab, [SC])) == 1


def test_determinism(tmp_path):
    a, b = train_bpe(CORPUS, 80), train_bpe(list(CORPUS), 80)
    assert a == b
    save_vocab(a, tmp_path / "a.vocab")
    save_vocab(b, tmp_path / "b.vocab")
    assert (tmp_path / "a.vocab").read_bytes() == (tmp_path / "b.vocab").read_bytes()


def test_reserved_ids():
    vocab = train_bpe(CORPUS, 80)
    assert vocab.pieces[:4] == ("<pad>", "<unk>", "<bos>", "<eos>")
    assert sorted(vocab.piece_ids.values()) == list(range(len(vocab)))
    assert RESERVED_SURFACES <= vocab.piece_ids.keys()


def test_round_trip_sentence():
    vocab = train_bpe(CORPUS, 80)
    items = ["hello", "there", EP, SC, "hi", EP]
    assert decode(vocab, encode(vocab, items)) == items


def test_ne_token_is_not_bracket_pieces():
    vocab = train_bpe(CORPUS + [["[", "NE", "]"]], 80)
    (ne_id,) = encode(vocab, [NO])
    assert ne_id not in encode(vocab, ["[", "NE", "]"])


def test_unknown_character():
    vocab = train_bpe(CORPUS, 80)
    ids = encode(vocab, ["héllo"])
    assert UNK_ID in ids


def test_decode_empty_and_out_of_range():
    vocab = train_bpe(CORPUS, 80)
    assert decode(vocab, []) == []
    with pytest.raises(IndexError):
        decode(vocab, [len(vocab)])


def test_vocab_too_small_names_minimum():
    with pytest.raises(VocabSizeError) as exc:
        train_bpe(CORPUS, 10)
    assert str(exc.value.minimum) in str(exc.value)


def test_protected_collision_with_base_char():
    with pytest.raises(ValueError, match="collide"):
        train_bpe(["abc"], 50, protected={"a"})


def test_save_load_bit_exact(tmp_path):
    vocab = train_bpe(CORPUS, 80)
    p1, p2 = tmp_path / "v1", tmp_path / "v2"
    save_vocab(vocab, p1)
    loaded = load_vocab(p1)
    assert loaded == vocab
    save_vocab(loaded, p2)
    assert hashlib.sha256(p1.read_bytes()).digest() == hashlib.sha256(p2.read_bytes()).digest()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad"
    p.write_text("nope\n")
    with pytest.raises(ValueError):
        load_vocab(p)


_word = st.text(alphabet="abcdefg'", min_size=1, max_size=8)
_item = st.one_of(_word, st.sampled_from(list(TaskToken)))
_corpus = st.lists(st.lists(_item, max_size=12), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(_corpus, st.integers(0, 60))
def test_atomicity_and_round_trip(corpus, extra):
    vocab = train_bpe(corpus, 4 + 4 + 9 + extra)
    for tok in TaskToken:
        assert len(encode(vocab, [tok])) == 1
    for items in corpus:
        assert decode(vocab, encode(vocab, items)) == items


@settings(max_examples=40, deadline=None)
@given(_corpus)
def test_monotone_coverage(corpus):
    lengths = []
    for size in (20, 30, 45, 80, 200):
        vocab = train_bpe(corpus, size)
        lengths.append([len(encode(vocab, items)) for items in corpus])
    for small, big in zip(lengths, lengths[1:]):
        assert all(b <= s for s, b in zip(small, big))
