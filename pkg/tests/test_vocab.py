import pytest
from hypothesis import given
from hypothesis import strategies as st

from htrkit.errors import ConfigError, EncodingError, ParseError
from htrkit.vocab import (
    Alphabet,
    NgramVocab,
    build_alphabet,
    build_ngram_vocab,
    decode_ids,
    encode_unigrams,
    load_vocab,
    save_vocab,
)


def test_build_alphabet_two_chars():
    a = build_alphabet(["ab", "ba"])
    assert a.tokens == ("a", "b")
    assert a.id_of("a") == 1 and a.id_of("b") == 2
    assert a.blank_id == 0


def test_build_alphabet_sorted_distinct():
    a = build_alphabet(["better"])
    assert a.tokens == ("b", "e", "r", "t")


def test_build_alphabet_empty_inputs():
    with pytest.raises(ConfigError):
        build_alphabet([])
    with pytest.raises(ConfigError):
        build_alphabet([""])


def test_bigram_vocab_is_full_676():
    v = build_ngram_vocab(["anything at all"], 2)
    assert v.size == 676
    assert v.grams[0] == "aa" and v.grams[-1] == "zz"
    # corpus independent
    assert build_ngram_vocab([], 2).grams == v.grams


def test_trigram_topk_tie_break():
    # all four trigrams of "better" occur once; lexicographic tie-break
    v = build_ngram_vocab(["better"], 3, top_k=2)
    assert v.grams == ("bet", "ett")


def test_trigram_run_too_short():
    v = build_ngram_vocab(["ab"], 3, top_k=10)
    assert v.size == 0


def test_ngram_vocab_bad_n():
    with pytest.raises(ConfigError):
        build_ngram_vocab(["abc"], 5)
    with pytest.raises(ConfigError):
        build_ngram_vocab(["abc"], 1)


def test_topk_is_prefix_of_unbounded():
    corpus = ["the cat sat on the mat", "that hat is flat"]
    full = build_ngram_vocab(corpus, 3, top_k=10**9)
    for k in (1, 3, 7):
        small = build_ngram_vocab(corpus, 3, top_k=k)
        assert small.grams == full.grams[:k]
        assert set(small.grams) <= set(full.grams)


def test_counting_folds_case_and_skips_nonletters():
    v1 = build_ngram_vocab(["BetTer!"], 3, top_k=10)
    v2 = build_ngram_vocab(["better"], 3, top_k=10)
    assert v1.grams == v2.grams
    # windows never cross the non-letter boundary
    v = build_ngram_vocab(["ab-cd"], 3, top_k=10)
    assert v.size == 0


def test_encode_unigrams_better():
    a = build_alphabet(["better"])
    seq = encode_unigrams("better", a)
    assert seq.task == 1
    assert [a.token_of(i) for i in seq.ids] == list("better")


def test_encode_unigrams_empty():
    a = build_alphabet(["ab"])
    assert encode_unigrams("", a).ids == ()


def test_encode_unigrams_unknown_char_position():
    a = build_alphabet(["be"])
    with pytest.raises(EncodingError, match="position 1"):
        encode_unigrams("bé", a)


@given(st.text(alphabet="abcz .,", min_size=1))
def test_encode_round_trip(text):
    a = build_alphabet([text])
    seq = encode_unigrams(text, a)
    assert decode_ids(seq.ids, a) == text


def test_determinism_byte_identical(tmp_path):
    corpus = ["some words repeat some words", "other words too"]
    dumps = []
    for i in range(2):
        v = build_ngram_vocab(corpus, 3, top_k=5)
        p = tmp_path / f"v{i}.txt"
        save_vocab(v, p)
        dumps.append(p.read_bytes())
    assert dumps[0] == dumps[1]


def test_vocab_dump_format_and_round_trip(tmp_path):
    a = build_alphabet(["ab c"])
    p = tmp_path / "alpha.txt"
    save_vocab(a, p)
    lines = p.read_text().split("\n")
    assert lines[0] == "#blank=0 n=1"
    assert lines[1] == " "  # space token survives as its own line
    back = load_vocab(p)
    assert isinstance(back, Alphabet)
    assert back.tokens == a.tokens

    v = build_ngram_vocab(["better"], 3, top_k=3)
    p2 = tmp_path / "tri.txt"
    save_vocab(v, p2)
    back2 = load_vocab(p2)
    assert isinstance(back2, NgramVocab)
    assert back2.grams == v.grams and back2.n == 3


def test_load_vocab_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("nonsense\na\n")
    with pytest.raises(ParseError):
        load_vocab(p)
