import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modnmt.tokenizer import (
    BOS,
    EOS,
    EOW,
    PAD,
    SPECIALS,
    UNK,
    TokenizerError,
    Vocabulary,
    learn_bpe,
    normalize,
)


class TestNormalize:
    def test_lowercase_and_collapse(self):
        assert normalize("Hello   WORLD") == "hello world"

    def test_punctuation_spacing(self):
        assert normalize("a,b.") == "a , b ."

    def test_nfc(self):
        # e + combining acute composes to a single codepoint
        assert normalize("é") == "é"

    def test_idempotent_on_cipher_text(self):
        line = "α 7 щ z"
        assert normalize(line) == line


class TestLearnBpe:
    def test_first_merge_on_repeated_pair(self):
        vocab = learn_bpe(["abab"], "T", 12)
        assert vocab.merge_table[0] == ("a", "b")

    def test_charset_size_means_no_merges(self):
        lines = ["ab ba"]
        charset = {"a", "b", EOW}
        vocab = learn_bpe(lines, "T", len(charset) + 4)
        assert vocab.merge_table == []
        assert set(vocab.tokens) == set(SPECIALS) | charset

    def test_repeated_char_merges_shrink_encoding(self):
        vocab = learn_bpe(["aaaa"], "T", 10)
        assert vocab.merge_table[0] == ("a", "a")
        no_merge = learn_bpe(["aaaa"], "T", 6)
        assert len(vocab.encode("aaaa").ids) < len(no_merge.encode("aaaa").ids)

    def test_stops_below_frequency_two(self):
        # every adjacent pair occurs once; no merge is learned
        vocab = learn_bpe(["abcd"], "T", 50)
        assert vocab.merge_table == []

    def test_deterministic_tie_break(self):
        lines = ["xy zw xy zw"]
        a = learn_bpe(lines, "T", 20)
        b = learn_bpe(lines, "T", 20)
        assert a.tokens == b.tokens and a.merge_table == b.merge_table

    def test_empty_corpus_rejected(self):
        with pytest.raises(TokenizerError, match="empty"):
            learn_bpe([], "T", 10)

    def test_target_below_inventory_rejected(self):
        with pytest.raises(TokenizerError):
            learn_bpe(["abcdefgh"], "T", 5)


@pytest.fixture(scope="module")
def small_vocab():
    lines = ["ab ab cd", "ab cd cd", "a b c d"]
    return learn_bpe(lines, "T", 16)


class TestEncode:
    def test_empty_string(self, small_vocab):
        assert small_vocab.encode("").ids == [BOS, EOS]

    def test_single_known_char(self, small_vocab):
        ids = small_vocab.encode("a").ids
        assert ids[0] == BOS and ids[-1] == EOS
        assert all(i not in (PAD, UNK) for i in ids[1:-1])

    def test_unknown_char_maps_to_unk(self, small_vocab):
        assert UNK in small_vocab.encode("q").ids

    def test_specials_fixed_ids(self, small_vocab):
        assert small_vocab.tokens[:4] == SPECIALS
        assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)


class TestDecode:
    def test_bos_eos_only(self, small_vocab):
        assert small_vocab.decode([BOS, EOS]) == ""

    def test_unk_placeholder(self, small_vocab):
        out = small_vocab.decode([BOS, UNK, EOS])
        assert "<unk>" in out

    def test_round_trip_corpus_lines(self, small_vocab):
        for line in ["ab ab cd", "a b c d", "ab cd"]:
            assert small_vocab.decode(small_vocab.encode(line).ids) == line

    def test_out_of_range_id(self, small_vocab):
        with pytest.raises(TokenizerError, match="out of range"):
            small_vocab.decode([len(small_vocab.tokens)])

    def test_pad_stripped(self, small_vocab):
        ids = small_vocab.encode("ab").ids + [PAD, PAD]
        assert small_vocab.decode(ids) == "ab"


@given(st.lists(st.text(alphabet="abcd", min_size=1, max_size=6), min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_round_trip_property(words):
    line = normalize(" ".join(words))
    vocab = learn_bpe([line], "T", 40)
    assert vocab.decode(vocab.encode(line).ids) == line


class TestSerialization:
    def test_round_trip(self, small_vocab, tmp_path):
        path = tmp_path / "vocab.txt"
        small_vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.tokens == small_vocab.tokens
        assert loaded.merge_table == small_vocab.merge_table
        assert loaded.language == small_vocab.language
        assert loaded.content_hash() == small_vocab.content_hash()

    def test_loaded_vocab_encodes_identically(self, small_vocab, tmp_path):
        path = tmp_path / "vocab.txt"
        small_vocab.save(path)
        loaded = Vocabulary.load(path)
        for line in ["ab cd", "a q b"]:
            assert loaded.encode(line).ids == small_vocab.encode(line).ids

    def test_version_check(self):
        with pytest.raises(TokenizerError, match="version"):
            Vocabulary.deserialize("9\tT\t4\n<pad>\n<bos>\n<eos>\n<unk>\n#MERGES\n")

    def test_hash_changes_with_content(self, small_vocab):
        other = learn_bpe(["zz zz"], "T", 8)
        assert other.content_hash() != small_vocab.content_hash()

    def test_specials_enforced(self):
        with pytest.raises(TokenizerError, match="specials"):
            Vocabulary(language="T", tokens=["a", "b", "c", "d"], merge_table=[])


def test_vocabularies_are_monolingual_and_independent():
    # same corpus shape, different symbol inventories -> disjoint non-special tokens
    va = learn_bpe(["ab ab", "ba"], "A", 12)
    vb = learn_bpe(["cd cd", "dc"], "B", 12)
    assert (set(va.tokens[4:]) - {EOW}).isdisjoint(set(vb.tokens[4:]) - {EOW})
    # encoding through the wrong vocabulary yields UNKs, not silent sharing
    assert UNK in vb.encode("ab").ids
