from hypothesis import given, settings
from hypothesis import strategies as st

from qawa.morpho import SuffixTable, analyze, load_suffix_table, segment_to_subwords, tokenize

import pytest

SHIPPED = load_suffix_table()


class TestSuffixTable:
    def test_shipped_table(self):
        assert len(SHIPPED.forms) >= 50
        assert SHIPPED.min_stem_len == 3
        lengths = [len(s) for s in SHIPPED.forms]
        assert lengths == sorted(lengths, reverse=True)

    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ValueError):
            SuffixTable.of("ta", "")
        with pytest.raises(ValueError):
            SuffixTable.of("ta", "ta")

    def test_file_directives(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text("# c\nmin_stem_len=2\nn\nchá\tChanka\n", encoding="utf-8")
        t = load_suffix_table(p)
        assert t.min_stem_len == 2
        assert t.entries == (("n", None), ("chá", "Chanka"))
        p.write_text("min_stem_len=x\n")
        with pytest.raises(ValueError, match=":1:"):
            load_suffix_table(p)


class TestTokenize:
    def test_whitespace(self):
        assert tokenize("mayu hatunmi kachkan") == ["mayu", "hatunmi", "kachkan"]

    def test_apostrophe_kept_and_punct_dropped(self):
        assert tokenize("p'unchaytaq risaq.") == ["p'unchaytaq", "risaq"]

    def test_punct_kept_as_tokens(self):
        assert tokenize("¿imaynalla, wawqi?", drop_punct=False) == ["¿", "imaynalla", ",", "wawqi", "?"]

    def test_empty(self):
        assert tokenize("") == []

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet=list("aqkñ' .,?\t\n-"), max_size=30))
    def test_no_whitespace_in_tokens(self, text):
        for tok in tokenize(text) + tokenize(text, drop_punct=False):
            assert tok and not any(c.isspace() for c in tok)


class TestAnalyze:
    def test_siminchik(self):
        a = analyze("siminchik", SuffixTable.of("nchik"))
        assert (a.lemma, a.suffixes) == ("simi", ("nchik",))
        assert a.hyphenated() == "simi-nchik"

    def test_kan(self):
        a = analyze("kan", SuffixTable.of("n", min_stem_len=2))
        assert (a.lemma, a.suffixes) == ("ka", ("n",))

    def test_no_match(self):
        a = analyze("puno", SuffixTable.of("nchik"))
        assert (a.lemma, a.suffixes) == ("puno", ())

    def test_stacked_suffixes_outermost_last(self):
        a = analyze("punomanmi", SHIPPED)
        assert (a.lemma, a.suffixes) == ("puno", ("man", "mi"))

    def test_stem_floor(self):
        # stripping "kuna" would leave a two-letter stem
        assert analyze("wakuna", SuffixTable.of("kuna")).lemma == "wakuna"

    def test_longest_first(self):
        a = analyze("wasimanta", SuffixTable.of("ta", "manta", min_stem_len=2))
        assert a.suffixes == ("manta",)

    @settings(max_examples=500, deadline=None)
    @given(st.text(alphabet=list("aiuqkhnmtpcsy'rlwñ"), min_size=1, max_size=20))
    def test_concatenation_invariant(self, token):
        a = analyze(token, SHIPPED)
        assert a.lemma + "".join(a.suffixes) == token
        assert not a.suffixes or len(a.lemma) >= SHIPPED.min_stem_len
        assert analyze(token, SHIPPED) == a
        again = analyze(a.lemma, SHIPPED)
        assert again.lemma == a.lemma and again.suffixes == ()


class TestSubwords:
    table = SuffixTable.of("nchik", "n", min_stem_len=2)

    def test_single(self):
        assert segment_to_subwords(["siminchik"], self.table) == ["simi", "nchik"]

    def test_unchanged(self):
        assert segment_to_subwords(["puno", "lima"], SuffixTable.of("nchik")) == ["puno", "lima"]

    def test_composition(self):
        assert segment_to_subwords(["kan", "siminchik"], self.table) == ["ka", "n", "simi", "nchik"]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.text(alphabet=list("aiuqkhnmtpcsy"), min_size=1, max_size=12), max_size=8))
    def test_character_content_preserved(self, tokens):
        assert "".join(segment_to_subwords(tokens, SHIPPED)) == "".join(tokens)
