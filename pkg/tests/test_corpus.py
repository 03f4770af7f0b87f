import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qawa.corpus import (
    Manifest,
    ManifestError,
    NormalizationRules,
    Utterance,
    concat,
    corpus_stats,
    load_manifest,
    load_rules,
    normalize_text,
    relabel,
    resolve_audio,
    save_manifest,
    split_corpus,
    split_sizes,
)


def _utt(i, **kw):
    base = dict(id=f"u{i}", audio_ref=f"a{i}.wav", transcript=f"simi {i}", speaker_id=f"s{i % 3}",
                dialect="Chanka", gender="F", duration_s=1.0)
    base.update(kw)
    return Utterance(**base)


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")


class TestManifestIO:
    def test_three_lines_in_file_order(self, tmp_path):
        p = tmp_path / "m.jsonl"
        _write_jsonl(p, [{"id": k, "audio": f"{k}.wav", "text": "kan"} for k in ("c", "a", "b")])
        m = load_manifest(p)
        assert m.ids == ["c", "a", "b"]
        assert m.split == "Unsplit"

    def test_duplicate_id_names_both_lines(self, tmp_path):
        p = tmp_path / "m.jsonl"
        recs = [{"id": k, "text": "kan"} for k in ("u1", "u2", "u3", "u1")]
        _write_jsonl(p, recs)
        with pytest.raises(ManifestError, match=r"u1.*lines 1 and 4"):
            load_manifest(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        assert len(load_manifest(p)) == 0

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"id": "a", "text": "kan"}\n{not json\n')
        with pytest.raises(ManifestError, match=":2:"):
            load_manifest(p)

    def test_missing_text_field(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"id": "a"}\n')
        with pytest.raises(ManifestError, match="text"):
            load_manifest(p)

    def test_unknown_fields_round_trip(self, tmp_path):
        p = tmp_path / "m.jsonl"
        _write_jsonl(p, [{"id": "a", "text": "kan", "dialect": "chanka", "gender": "female",
                          "duration_s": 2.5, "mic": "lav", "nested": {"x": [1, 2]}}])
        m = load_manifest(p)
        u = m[0]
        assert (u.dialect, u.gender) == ("Chanka", "F")
        assert u.extra == {"mic": "lav", "nested": {"x": [1, 2]}}
        q = tmp_path / "n.jsonl"
        save_manifest(m, q)
        assert load_manifest(q) == m

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.text(min_size=1, max_size=8), st.floats(0, 1e4)), max_size=20, unique_by=lambda t: t[0]))
    def test_load_save_identity(self, tmp_path_factory, rows):
        rows = [(uid, d) for uid, d in rows]
        m = Manifest([Utterance(uid, "x.wav", "simi kan ñ", duration_s=d) for uid, d in rows])
        p = tmp_path_factory.mktemp("rt") / "m.jsonl"
        save_manifest(m, p)
        assert load_manifest(p) == m

    def test_invalid_enum_rejected(self):
        with pytest.raises(ManifestError):
            _utt(0, dialect="Ayacucho")
        with pytest.raises(ManifestError):
            _utt(0, duration_s=-1)
        with pytest.raises(ManifestError):
            _utt(0, transcript="  ")

    def test_resolve_audio_relative_to_manifest(self, tmp_path):
        u = _utt(0, audio_ref="wav/x.wav")
        assert resolve_audio(u, tmp_path / "sub" / "m.jsonl") == str(tmp_path / "sub" / "wav" / "x.wav")
        v = _utt(0, audio_ref="/abs/x.wav")
        assert resolve_audio(v, tmp_path / "m.jsonl") == "/abs/x.wav"


class TestNormalization:
    rules = load_rules()

    def test_case_fold_keeps_orthography(self):
        assert normalize_text("Mayu hatunmi kachkan", self.rules) == "mayu hatunmi kachkan"

    def test_empty(self):
        assert normalize_text("", self.rules) == ""

    def test_curly_apostrophe(self):
        assert normalize_text("p’unchay", self.rules) == "p'unchay"

    def test_morpheme_hyphens_join(self):
        assert normalize_text("Wasi-kuna-pi ka-n", self.rules) == "wasikunapi kan"

    def test_punctuation_and_whitespace(self):
        assert normalize_text("  ¿Imaynalla,   kachkanki?  ", self.rules) == "imaynalla kachkanki"

    def test_digits_and_loose_apostrophes(self):
        assert normalize_text("'wasi' 12 wasikuna", self.rules) == "wasi wasikuna"

    def test_lowercase_directive_off(self, tmp_path):
        p = tmp_path / "r.tsv"
        p.write_text("lowercase=false\nstrip=.\napostrophe=ʼ\n", encoding="utf-8")
        r = load_rules(p)
        assert normalize_text("P'unchay. Kan", r) == "Pʼunchay Kan"

    def test_bad_pattern_reports_line(self, tmp_path):
        p = tmp_path / "r.tsv"
        p.write_text("# comment\n(unclosed\tx\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2:"):
            load_rules(p)

    @settings(max_examples=300, deadline=None)
    @given(st.text(alphabet=st.sampled_from(list("aqkñ'’`-_ .,?¿0 9\tÁ ")), max_size=40))
    def test_idempotent_default_rules(self, raw):
        once = normalize_text(raw, self.rules)
        assert normalize_text(once, self.rules) == once

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=30))
    def test_idempotent_arbitrary_text(self, raw):
        for rules in (self.rules, NormalizationRules()):
            once = normalize_text(raw, rules)
            assert normalize_text(once, rules) == once
            assert once == once.strip() and "  " not in once


class TestSplit:
    def test_ten_utterances(self):
        m = Manifest([_utt(i) for i in range(10)])
        parts = split_corpus(m, (0.8, 0.1, 0.1), seed=7)
        assert [len(p) for p in parts] == [8, 1, 1]
        assert [p.split for p in parts] == ["Train", "Dev", "Test"]

    def test_remainder_rule(self):
        # dev 0.104 * 124 = 12.896 -> 13, test 0.096 * 124 = 11.904 -> 12, train the rest
        assert split_sizes(124, (0.8, 0.104, 0.096)) == (99, 13, 12)
        assert split_sizes(7, (0.5, 0.25, 0.25)) == (3, 2, 2)  # 1.75 rounds up twice
        assert split_sizes(3, (0.0, 0.5, 0.5)) == (0, 2, 1)  # test clamped to what is left

    def test_degenerate_fractions(self):
        m = Manifest([_utt(i) for i in range(5)])
        train, dev, test = split_corpus(m, (1, 0, 0))
        assert train.ids == m.ids and len(dev) == len(test) == 0

    def test_invalid_fractions(self):
        with pytest.raises(ValueError):
            split_sizes(10, (0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            split_sizes(10, (1.2, -0.1, -0.1))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 1000), st.integers(0, 2 ** 16), st.booleans())
    def test_partition(self, n, seed, by_speaker):
        m = Manifest([_utt(i) for i in range(n)])
        parts = split_corpus(m, (0.7, 0.2, 0.1), seed, by_speaker=by_speaker)
        ids = [i for p in parts for i in p.ids]
        assert sorted(ids) == sorted(m.ids)
        assert len(set(ids)) == n
        if not by_speaker:
            assert tuple(len(p) for p in parts) == split_sizes(n, (0.7, 0.2, 0.1))
        for p in parts:
            pos = [m.ids.index(i) for i in p.ids[:20]]
            assert pos == sorted(pos)

    def test_deterministic(self):
        m = Manifest([_utt(i) for i in range(50)])
        assert split_corpus(m, seed=3) == split_corpus(m, seed=3)
        assert split_corpus(m, seed=3) != split_corpus(m, seed=4)

    def test_speaker_disjoint(self):
        m = Manifest([_utt(i, speaker_id=f"s{i % 7}") for i in range(70)])
        parts = split_corpus(m, (0.8, 0.1, 0.1), seed=1, by_speaker=True)
        spk = [{u.speaker_id for u in p} for p in parts]
        assert not (spk[0] & spk[1]) and not (spk[0] & spk[2]) and not (spk[1] & spk[2])


class TestStats:
    def test_hand_sums(self):
        rows = [("Chanka", "F", "a", 1800), ("Chanka", "F", "b", 1800), ("Chanka", "M", "c", 900),
                ("Collao", "F", "d", 360), ("Collao", "M", "e", 3600), ("Collao", "M", "e", 1800)]
        m = Manifest([Utterance(f"u{i}", "", "kan", spk, d, g, s) for i, (d, g, spk, s) in enumerate(rows)])
        cells = corpus_stats(m).cells
        assert cells[("Chanka", "F")] == (2, 1.0)
        assert cells[("Chanka", "M")] == (1, 0.25)
        assert cells[("Collao", "F")] == (1, 0.1)
        assert cells[("Collao", "M")] == (1, 1.5)
        assert corpus_stats(m).totals == (5, pytest.approx(2.85))

    def test_empty(self):
        st_ = corpus_stats(Manifest())
        assert len(st_.cells) == 4
        assert all(v == (0, 0.0) for v in st_.cells.values())
        assert "total" in st_.render()

    def test_one_hour(self):
        m = Manifest([Utterance("x", "", "kan", "s", "Collao", "M", 3600.0)])
        assert corpus_stats(m).cells[("Collao", "M")] == (1, 1.0)

    def test_unknown_cells_reported(self):
        m = Manifest([Utterance("x", "", "kan", "s", "Unknown", "F", 60.0)])
        cells = corpus_stats(m).cells
        assert ("Unknown", "F") in cells and len(cells) == 5

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["Chanka", "Collao", "Unknown"]),
                              st.sampled_from(["F", "M", "Unknown"]), st.integers(0, 5),
                              st.floats(0, 1e4)), max_size=40))
    def test_totals_equal_cell_sums(self, rows):
        m = Manifest([Utterance(f"u{i}", "", "kan", f"s{s}", d, g, dur) for i, (d, g, s, dur) in enumerate(rows)])
        stats = corpus_stats(m)
        assert stats.totals[1] == pytest.approx(sum(h for _, h in stats.cells.values()))
        assert stats.totals[1] == pytest.approx(m.hours)


class TestManifestOps:
    def test_relabel_and_concat(self):
        m = Manifest([_utt(i) for i in range(3)])
        both = concat([m, relabel(m, "-dup")])
        assert len(both) == 6
        assert both.ids[3:] == ["u0-dup", "u1-dup", "u2-dup"]
        assert [u.transcript for u in both][3:] == [u.transcript for u in m]

    def test_concat_rejects_collisions(self):
        m = Manifest([_utt(0)])
        with pytest.raises(ManifestError):
            concat([m, m])
