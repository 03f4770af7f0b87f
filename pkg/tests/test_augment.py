import sys
import textwrap
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qawa.adapters import EngineError
from qawa.augment import (
    AugmentConfig,
    ExternalParaphraseEngine,
    PerturbEngine,
    augment_corpus,
    corpus_slot_f1,
    generate_candidates,
    rank_and_select,
    similarity,
    slot_f1,
)
from qawa.delex import DelexError, SlotInventory, delexicalize, placeholder_label

TOKENS = st.lists(st.sampled_from(["<city>", "<date>", "risaq", "wasi", "kan", "mayu"]), min_size=1, max_size=8)


def multiset_jaccard(a, b):
    """Jaccard by explicit element enumeration, as an exact fraction."""
    inter = union = 0
    for x in set(a) | set(b):
        inter += min(a.count(x), b.count(x))
        union += max(a.count(x), b.count(x))
    return Fraction(inter, union) if union else Fraction(1)


class FixedEngine:
    def __init__(self, cands):
        self.cands = cands

    def generate(self, tokens, n, index=0):
        return [list(c) for c in self.cands]


class TestPerturbEngine:
    def test_city_risaq(self):
        cands = generate_candidates(["<city>", "risaq"], PerturbEngine(seed=1), 3)
        assert 1 <= len(cands) <= 3
        assert all("<city>" in c for c in cands)

    def test_single_token_reachable_set(self):
        # only duplication applies to one word; once there are two copies a
        # swap is a no-op and a drop undoes a duplication, so 1-3 edits reach
        # 2, 3 or 4 copies and nothing else
        reachable = {("risaq",) * k for k in (2, 3, 4)}
        seen = set()
        for seed in range(20):
            cands = generate_candidates(["risaq"], PerturbEngine(seed=seed, weights=(1, 1, 1)), 10)
            assert len({tuple(c) for c in cands}) == len(cands)
            seen |= {tuple(c) for c in cands}
        assert seen == reachable

    def test_lone_placeholder_has_no_edits(self):
        assert generate_candidates(["<city>"], PerturbEngine(seed=0), 5) == []

    def test_n_zero_and_empty_source(self):
        assert generate_candidates(["risaq"], PerturbEngine(), 0) == []
        with pytest.raises(ValueError):
            generate_candidates([], PerturbEngine(), 3)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            PerturbEngine(weights=(0, 0, 0))
        with pytest.raises(ValueError):
            PerturbEngine(weights=(1, -1, 1))

    @settings(max_examples=200, deadline=None)
    @given(TOKENS, st.integers(0, 1000), st.integers(0, 50))
    def test_contract_and_determinism(self, toks, seed, index):
        eng = PerturbEngine(seed)
        cands = eng.generate(toks, 10, index)
        assert cands == PerturbEngine(seed).generate(toks, 10, index)
        ph = Counter(t for t in toks if placeholder_label(t))
        for c in cands:
            assert Counter(t for t in c if placeholder_label(t)) == ph
            assert set(c) <= set(toks)
            assert c != toks
        assert len({tuple(c) for c in cands}) == len(cands) <= 10


class TestCandidateFilter:
    def test_drops_source_duplicates_and_violations(self):
        d = ["<city>", "risaq", "kan"]
        eng = FixedEngine([d, ["risaq", "kan"], ["kan", "<city>", "ñawi"], ["kan", "<city>"], ["kan", "<city>"], []])
        assert generate_candidates(d, eng, 5) == [["kan", "<city>"]]

    def test_caps_at_n(self):
        eng = FixedEngine([["b", "a"], ["a"], ["b"]])
        assert generate_candidates(["a", "b"], eng, 2) == [["b", "a"], ["a"]]


class TestSimilarity:
    def test_identical_and_disjoint(self):
        assert similarity(["a", "b"], ["b", "a"]) == 1.0
        assert similarity(["a"], ["b"]) == 0.0
        assert similarity([], []) == 1.0

    def test_hand_count(self):
        assert similarity(["a", "b", "c"], ["a", "c"]) == pytest.approx(2 / 3)
        assert similarity(["a", "a", "b"], ["a", "b"]) == pytest.approx(2 / 3)

    @settings(max_examples=300, deadline=None)
    @given(TOKENS, TOKENS)
    def test_against_oracle(self, a, b):
        expected = multiset_jaccard(a, b)
        assert similarity(a, b) == pytest.approx(float(expected), abs=1e-15)
        assert similarity(a, b) == similarity(b, a)
        assert (similarity(a, b) == 1.0) == (Counter(a) == Counter(b))
        assert (similarity(a, b) == 0.0) == (not set(a) & set(b))


class TestRankAndSelect:
    d = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]

    def test_argmin(self):
        cands = [self.d[:9], self.d[:2], self.d[:5]]
        assert [similarity(self.d, c) for c in cands] == [0.9, 0.2, 0.5]
        assert rank_and_select(self.d, cands, 1) == [self.d[:2]]

    def test_tie_break_lexicographic(self):
        cands = [["c", "b"], ["b", "c"], ["c", "b"]]
        assert rank_and_select(["b", "c", "x"], cands, 1) == [["b", "c"]]

    def test_keep_all_ascending(self):
        cands = [self.d[:9], self.d[:2], self.d[:5]]
        assert rank_and_select(self.d, cands, 3) == [self.d[:2], self.d[:5], self.d[:9]]

    @settings(max_examples=200, deadline=None)
    @given(TOKENS, st.lists(TOKENS, max_size=10), st.data())
    def test_non_decreasing_and_brute_force_min(self, d, cands, data):
        keep = data.draw(st.integers(0, len(cands)))
        out = rank_and_select(d, cands, keep)
        sims = [similarity(d, c) for c in out]
        assert sims == sorted(sims) and len(out) == keep
        # brute force: the same selection from an explicit full sort
        brute = sorted(enumerate(cands), key=lambda ic: (multiset_jaccard(d, ic[1]), ic[1], ic[0]))
        assert out == [c for _, c in brute[:keep]]


class TestSlotF1:
    def test_identical(self):
        assert slot_f1(["<date>", "x", "<city>"], ["<city>", "<date>"]) == (1.0, 1.0, 1.0)

    def test_partial(self):
        p, r, f = slot_f1(["<date>"], ["<date>", "<city>"])
        assert (p, r) == (1.0, 0.5) and f == pytest.approx(2 / 3)

    def test_empty_generated(self):
        assert slot_f1(["x"], ["<date>"]) == (0.0, 0.0, 0.0)

    def test_no_placeholders(self):
        assert slot_f1(["x"], ["y"]) == (1.0, 1.0, 1.0)

    def test_micro_average(self):
        pairs = [(["<a>"], ["<a>", "<b>"]), (["<a>", "<c>"], ["<a>", "<c>"])]
        p, r, f = corpus_slot_f1(pairs)
        assert (p, r) == (1.0, 0.75) and f == pytest.approx(6 / 7)


def _corpus():
    rows = [(["qayna", "p'unchay", "qusqupim", "risaq"], ["B-m", "I-m", "B-c", "O"]),
            (["punomanmi", "kutimusaq"], ["B-c", "O"]),
            (["tuta", "llamakunata", "qhawarqani"], ["B-t", "O", "O"]),
            (["lima"], ["B-c"])] * 5
    corpus, inv = [], SlotInventory()
    for toks, tags in rows:
        ds, contrib = delexicalize(toks, tags)
        corpus.append(ds)
        inv.update(contrib)
    return corpus, inv


class TestAugmentCorpus:
    def test_counts_and_skips(self):
        corpus, inv = _corpus()
        res = augment_corpus(corpus, inv, AugmentConfig(seed=7))
        # the lone-placeholder sentences have no possible edit
        assert res.skipped == [3, 7, 11, 15, 19]
        assert len(res.sentences) == 15 == len(res.delex) == len(res.sources)
        assert res.slot_scores == (1.0, 1.0, 1.0)
        for s, d in zip(res.sentences, res.delex):
            assert not any(placeholder_label(t) for t in s)
            assert len(s) >= len(d)

    def test_deterministic(self):
        corpus, inv = _corpus()
        a = augment_corpus(corpus, inv, AugmentConfig(seed=7))
        b = augment_corpus(corpus, inv, AugmentConfig(seed=7))
        assert a.texts == b.texts and a.delex == b.delex

    def test_keep_two(self):
        corpus, inv = _corpus()
        res = augment_corpus(corpus, inv, AugmentConfig(keep_per_sentence=2, seed=1))
        assert len(res.sentences) <= 2 * len(corpus)
        assert Counter(res.sources)[0] == 2

    def test_inventory_gap_names_sentence_and_label(self):
        corpus, _ = _corpus()
        inv = SlotInventory({"m": ["qayna"], "c": ["lima"]})
        with pytest.raises(DelexError, match=r"sentence s2: .*'t'"):
            augment_corpus(corpus, inv, AugmentConfig(), ids=[f"s{i}" for i in range(len(corpus))])

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            AugmentConfig(candidates_per_sentence=2, keep_per_sentence=3)
        with pytest.raises(ValueError):
            AugmentConfig(similarity="cosine")


ENGINE = textwrap.dedent("""
    import sys
    for line in sys.stdin:
        head, n, body = line.rstrip("\\n").split(" ", 2)
        toks = body.split("\\t")
        if toks == ["boom"]:
            print("ERR model exploded", flush=True)
            continue
        if toks == ["die"]:
            sys.stderr.write("fatal: out of memory\\n")
            sys.stderr.flush()
            sys.exit(4)
        if toks == ["hang"]:
            import time
            time.sleep(30)
        print("CAND " + "\\t".join(reversed(toks)), flush=True)
        print("CAND " + "\\t".join(toks[1:]), flush=True)
        print("END", flush=True)
""")


@pytest.fixture
def engine_cmd(tmp_path):
    p = tmp_path / "engine.py"
    p.write_text(ENGINE)
    return [sys.executable, str(p)]


class TestExternalEngine:
    def test_protocol(self, engine_cmd):
        eng = ExternalParaphraseEngine(engine_cmd, timeout_s=10)
        try:
            assert eng.generate(["<c>", "risaq", "kan"], 2) == [["kan", "risaq", "<c>"], ["risaq", "kan"]]
            # second request reuses the process
            cands = generate_candidates(["<c>", "risaq"], eng, 5)
            assert cands == [["risaq", "<c>"]]
            assert eng.generate(["x"], 0) == []
        finally:
            eng.close()

    def test_err_line(self, engine_cmd):
        eng = ExternalParaphraseEngine(engine_cmd, timeout_s=10)
        with pytest.raises(EngineError, match="exploded"):
            eng.generate(["boom"], 2)
        eng.close()

    def test_crash_carries_diagnostics(self, engine_cmd):
        eng = ExternalParaphraseEngine(engine_cmd, timeout_s=10)
        with pytest.raises(EngineError) as info:
            eng.generate(["die"], 2)
        assert "out of memory" in info.value.diagnostics
        eng.close()

    def test_timeout(self, engine_cmd):
        eng = ExternalParaphraseEngine(engine_cmd, timeout_s=0.5)
        with pytest.raises(EngineError, match="timed out|timeout"):
            eng.generate(["hang"], 2)
        eng.close()

    def test_missing_binary(self):
        eng = ExternalParaphraseEngine(["/nonexistent/engine"], timeout_s=1)
        with pytest.raises(EngineError, match="cannot start"):
            eng.generate(["x"], 1)
