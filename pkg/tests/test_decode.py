import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcgts.corpus import (A, ALL_CHAR, FIRST_CHAR, N, O, P, Sentence, build_vocabs,
                          encode_gold_grid, generate_synthetic_corpus, grid_mask)
from gcgts.decode import (ExtractionResult, decode_grid, decode_grid_bruteforce, evaluate_model,
                          gold_result, score)
from gcgts.model import GCGTS, ModelConfig

MODES = (FIRST_CHAR, ALL_CHAR)


@pytest.mark.parametrize("mode", MODES)
def test_price_gold_decodes(price, mode):
    grid = encode_gold_grid(price, mode)
    res = decode_grid(grid.labels, price, mode)
    assert res == ExtractionResult(frozenset({(0, 5)}), frozenset({(5, 7)}),
                                   frozenset({((0, 5), (5, 7))}))


@pytest.mark.parametrize("mode", MODES)
def test_all_n_grid_is_empty(price, mode):
    assert decode_grid(np.zeros((8, 8), dtype=int), price, mode) == ExtractionResult()


def sentence_from_lengths(lengths):
    words, pos = [], 0
    for n in lengths:
        words.append((pos, pos + n))
        pos += n
    deps = [(-1, "root")] + [(0, "dep")] * (len(lengths) - 1)
    return Sentence(["字"] * pos, words, ["NN"] * len(lengths), deps)


def test_adjacent_runs_split_by_other_label():
    s = sentence_from_lengths([1, 1, 1, 1])
    labels = np.zeros((4, 4), dtype=int)
    labels[0, 0] = labels[2, 2] = A
    labels[1, 1] = O
    labels[3, 3] = A
    labels[0, 1] = P
    res = decode_grid(labels, s, FIRST_CHAR)
    assert res.aspects == {(0, 1), (2, 4)}
    assert res.opinions == {(1, 2)}
    assert res.pairs == {((0, 1), (1, 2))}


def test_pair_cell_below_diagonal_is_ignored():
    s = sentence_from_lengths([1, 1])
    labels = np.array([[A, N], [P, O]])
    assert decode_grid(labels, s, FIRST_CHAR).pairs == frozenset()


def test_all_char_run_widens_to_words():
    s = sentence_from_lengths([3, 2])
    labels = np.zeros((5, 5), dtype=int)
    labels[1, 1] = A      # middle char of word 0
    labels[4, 4] = O      # last char of word 1
    labels[1, 4] = P
    res = decode_grid(labels, s, ALL_CHAR)
    assert res.aspects == {(0, 3)} and res.opinions == {(3, 5)}
    assert res.pairs == {((0, 3), (3, 5))}


def test_exhaustive_three_positions():
    s = sentence_from_lengths([2, 1, 3])
    pos = [0, 2, 3]
    cells = [(pos[a], pos[b]) for a in range(3) for b in range(a, 3)]
    labels = np.zeros((6, 6), dtype=int)
    for combo in itertools.product(range(4), repeat=len(cells)):
        for (i, j), lab in zip(cells, combo):
            labels[i, j] = lab
        assert decode_grid(labels, s, FIRST_CHAR) == decode_grid_bruteforce(labels, s, FIRST_CHAR)


def test_exhaustive_four_positions_diag_and_pairs():
    s = sentence_from_lengths([1, 2, 1, 2])
    pos = [0, 1, 3, 4]
    diag = [(p, p) for p in pos]
    off = [(pos[a], pos[b]) for a in range(4) for b in range(a + 1, 4)]
    labels = np.zeros((6, 6), dtype=int)
    for d_combo in itertools.product(range(4), repeat=4):
        for (i, j), lab in zip(diag, d_combo):
            labels[i, j] = lab
        for o_combo in itertools.product((N, P), repeat=len(off)):
            for (i, j), lab in zip(off, o_combo):
                labels[i, j] = lab
            assert decode_grid(labels, s, FIRST_CHAR) == decode_grid_bruteforce(labels, s, FIRST_CHAR)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=6), st.integers(0, 2**32 - 1),
       st.sampled_from(MODES))
def test_decoder_matches_oracle_random(lengths, seed, mode):
    s = sentence_from_lengths(lengths)
    n = len(s)
    labels = np.random.default_rng(seed).integers(0, 4, size=(n, n))
    assert decode_grid(labels, s, mode) == decode_grid_bruteforce(labels, s, mode)


@pytest.mark.parametrize("mode", MODES)
def test_gold_round_trip_synthetic(mode):
    for s in generate_synthetic_corpus(5, 200):
        assert decode_grid(encode_gold_grid(s, mode).labels, s, mode) == gold_result(s)


@pytest.mark.parametrize("mode", MODES)
def test_only_masked_cells_matter(mode):
    s = generate_synthetic_corpus(8, 1)[0]
    grid = encode_gold_grid(s, mode)
    noisy = np.where(grid.mask == 1, grid.labels,
                     np.random.default_rng(0).integers(0, 4, size=grid.labels.shape))
    assert decode_grid(noisy, s, mode) == decode_grid(grid.labels, s, mode)


# ------------------------------------------------------------------ scoring

def R(aspects=(), opinions=(), pairs=()):
    return ExtractionResult(frozenset(aspects), frozenset(opinions), frozenset(pairs))


def test_score_perfect():
    g = R([(0, 2)], [(3, 4)], [((0, 2), (3, 4))])
    m = score([g], [g])
    for prf in (m.pair, m.aspect, m.opinion):
        assert (prf.p, prf.r, prf.f1) == (1.0, 1.0, 1.0)


def test_score_empty_prediction():
    g = R([(0, 2)], [(3, 4)], [((0, 2), (3, 4))])
    m = score([R()], [g])
    assert (m.pair.p, m.pair.r, m.pair.f1) == (0.0, 0.0, 0.0)


def test_score_half_right():
    a1, a2, o1, o2 = (0, 1), (1, 2), (3, 4), (4, 5)
    gold = R(pairs=[(a1, o1), (a2, o2)])
    pred = R(pairs=[(a1, o1), (a2, o1)])
    m = score([pred], [gold])
    assert (m.pair.p, m.pair.r, m.pair.f1) == (0.5, 0.5, 0.5)


def test_score_micro_average_and_json():
    gold = [R([(0, 1)]), R([(0, 1), (2, 3)])]
    pred = [R([(0, 1)]), R([(2, 3), (4, 5)])]
    m = score(pred, gold)
    assert m.aspect.p == pytest.approx(2 / 3) and m.aspect.r == pytest.approx(2 / 3)
    js = m.to_json()
    assert set(js) == {"pair", "aspect", "opinion", "n_sentences"}
    assert js["n_sentences"] == 2
    assert set(js["pair"]) == {"p", "r", "f1"}


spans = st.tuples(st.integers(0, 5), st.integers(6, 9))
results = st.builds(lambda a, o, p: R(a, o, p), st.sets(spans, max_size=3), st.sets(spans, max_size=3),
                    st.sets(st.tuples(spans, spans), max_size=4))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(results, results), min_size=1, max_size=4), st.data())
def test_score_bounds_and_monotonicity(pairs_, data):
    preds = [p for p, _ in pairs_]
    golds = [g for _, g in pairs_]
    m = score(preds, golds)
    for prf in (m.pair, m.aspect, m.opinion):
        assert 0 <= prf.p <= 1 and 0 <= prf.r <= 1 and 0 <= prf.f1 <= 1
    k = data.draw(st.integers(0, len(preds) - 1))
    missing = sorted(golds[k].pairs - preds[k].pairs)
    if missing:
        better = list(preds)
        better[k] = R(preds[k].aspects, preds[k].opinions, preds[k].pairs | {missing[0]})
        m2 = score(better, golds)
        assert m2.pair.p >= m.pair.p and m2.pair.r >= m.pair.r and m2.pair.f1 >= m.pair.f1


def test_evaluate_gold_oracle_is_perfect():
    corpus = generate_synthetic_corpus(3, 50)
    for mode in MODES:
        m, preds = evaluate_model(None, corpus, gold_oracle=True, mode=mode)
        assert (m.pair.f1, m.aspect.f1, m.opinion.f1) == (1.0, 1.0, 1.0)
        assert len(preds) == 50


def test_evaluate_model_deterministic(tiny_config):
    corpus = generate_synthetic_corpus(3, 10)
    model = GCGTS(tiny_config(), build_vocabs(corpus))
    a = evaluate_model(model, corpus)[0].to_json()
    b = evaluate_model(model, corpus)[0].to_json()
    assert a == b


def test_evaluate_empty_corpus(tiny_config, price):
    model = GCGTS(tiny_config(), build_vocabs([price]))
    m, preds = evaluate_model(model, [])
    assert m.n_sentences == 0 and preds == []
    assert m.pair.f1 == 0.0
