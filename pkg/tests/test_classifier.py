import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import log_loss, numeric_gradient, pairwise_auc
from satd_sentinel.classifier import (
    EXAMPLE_ONHOLD_PATTERN,
    Hyper,
    Label,
    LabeledCorpus,
    Model,
    PatternResult,
    Source,
    Vocabulary,
    auc_rank_sum,
    classify_comment,
    compile_onhold_patterns,
    evaluate,
    featurize,
    fixed_scorer,
    load_desk_corpus,
    loss_and_grad,
    majority_fitter,
    ngrams,
    pattern_detect,
    sigmoid,
    stratified_folds,
    tokenize,
    train,
)
from satd_sentinel.classifier.model import data_path, step_size
from satd_sentinel.comments import JAVA, extract_comments
from satd_sentinel.errors import ModelError, TrainingError
from satd_sentinel.refs import RepoId, extract_refs

ON, XR = Label.ON_HOLD, Label.CROSS_REFERENCE

# Tokens written out by hand from the normalization rules, not by running the code.
HAND_TOKENIZED = [
    ("Fix once https://github.com/a/b/issues/7 is resolved", ["fix", "once", "_url_", "is", "resolved"]),
    ("", []),
    ("TODO after issue 18245", ["todo", "after", "issue", "_num_"]),
    ("Wait for #12, then drop", ["wait", "for", "_issue_", "then", "drop"]),
    ("See acme/shop#3 (www.example.org/x)", ["see", "_issue_", "_url_"]),
    ("HACK: v2 API in 2024", ["hack", "v2", "api", "in", "_num_"]),
    ("Blocked-by: JDK-8200", ["blocked", "by", "jdk", "_num_"]),
    ("ÄÖ über x", ["ber", "x"]),
]


@pytest.mark.parametrize("text,expected", HAND_TOKENIZED)
def test_tokenize_hand_table(text, expected):
    assert tokenize(text) == expected


def test_ngrams_examples():
    assert ngrams(["wait", "for", "issue"]) == Counter({"wait": 1, "for": 1, "issue": 1, "wait for": 1, "for issue": 1})
    assert ngrams([]) == Counter()
    assert ngrams(["x"]) == Counter({"x": 1})
    with pytest.raises(ValueError):
        ngrams(["x"], 0)


def test_featurize_matches_brute_force_counts():
    rng = random.Random(3)
    words = ["a", "b", "c", "d", "wait", "for"]
    docs = [[rng.choice(words) for _ in range(rng.randint(0, 9))] for _ in range(20)]
    vocab = Vocabulary.build(docs, min_df=2)
    for tokens in docs:
        vec = featurize(tokens, vocab)
        expected = {}
        for n in (1, 2):
            for i in range(len(tokens) - n + 1):
                gram = " ".join(tokens[i:i + n])
                if gram in vocab.terms:
                    expected[vocab.terms.index(gram)] = expected.get(vocab.terms.index(gram), 0) + 1
        assert dict(zip(vec.indices, vec.values)) == expected
        assert list(vec.indices) == sorted(set(vec.indices))
        assert all(v > 0 for v in vec.values)
        assert all(i < len(vocab) for i in vec.indices)


def test_featurize_self_consistency_and_oov():
    docs = [["wait", "for", "fix"], ["see", "for", "details"]]
    vocab = Vocabulary.build(docs, min_df=2)  # fewer than 10 survive, so all kept
    for d in docs:
        vec = featurize(d, vocab)
        assert len(vec) == len(set(ngrams(d)))
    assert len(featurize(["zzz"], vocab)) == 0


def test_featurize_version_mismatch():
    vocab = Vocabulary(("a", "b"))
    with pytest.raises(ModelError):
        featurize(["a"], vocab, expected_version="deadbeef")
    with pytest.raises(ModelError):
        featurize(["a"], Vocabulary(()))


def test_vocabulary_min_df_pruning():
    docs = [[f"w{i}", "common", "shared"] for i in range(12)] + [[f"v{i}", "common"] for i in range(12)]
    vocab = Vocabulary.build(docs, n_max=1, min_df=2)
    assert vocab.terms == ("common", "shared") or len(vocab) >= 10
    assert "w0" not in vocab.terms or len(vocab) == len({t for d in docs for t in d})


@given(st.floats(-700, 700))
def test_sigmoid_closed_form_and_bounds(z):
    s = sigmoid(z)
    assert 0.0 <= s <= 1.0
    assert math.isclose(s, 1 / (1 + math.exp(-z)), rel_tol=1e-12, abs_tol=1e-300)
    arr = sigmoid(np.array([z]))
    assert math.isclose(float(arr[0]), s, rel_tol=1e-12, abs_tol=1e-300)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10):
        n, d = rng.integers(3, 9), rng.integers(2, 6)
        X = rng.poisson(1.0, size=(n, d)).astype(float)
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.normal(size=d)
        b = float(rng.normal())
        l2 = float(rng.uniform(0, 2))
        loss, gw, gb = loss_and_grad(w, b, X, y, l2)
        assert math.isclose(loss, log_loss(list(w), b, X.tolist(), y.tolist(), l2), rel_tol=1e-12)
        num_w, num_b = numeric_gradient(lambda ww, bb: log_loss(list(ww), bb, X.tolist(), y.tolist(), l2), w, b)
        for a, e in zip(list(gw) + [gb], num_w + [num_b]):
            worst = max(worst, abs(a - e) / max(abs(e), 1e-8))
    assert worst < 1e-5


def _toy():
    return LabeledCorpus(
        [
            ("TODO remove once #1 is fixed", ON),
            ("wait for #2 to be fixed then remove", ON),
            ("see #3 for details", XR),
            ("background in #4 see details", XR),
        ]
    )


def test_separable_toy_corpus_trains_to_full_accuracy():
    corpus = _toy()
    model = train(corpus, Hyper(l2=0.01, epochs=2000))
    for text, label in corpus.records:
        assert model.predict(text)[0] is label


def test_training_is_bit_identical():
    corpus = _toy()
    assert train(corpus).to_bytes() == train(corpus).to_bytes()


def test_bundled_model_is_reproducible_from_corpus():
    rebuilt = train(load_desk_corpus())
    assert rebuilt.to_bytes() == data_path("desk_model.bin").read_bytes()


def test_single_label_corpus_rejected():
    with pytest.raises(TrainingError):
        train(LabeledCorpus([("a #1", ON), ("b #2", ON)]))


def test_increasing_l2_never_grows_weight_norm():
    corpus = load_desk_corpus()
    small = LabeledCorpus(corpus.records[::6])
    norms = [float(np.linalg.norm(train(small, Hyper(l2=l2, epochs=150)).weights)) for l2 in (0.1, 1.0, 5.0, 20.0)]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def test_step_size_positive():
    assert step_size(np.ones((4, 3)), 1.0) > 0


def test_model_round_trip_bit_exact(tmp_path, bundled_model):
    path = tmp_path / "m.bin"
    bundled_model.save(path)
    again = Model.load(path)
    assert again.to_bytes() == bundled_model.to_bytes()
    assert path.read_bytes()[0] == 1


def test_model_with_calibration_round_trips():
    model = train(_toy(), Hyper(calibrate=True))
    assert model.calibration is not None
    assert Model.from_bytes(model.to_bytes()).to_bytes() == model.to_bytes()


@pytest.mark.parametrize("blob", [b"", b"\x02{}", b"\x01not json", b'\x01{"vocabulary": []}'])
def test_corrupt_model_files(blob):
    with pytest.raises(ModelError):
        Model.from_bytes(blob)


def test_vocab_mismatch_on_decision(bundled_model):
    foreign = featurize(["a"], Vocabulary(("a",)))
    with pytest.raises(ModelError):
        bundled_model.decision(foreign)


def test_motivating_example_is_onhold(bundled_model):
    text = "TODO: Use this for now then modify this once https://github.com/mockito/mockito/issues/769 is fixed"
    label, conf = bundled_model.predict(text)
    assert label is ON and conf >= 0.5


def test_mono_style_comment_is_onhold(bundled_model):
    (c,) = extract_comments(
        "// The problem of passing arrays can be fixed after issue 18245 is resolved\n", JAVA, "A.java"
    ).comments
    finding = classify_comment(c, extract_refs(c.body_text, RepoId.parse("mono/mono")), bundled_model)
    assert finding.label is ON and finding.source is Source.MODEL


def test_empty_body_predicts_from_bias(bundled_model):
    label, conf = bundled_model.predict("")
    assert 0.0 <= conf <= 1.0
    assert math.isclose(conf, sigmoid(bundled_model.bias))


def test_heldout_cross_references_mostly_rejected():
    corpus = load_desk_corpus()
    labels = [lab for _, lab in corpus.records]
    test_idx = set(stratified_folds(labels, 5, 0)[0])
    model = train(LabeledCorpus([r for i, r in enumerate(corpus.records) if i not in test_idx]))
    xr = [corpus.records[i][0] for i in test_idx if corpus.records[i][1] is XR]
    rejected = sum(model.predict(t)[0] is XR for t in xr)
    assert rejected / len(xr) >= 0.8


def test_threshold_consistency(bundled_model):
    for text, _ in load_desk_corpus().records[:80]:
        label, conf = bundled_model.predict(text)
        assert (label is ON) == (conf >= 0.5)


# pattern detector


def test_pattern_detect_examples():
    pats = compile_onhold_patterns([EXAMPLE_ONHOLD_PATTERN])
    assert pattern_detect("once issue 42 is resolved", pats) is PatternResult.ON_HOLD
    assert pattern_detect("related to issue 42", pats) is PatternResult.NO_MATCH
    assert pattern_detect("AFTER issue 7 is resolved", pats) is PatternResult.ON_HOLD


def test_invalid_onhold_pattern():
    from satd_sentinel.errors import ConfigError

    with pytest.raises(ConfigError):
        compile_onhold_patterns(["(unclosed"])


def _comment(text):
    return extract_comments(f"// {text}\n", JAVA, "A.java").comments[0]


def test_classify_gate_and_override(bundled_model):
    c = _comment("TODO remove this")
    assert classify_comment(c, [], bundled_model) is None
    c = _comment("see issue 5 for background")
    refs = extract_refs(c.body_text, RepoId.parse("a/b"))
    pats = compile_onhold_patterns([r"see issue \d+"])
    f = classify_comment(c, refs, bundled_model, pats)
    assert (f.label, f.confidence, f.source) == (ON, 1.0, Source.PATTERN)
    f = classify_comment(c, refs, bundled_model)
    assert f.source is Source.MODEL and 0 <= f.confidence <= 1


def test_classify_without_model_uses_default_patterns():
    c = _comment("remove once issue 9 is fixed")
    f = classify_comment(c, extract_refs(c.body_text, RepoId.parse("a/b")), None)
    assert f.label is ON and f.source is Source.PATTERN


@given(st.lists(st.text(alphabet="ab #1", max_size=10), max_size=5))
@settings(max_examples=100, deadline=None)
def test_gate_invariant(texts):
    for t in texts:
        assert classify_comment(_comment(t or "x"), [], None) is None


def test_finding_round_trip(bundled_model):
    from satd_sentinel.classifier import SatdFinding

    c = _comment("drop after #3 is merged")
    f = classify_comment(c, extract_refs(c.body_text, RepoId.parse("a/b")), bundled_model)
    assert SatdFinding.from_dict(f.to_dict()) == f


# metrics


def test_auc_rank_sum_equals_pairwise_on_random_corpora():
    rng = random.Random(5)
    for _ in range(25):
        n = rng.randint(2, 100)
        labels = [rng.random() < 0.5 for _ in range(n)]
        labels[0], labels[1] = True, False
        scores = [rng.choice([0.1, 0.2, 0.5, 0.5, 0.9, rng.random()]) for _ in range(n)]
        assert auc_rank_sum(scores, labels) == pairwise_auc(scores, labels)


def test_auc_thirty_item_fixture():
    rng = random.Random(30)
    labels = [i % 3 == 0 for i in range(30)]
    scores = [round(rng.random(), 1) for _ in range(30)]
    assert auc_rank_sum(scores, labels) == pairwise_auc(scores, labels)


def test_auc_edge_cases():
    assert auc_rank_sum([0.3, 0.3, 0.3], [True, False, True]) == 0.5
    assert auc_rank_sum([0.9, 0.1], [True, False]) == 1.0


def test_perfect_and_constant_scorers():
    corpus = _toy()
    corpus = LabeledCorpus(corpus.records * 5)
    perfect = evaluate(corpus, fixed_scorer(lambda t: 1.0 if "fixed" in t else 0.0), folds=2)
    assert perfect.f_measure == 1.0 and perfect.auc == 1.0
    const = evaluate(corpus, fixed_scorer(lambda t: 0.7), folds=2)
    assert const.auc == 0.5


def test_stratified_folds_balance_and_determinism():
    labels = [ON] * 23 + [XR] * 17
    folds = stratified_folds(labels, 5, 1)
    assert folds == stratified_folds(labels, 5, 1)
    assert sorted(i for f in folds for i in f) == list(range(40))
    for f in folds:
        assert 4 <= sum(labels[i] is ON for i in f) <= 5
    with pytest.raises(TrainingError):
        stratified_folds(labels, 1, 0)


def test_single_class_fold_skipped(caplog):
    corpus = LabeledCorpus([("a #1", ON)] * 5 + [("b #2", XR)])
    report = evaluate(corpus, fixed_scorer(lambda t: 0.5), folds=3)
    assert report.effective_folds == 1
    assert report.to_dict()["effective_folds"] == 1


def test_majority_baseline():
    corpus = LabeledCorpus([("a", ON)] * 6 + [("b", XR)] * 4)
    report = evaluate(corpus, majority_fitter(), folds=2)
    assert report.recall == 1.0 and report.auc == 0.5


def test_corpus_tsv_round_trip(tmp_path):
    corpus = LabeledCorpus([("multi\nline #1", ON), ("tab-free #2", XR)])
    path = tmp_path / "c.tsv"
    corpus.dump(path)
    again = LabeledCorpus.load(path)
    assert again.records == corpus.records and again.digest == corpus.digest


def test_corpus_bad_lines(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("Maybe\tx\n")
    with pytest.raises(TrainingError):
        LabeledCorpus.load(path)
    path.write_text("no tab here\n")
    with pytest.raises(TrainingError):
        LabeledCorpus.load(path)
