"""Text metrics against hand counts and independent oracle implementations."""

import json
import math
from functools import lru_cache

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mergelab.metrics import (
    GENERATION_METRICS,
    CompositeScore,
    IfevalStrict,
    bleu,
    composite_score,
    ifeval_score,
    ingest_external_scores,
    medical_avg,
    rouge_l,
    rouge_n,
    tokenize,
)

# ---------------------------------------------------------------------------
# Independent oracles, written before the implementations they check and
# sharing no code with them.


def oracle_bleu(candidate_tokens, reference_tokens):
    """Scalar loop BLEU-4: uniform 1/4 weights, add-one smoothing for n >= 2,
    brevity penalty exp(1 - r/c) when c < r."""
    if len(candidate_tokens) == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_counts = {}
        for i in range(len(candidate_tokens) - n + 1):
            gram = tuple(candidate_tokens[i : i + n])
            cand_counts[gram] = cand_counts.get(gram, 0) + 1
        ref_counts = {}
        for i in range(len(reference_tokens) - n + 1):
            gram = tuple(reference_tokens[i : i + n])
            ref_counts[gram] = ref_counts.get(gram, 0) + 1
        matched = 0
        total = 0
        for gram, count in cand_counts.items():
            total += count
            matched += min(count, ref_counts.get(gram, 0))
        if n >= 2:
            matched += 1
            total += 1
        if matched == 0 or total == 0:
            return 0.0
        log_sum += 0.25 * math.log(matched / total)
    c, r = len(candidate_tokens), len(reference_tokens)
    penalty = math.exp(1.0 - r / c) if c < r else 1.0
    return penalty * math.exp(log_sum)


def oracle_lcs(x, y):
    """Memoized-recursion LCS length."""

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 or j == 0:
            return 0
        if x[i - 1] == y[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(x), len(y))


# Values frozen from a standalone run of oracle_bleu before the build.
FROZEN_BLEU_FIXTURES = [
    ("the cat sat", "the cat sat on the mat", 0.36787944117144233),
    ("the cat sat on the mat quickly today", "the cat sat on the mat", 0.719408902854813),
    ("a b c d", "a b c d", 1.0),
    ("the quick brown fox jumps", "the quick brown dog sleeps", 0.4949232003839765),
]

WORDS = st.lists(
    st.sampled_from("the cat sat on mat a b c dog ran fast slow bp 120 mmhg".split()),
    min_size=0,
    max_size=12,
)


class TestAggregates:
    def test_medical_avg_three(self):
        assert medical_avg({"a": 0.6, "b": 0.7, "c": 0.8}) == pytest.approx(0.7, abs=1e-12)

    def test_medical_avg_single(self):
        assert medical_avg({"m": 0.42}) == 0.42

    def test_medical_avg_nine_random_vs_high_precision_oracle(self):
        rng_values = [0.5488135, 0.71518937, 0.60276338, 0.54488318, 0.4236548,
                      0.64589411, 0.43758721, 0.891773, 0.96366276]
        scores = {f"bench_{i}": v for i, v in enumerate(rng_values)}
        with mpmath.workdps(50):
            expected = float(mpmath.fsum(rng_values) / len(rng_values))
        assert abs(medical_avg(scores) - expected) < 1e-12

    def test_medical_avg_empty_errors(self):
        with pytest.raises(ValueError, match="at least one"):
            medical_avg({})

    def test_medical_avg_range_checked(self):
        with pytest.raises(ValueError, match="out of range"):
            medical_avg({"a": 1.2})

    @settings(max_examples=100, deadline=None)
    @given(value=st.floats(min_value=0.0, max_value=1.0), copies=st.integers(1, 12))
    def test_medical_avg_of_identical_values_is_exact(self, value, copies):
        scores = {f"b{i}": value for i in range(copies)}
        assert medical_avg(scores) == value

    def test_ifeval_examples(self):
        assert ifeval_score(IfevalStrict(0.2, 0.3)) == 0.25
        assert ifeval_score(IfevalStrict(1.0, 0.0)) == 0.5

    @given(x=st.floats(min_value=0.0, max_value=1.0))
    def test_ifeval_idempotent_average(self, x):
        assert ifeval_score(IfevalStrict(x, x)) == x

    def test_ifeval_range_validated(self):
        with pytest.raises(ValueError, match="out of range"):
            IfevalStrict(1.1, 0.5)


class TestTokenize:
    def test_sentence(self):
        assert tokenize("The cat sat.") == ["the", "cat", "sat"]

    def test_empty(self):
        assert tokenize("") == []

    def test_clinical_measurements(self):
        assert tokenize("BP 120/80 mmHg") == ["bp", "120", "80", "mmhg"]

    def test_underscore_is_separator(self):
        assert tokenize("foo_bar") == ["foo", "bar"]


class TestRougeN:
    def test_identical(self):
        assert rouge_n("a b c", "a b c", 1) == 1.0
        assert rouge_n("a b c", "a b c", 2) == 1.0

    def test_hand_count_two_thirds(self):
        assert rouge_n("a b c", "a b d", 1) == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_reference_shorter_than_n(self):
        assert rouge_n("a b c", "a", 2) == 0.0

    def test_empty_sides(self):
        assert rouge_n("", "a b", 1) == 0.0
        assert rouge_n("a b", "", 1) == 0.0

    def test_clipping(self):
        # candidate repeats "the" three times; reference has it once
        assert rouge_n("the the the", "the", 1) == pytest.approx(2 * (1 / 3) * 1.0 / (1 / 3 + 1.0))

    def test_n_validation(self):
        with pytest.raises(ValueError, match=">= 1"):
            rouge_n("a", "a", 0)

    @settings(max_examples=100, deadline=None)
    @given(cand=WORDS, ref=WORDS, n=st.integers(1, 3))
    def test_swap_duality_and_bounds(self, cand, ref, n):
        c, r = " ".join(cand), " ".join(ref)
        score = rouge_n(c, r, n)
        assert 0.0 <= score <= 1.0
        assert score == pytest.approx(rouge_n(r, c, n), abs=1e-12)


class TestRougeL:
    def test_identical(self):
        assert rouge_l("the cat sat", "the cat sat") == 1.0

    def test_hand_dp_example(self):
        # LCS("the cat", "the cat sat on mat") = 2; P = 1, R = 0.4
        assert rouge_l("the cat", "the cat sat on mat") == pytest.approx(0.5714285714285714, abs=1e-9)

    def test_disjoint_vocabularies(self):
        assert rouge_l("alpha beta", "gamma delta") == 0.0

    def test_empty(self):
        assert rouge_l("", "a") == 0.0

    @settings(max_examples=100, deadline=None)
    @given(cand=WORDS, ref=WORDS)
    def test_matches_memoized_recursion_oracle(self, cand, ref):
        c, r = " ".join(cand), " ".join(ref)
        score = rouge_l(c, r)
        assert 0.0 <= score <= 1.0
        lcs = oracle_lcs(tuple(cand), tuple(ref))
        if not cand or not ref or lcs == 0:
            assert score == 0.0
        else:
            p, rec = lcs / len(cand), lcs / len(ref)
            assert score == pytest.approx(2 * p * rec / (p + rec), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(tokens=st.lists(st.sampled_from("a b c d".split()), min_size=1, max_size=8), seed=st.integers(0, 100))
    def test_permuted_multiset_bounded_by_unigram_rouge(self, tokens, seed):
        import random

        permuted = tokens[:]
        random.Random(seed).shuffle(permuted)
        cand, ref = " ".join(tokens), " ".join(permuted)
        assert rouge_l(cand, ref) <= rouge_n(cand, ref, 1) + 1e-12


class TestBleu:
    def test_identical_long_sentence_is_exactly_one(self):
        text = "the quick brown fox jumps over the dog"
        assert bleu(text, text) == 1.0

    def test_empty_candidate(self):
        assert bleu("", "the cat") == 0.0

    @pytest.mark.parametrize("cand,ref,expected", FROZEN_BLEU_FIXTURES)
    def test_frozen_fixtures(self, cand, ref, expected):
        assert bleu(cand, ref) == pytest.approx(expected, abs=1e-6)

    def test_short_candidate_is_pure_brevity_penalty(self):
        # all clipped precisions are 1 (plain or smoothed), so BLEU = exp(1 - 6/3)
        assert bleu("the cat sat", "the cat sat on the mat") == pytest.approx(math.exp(-1.0), abs=1e-9)

    @settings(max_examples=150, deadline=None)
    @given(cand=WORDS, ref=WORDS)
    def test_matches_independent_loop_oracle(self, cand, ref):
        score = bleu(" ".join(cand), " ".join(ref))
        assert 0.0 <= score <= 1.0
        assert score == pytest.approx(oracle_bleu(cand, ref), abs=1e-6)


class TestComposite:
    def test_uniform_half(self):
        comp = composite_score(bleu=0.5, meteor=0.5, rouge1=0.5, rouge2=0.5, rougeL=0.5, bertscore=0.5)
        assert comp.overall == 0.5

    def test_ascending_values(self):
        comp = composite_score(bleu=0.1, meteor=0.2, rouge1=0.3, rouge2=0.4, rougeL=0.5, bertscore=0.6)
        assert comp.overall == pytest.approx(0.35, abs=1e-9)
        assert not comp.partial

    def test_missing_metric_errors_without_flag(self):
        with pytest.raises(ValueError, match="missing metrics: meteor"):
            composite_score(bleu=0.1, rouge1=0.3, rouge2=0.4, rougeL=0.5, bertscore=0.6)

    def test_partial_mean_is_labeled(self):
        comp = composite_score(bleu=0.2, rouge1=0.4, rouge2=0.4, rougeL=0.4, bertscore=0.6, allow_partial=True)
        assert comp.partial
        assert comp.meteor is None
        assert comp.overall == pytest.approx(0.4, abs=1e-9)

    def test_permutation_invariance(self):
        values = [0.12, 0.34, 0.56, 0.78, 0.9, 0.01]
        import itertools

        keys = list(GENERATION_METRICS)
        baseline = composite_score(**dict(zip(keys, values))).overall
        for perm in itertools.islice(itertools.permutations(values), 24):
            assert composite_score(**dict(zip(keys, perm))).overall == pytest.approx(baseline, abs=1e-12)

    def test_range_validation(self):
        with pytest.raises(ValueError, match="out of range"):
            composite_score(bleu=1.3, meteor=0.2, rouge1=0.3, rouge2=0.4, rougeL=0.5, bertscore=0.6)

    def test_composite_score_invariant_enforced(self):
        with pytest.raises(ValueError, match="does not match"):
            CompositeScore(bleu=0.5, meteor=0.5, rouge1=0.5, rouge2=0.5, rougeL=0.5, bertscore=0.5, overall=0.9)


VALID_RECORD = {
    "ifeval": {"prompt_strict": 0.5, "instance_strict": 0.6},
    "benchmarks": {"medqa": 0.68, "pubmedqa": 0.70, "mmlu_clinical": 0.72},
    "generation": {"meteor": 0.31, "bertscore": 0.86},
}


class TestIngest:
    def test_valid_record_round_trip(self, tmp_path):
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"ckpt_a": VALID_RECORD}))
        records = ingest_external_scores(path)
        record = records["ckpt_a"]
        assert ifeval_score(record.ifeval) == pytest.approx(0.55)
        with mpmath.workdps(50):
            expected = float(mpmath.fsum([0.68, 0.70, 0.72]) / 3)
        assert medical_avg(record.benchmarks) == pytest.approx(expected, abs=1e-12)
        assert record.generation == {"meteor": 0.31, "bertscore": 0.86}

    def test_generation_subset_permitted(self, tmp_path):
        record = dict(VALID_RECORD)
        record["generation"] = {}
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"a": record}))
        assert ingest_external_scores(path)["a"].generation == {}

    def test_out_of_range_names_field(self, tmp_path):
        record = json.loads(json.dumps(VALID_RECORD))
        record["benchmarks"]["medqa"] = 1.3
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"ckpt_a": record}))
        with pytest.raises(ValueError, match=r"ckpt_a\.benchmarks\.medqa"):
            ingest_external_scores(path)

    def test_duplicate_checkpoint_name(self, tmp_path):
        body = json.dumps(VALID_RECORD)
        path = tmp_path / "scores.json"
        path.write_text(f'{{"ckpt_a": {body}, "ckpt_a": {body}}}')
        with pytest.raises(ValueError, match="duplicate key 'ckpt_a'"):
            ingest_external_scores(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "scores.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="malformed JSON"):
            ingest_external_scores(path)

    def test_unknown_generation_metric(self, tmp_path):
        record = json.loads(json.dumps(VALID_RECORD))
        record["generation"]["chrf"] = 0.5
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"a": record}))
        with pytest.raises(ValueError, match="unknown metrics.*chrf"):
            ingest_external_scores(path)

    def test_empty_benchmarks_rejected(self, tmp_path):
        record = json.loads(json.dumps(VALID_RECORD))
        record["benchmarks"] = {}
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"a": record}))
        with pytest.raises(ValueError, match="non-empty"):
            ingest_external_scores(path)

    def test_missing_ifeval_rejected(self, tmp_path):
        record = json.loads(json.dumps(VALID_RECORD))
        del record["ifeval"]
        path = tmp_path / "scores.json"
        path.write_text(json.dumps({"a": record}))
        with pytest.raises(ValueError, match=r"a\.ifeval"):
            ingest_external_scores(path)
