"""Confidence intervals, eval trials, and the shipped corpora.

clopper_pearson is checked against two independent oracles: scipy's beta
quantile formulation and the defining binomial tail equalities.
"""

from __future__ import annotations

import random

import pytest
from scipy.stats import beta, binom

from storygraph import evaluation as ev
from storygraph.backends import BRANCH_CUE, GenerativeBackend, ScriptedBackend
from storygraph.errors import DomainError
from storygraph.evaluation import TrialRecord, clopper_pearson, summarize
from storygraph.graph import TopologyClass


def cp_oracle(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


class TestClopperPearson:
    def test_reference_rows_to_two_decimals(self):
        lo, hi = clopper_pearson(8, 10, 0.05)
        assert (round(lo, 2), round(hi, 2)) == (0.44, 0.97)
        lo, hi = clopper_pearson(10, 10, 0.05)
        assert (round(lo, 2), round(hi, 2)) == (0.69, 1.00)

    def test_three_decimal_examples(self):
        assert clopper_pearson(8, 10, 0.05) == pytest.approx((0.444, 0.975), abs=5e-4)
        assert clopper_pearson(10, 10, 0.05) == pytest.approx((0.692, 1.000), abs=5e-4)
        assert clopper_pearson(0, 10, 0.05) == pytest.approx((0.000, 0.308), abs=5e-4)

    def test_matches_beta_quantile_oracle(self):
        for n in range(1, 13):
            for k in range(n + 1):
                assert clopper_pearson(k, n) == pytest.approx(cp_oracle(k, n), abs=1e-6)

    def test_tail_equalities(self):
        # the bounds are defined by their binomial tail probabilities
        for n in range(1, 13):
            for k in range(n + 1):
                lo, hi = clopper_pearson(k, n, 0.05)
                if k > 0:
                    assert float(1 - binom.cdf(k - 1, n, lo)) == pytest.approx(0.025, abs=1e-6)
                if k < n:
                    assert float(binom.cdf(k, n, hi)) == pytest.approx(0.025, abs=1e-6)

    def test_degenerate_bounds_exact(self):
        for n in (1, 5, 12):
            assert clopper_pearson(0, n)[0] == 0.0
            assert clopper_pearson(n, n)[1] == 1.0

    def test_monotone_in_k(self):
        for n in (5, 10, 12):
            lows = [clopper_pearson(k, n)[0] for k in range(n + 1)]
            highs = [clopper_pearson(k, n)[1] for k in range(n + 1)]
            assert lows == sorted(lows)
            assert highs == sorted(highs)

    def test_bounds_bracket_rate(self):
        for n in (1, 4, 9, 12):
            for k in range(n + 1):
                lo, hi = clopper_pearson(k, n)
                assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            clopper_pearson(-1, 10)
        with pytest.raises(DomainError):
            clopper_pearson(11, 10)
        with pytest.raises(DomainError):
            clopper_pearson(1, 0)
        with pytest.raises(DomainError):
            clopper_pearson(1, 10, alpha=0.0)
        with pytest.raises(DomainError):
            clopper_pearson(1, 10, alpha=1.0)


def record(passed: bool) -> TrialRecord:
    return TrialRecord(
        prompt="p", expected=TopologyClass.LINEAR,
        observed=TopologyClass.LINEAR if passed else TopologyClass.BRANCHING,
        node_count=9, passed=passed,
    )


class TestSummarize:
    def test_eight_of_ten(self):
        records = [record(True)] * 8 + [record(False)] * 2
        summary = summarize(records)
        assert (summary.k, summary.n, summary.rate) == (8, 10, 0.8)
        assert summary.ci_low == pytest.approx(0.4439, abs=1e-4)
        assert summary.ci_high == pytest.approx(0.9748, abs=1e-4)

    def test_all_pass_and_all_fail(self):
        assert summarize([record(True)] * 10).ci_high == 1.0
        assert summarize([record(False)] * 10).ci_low == 0.0

    def test_order_independent(self):
        records = [record(i % 3 != 0) for i in range(10)]
        shuffled = records[:]
        random.Random(5).shuffle(shuffled)
        assert summarize(records) == summarize(shuffled)

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestCorpora:
    def test_shipped_corpora_shape(self):
        corpora = ev.builtin_corpora()
        assert set(corpora) == {"branching", "linear"}
        assert len(corpora["branching"]) == 10
        assert len(corpora["linear"]) == 10
        assert all(c is TopologyClass.BRANCHING for c, _ in corpora["branching"])
        assert all(c is TopologyClass.LINEAR for c, _ in corpora["linear"])

    def test_first_prompts(self):
        corpora = ev.builtin_corpora()
        assert corpora["branching"][0][1] == (
            "A group of friends enters a haunted mansion, each taking a "
            "different hallway that leads to strange encounters before they reunite."
        )
        assert corpora["linear"][0][1] == (
            "A child sets out to find their lost dog and faces a series of "
            "challenges along the way."
        )

    def test_branch_cues_separate_the_corpora(self):
        # the scripted reasoner branches exactly when this cue fires, so the
        # corpora must be perfectly separated by it
        corpora = ev.builtin_corpora()
        assert all(BRANCH_CUE.search(p) for _, p in corpora["branching"])
        assert not any(BRANCH_CUE.search(p) for _, p in corpora["linear"])

    def test_load_corpus_from_file(self, tmp_path):
        path = tmp_path / "mini.tsv"
        path.write_text("Linear\tA tale.\nBranching\tMany tales.\n", encoding="utf-8")
        corpus = ev.load_corpus(path)
        assert corpus == [
            (TopologyClass.LINEAR, "A tale."),
            (TopologyClass.BRANCHING, "Many tales."),
        ]

    def test_load_corpus_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ev.load_corpus("no-such-corpus")
        bad = tmp_path / "bad.tsv"
        bad.write_text("NotAClass\tprompt\n", encoding="utf-8")
        with pytest.raises(ValueError):
            ev.load_corpus(bad)

    def test_meta_prompts(self):
        branching_meta, linear_meta = ev.meta_prompts()
        assert "branching narrative" in branching_meta
        assert "linear sequence" in linear_meta
        assert branching_meta.startswith("Generate 10 user prompts")
        assert linear_meta.startswith("Generate 10 user prompts")


class FailOnPrompt(GenerativeBackend):
    """Delegates to a scripted backend, except for one poisoned prompt."""

    def __init__(self, poison: str):
        self.poison = poison
        self.inner = ScriptedBackend()

    def complete(self, task, prompt, params=None):
        if task == "generate" and self.poison in prompt:
            raise RuntimeError("refused")
        return self.inner.complete(task, prompt, params)


class TestRunEval:
    def test_branching_corpus_all_branching(self):
        corpus = ev.builtin_corpora()["branching"]
        records = ev.run_eval(corpus, ScriptedBackend(seed=0))
        assert len(records) == 10
        assert all(r.observed is TopologyClass.BRANCHING for r in records)
        assert all(r.passed for r in records)
        assert all(8 <= r.node_count <= 12 for r in records)

    def test_linear_corpus_all_linear(self):
        corpus = ev.builtin_corpora()["linear"]
        records = ev.run_eval(corpus, ScriptedBackend(seed=0))
        assert all(r.observed is TopologyClass.LINEAR for r in records)
        assert all(r.passed for r in records)

    def test_failure_recorded_not_raised(self):
        corpus = ev.builtin_corpora()["linear"]
        backend = FailOnPrompt(corpus[3][1])
        records = ev.run_eval(corpus, backend)
        assert not records[3].passed
        assert "pipeline-error" in str(records[3].observed)
        assert sum(1 for r in records if r.passed) == 9

    def test_parallel_equals_serial(self):
        corpus = ev.builtin_corpora()["branching"]
        serial = ev.run_eval(corpus, ScriptedBackend(seed=2))
        parallel = ev.run_eval(corpus, ScriptedBackend(seed=2), jobs=4)
        assert serial == parallel

    def test_node_count_flag(self):
        backend = ScriptedBackend()
        records = ev.run_eval(
            [(TopologyClass.LINEAR, "hi")], backend, check_node_count=False
        )
        assert records[0].passed in (True, False)  # no crash; flag respected below
        # scripted generate always lands in the 8..12 window, so fabricate a
        # pass/fail difference via expected-class mismatch instead
        records = ev.run_eval(
            [(TopologyClass.BRANCHING, "hi")], backend, check_node_count=False
        )
        assert not records[0].passed

    def test_empty_prompt_list(self):
        with pytest.raises(ValueError):
            ev.run_eval([], ScriptedBackend())


class TestRenderSummaryTable:
    def test_reference_layout(self):
        rows = [
            ("Linear", summarize([record(True)] * 8 + [record(False)] * 2)),
            ("Branching", summarize([record(True)] * 10)),
        ]
        table = ev.render_summary_table(rows)
        lines = table.splitlines()
        assert "Narrative Type" in lines[0]
        assert "Correct / Total" in lines[0]
        assert "Success Rate" in lines[0]
        assert "95% CI" in lines[0]
        assert "8 / 10" in table and "80%" in table and "[0.44, 0.97]" in table
        assert "10 / 10" in table and "100%" in table and "[0.69, 1.00]" in table
