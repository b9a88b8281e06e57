"""Topology evaluation over prompt corpora.

Runs prompts through the pipeline, classifies each resulting graph, and
summarizes pass rates with exact binomial (Clopper-Pearson) confidence
intervals. Two ten-prompt corpora ship as fixtures, one per expected
topology class, together with the meta-prompts that regenerate them
against a real backend.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from . import graph as graphmod
from . import orchestrator
from .backends import GenerativeBackend
from .errors import DomainError
from .graph import TopologyClass

# Historical results for the reference experiment (10 prompts per class):
# linear 8/10, branching 10/10, with the 95% intervals as printed.
REPORTED_LINEAR = (8, 10, 0.44, 0.97)
REPORTED_BRANCHING = (10, 10, 0.69, 1.00)

NODE_COUNT_RANGE = orchestrator.NODE_COUNT_RANGE


@dataclass(frozen=True)
class TrialRecord:
    prompt: str
    expected: TopologyClass
    observed: TopologyClass | str  # class, or a failure tag
    node_count: int
    passed: bool


@dataclass(frozen=True)
class EvalSummary:
    k: int
    n: int
    rate: float
    ci_low: float
    ci_high: float
    alpha: float = 0.05


# ---------------------------------------------------------------------------
# Clopper-Pearson interval
# ---------------------------------------------------------------------------

def _binom_upper_tail(k: int, n: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p)."""
    return sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(k, n + 1))


def _binom_lower_tail(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p)."""
    return sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(0, k + 1))


def _bisect(f, lo: float, hi: float, tol: float = 1e-9) -> float:
    """Root of monotone f on [lo, hi] with f(lo) <= 0 <= f(hi)."""
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def clopper_pearson(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Exact binomial confidence bounds for k successes in n trials.

    Lower bound solves P(X >= k | p) = alpha/2 (0 when k = 0); upper bound
    solves P(X <= k | p) = alpha/2 (1 when k = n). Bisection on the exact
    tails to 1e-9.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise DomainError(f"k must be in [0, {n}], got {k}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    half = alpha / 2
    if k == 0:
        lower = 0.0
    else:
        # upper tail rises from 0 to 1 as p goes 0 -> 1
        lower = _bisect(lambda p: _binom_upper_tail(k, n, p) - half, 0.0, 1.0)
    if k == n:
        upper = 1.0
    else:
        # lower tail falls from 1 to 0 as p goes 0 -> 1
        upper = _bisect(lambda p: half - _binom_lower_tail(k, n, p), 0.0, 1.0)
    return lower, upper


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def run_trial(
    prompt: str,
    expected: TopologyClass,
    backend: GenerativeBackend,
    check_node_count: bool = True,
) -> TrialRecord:
    try:
        run = orchestrator.run_pipeline(prompt, backend)
    except Exception as exc:  # trials isolate failures, they never crash the batch
        return TrialRecord(
            prompt=prompt,
            expected=expected,
            observed=f"pipeline-error: {exc}",
            node_count=0,
            passed=False,
        )
    observed = graphmod.classify_topology(run.graph)
    count = len(run.graph.nodes)
    low, high = NODE_COUNT_RANGE
    passed = observed is expected and (not check_node_count or low <= count <= high)
    return TrialRecord(
        prompt=prompt,
        expected=expected,
        observed=observed,
        node_count=count,
        passed=passed,
    )


def run_eval(
    prompts: Sequence[tuple[TopologyClass, str]],
    backend: GenerativeBackend,
    check_node_count: bool = True,
    jobs: int = 1,
) -> list[TrialRecord]:
    """One pipeline trial per (expected class, prompt); order preserved.

    Pipeline failures become failed records, never exceptions.
    """
    if not prompts:
        raise ValueError("prompt list must be non-empty")

    def trial(case: tuple[TopologyClass, str]) -> TrialRecord:
        expected, prompt = case
        return run_trial(prompt, expected, backend, check_node_count)

    if jobs <= 1:
        return [trial(case) for case in prompts]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(trial, prompts))


def summarize(records: Iterable[TrialRecord], alpha: float = 0.05) -> EvalSummary:
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    k = sum(1 for r in records if r.passed)
    n = len(records)
    low, high = clopper_pearson(k, n, alpha)
    return EvalSummary(k=k, n=n, rate=k / n, ci_low=low, ci_high=high, alpha=alpha)


# ---------------------------------------------------------------------------
# Corpora
# ---------------------------------------------------------------------------

def _parse_corpus(text: str, source: str) -> list[tuple[TopologyClass, str]]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            class_name, prompt = line.split("\t", 1)
            entries.append((TopologyClass(class_name.strip()), prompt.strip()))
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: bad corpus line: {exc}") from exc
    if not entries:
        raise ValueError(f"{source}: corpus is empty")
    return entries


def builtin_corpora() -> dict[str, list[tuple[TopologyClass, str]]]:
    """The two shipped ten-prompt corpora, keyed 'branching' and 'linear'."""
    corpora = {}
    for name in ("branching", "linear"):
        text = resources.files("storygraph.corpora").joinpath(f"{name}.tsv").read_text(
            encoding="utf-8"
        )
        corpora[name] = _parse_corpus(text, f"{name}.tsv")
    return corpora


def meta_prompts() -> tuple[str, str]:
    """The corpus-regeneration prompts (branching first, then linear)."""
    text = resources.files("storygraph.corpora").joinpath("meta_prompts.txt").read_text(
        encoding="utf-8"
    )
    blocks = [b.strip() for b in text.split("\n\n") if b.strip()]
    return blocks[0], blocks[1]


def load_corpus(name_or_path: str | Path) -> list[tuple[TopologyClass, str]]:
    """A builtin corpus by name, or a TSV file: expected class, tab, prompt."""
    name = str(name_or_path)
    if name in ("branching", "linear"):
        return builtin_corpora()[name]
    path = Path(name_or_path)
    if not path.is_file():
        raise FileNotFoundError(f"no such corpus: {name}")
    return _parse_corpus(path.read_text(encoding="utf-8"), str(path))


def render_summary_table(rows: Sequence[tuple[str, EvalSummary]]) -> str:
    """Results in the reference report layout."""
    header = ("Narrative Type", "Correct / Total", "Success Rate", "95% CI")
    body = [
        (
            name,
            f"{s.k} / {s.n}",
            f"{s.rate:.0%}",
            f"[{s.ci_low:.2f}, {s.ci_high:.2f}]",
        )
        for name, s in rows
    ]
    widths = [
        max(len(header[col]), *(len(row[col]) for row in body)) if body else len(header[col])
        for col in range(4)
    ]
    lines = [
        "  ".join(header[col].ljust(widths[col]) for col in range(4)).rstrip(),
        "  ".join("-" * widths[col] for col in range(4)),
    ]
    for row in body:
        lines.append("  ".join(row[col].ljust(widths[col]) for col in range(4)).rstrip())
    return "\n".join(lines) + "\n"
