"""Text normalization and the token-overlap metrics built on it.

Every overlap metric in this package goes through one normalization: lower
case, strip punctuation, drop the articles a/an/the, split on whitespace.
The result is a multiset of tokens (`TokenBag`), so repeated words count as
many times as they appear.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import CANNOTANSWER, AnswerSpan

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

ANYTHING_ELSE_MARKERS = ("other", "else")


def normalize_text(text: str) -> list[str]:
    """Normalized token list: lower, strip punctuation, drop articles, split."""
    lowered = text.lower().translate(_PUNCT_TABLE)
    return [tok for tok in lowered.split() if tok not in _ARTICLES]


@dataclass(frozen=True)
class TokenBag:
    """Multiset of normalized tokens."""

    counts: Counter = field(default_factory=Counter)

    @classmethod
    def from_text(cls, text: str) -> "TokenBag":
        return cls(Counter(normalize_text(text)))

    def __len__(self) -> int:
        return sum(self.counts.values())

    def __bool__(self) -> bool:
        return len(self) > 0

    def overlap(self, other: "TokenBag") -> int:
        """Size of the multiset intersection."""
        return sum((self.counts & other.counts).values())


def normalize(text: str) -> TokenBag:
    return TokenBag.from_text(text)


def token_f1(a: TokenBag | str, b: TokenBag | str) -> float:
    """Harmonic mean of token precision and recall between two bags.

    Both empty after normalization scores 1.0 (two vacuous strings agree);
    exactly one empty scores 0.0.
    """
    bag_a = a if isinstance(a, TokenBag) else normalize(a)
    bag_b = b if isinstance(b, TokenBag) else normalize(b)
    if not bag_a and not bag_b:
        return 1.0
    if not bag_a or not bag_b:
        return 0.0
    common = bag_a.overlap(bag_b)
    if common == 0:
        return 0.0
    precision = common / len(bag_a)
    recall = common / len(bag_b)
    return 2 * precision * recall / (precision + recall)


def token_precision(candidate: TokenBag | str, reference: TokenBag | str) -> float:
    """Fraction of candidate tokens also present in the reference (multiset).

    An empty candidate scores 0.0 regardless of the reference.
    """
    bag_c = candidate if isinstance(candidate, TokenBag) else normalize(candidate)
    bag_r = reference if isinstance(reference, TokenBag) else normalize(reference)
    if not bag_c:
        return 0.0
    return bag_c.overlap(bag_r) / len(bag_c)


def max_f1_over_refs(candidate: TokenBag | str, references: Iterable[TokenBag | str]) -> float:
    """Best token F1 of a candidate against any reference; no references -> 0.0."""
    best = 0.0
    seen = False
    for ref in references:
        seen = True
        score = token_f1(candidate, ref)
        if score > best:
            best = score
    return best if seen else 0.0


def is_unanswerable(answer: AnswerSpan | str) -> bool:
    """True for the unanswerable marker, as a span flag or the literal text."""
    if isinstance(answer, AnswerSpan):
        return answer.is_unanswerable or answer.text == CANNOTANSWER
    return answer == CANNOTANSWER


def is_anything_else(question: str, markers: Sequence[str] = ANYTHING_ELSE_MARKERS) -> bool:
    """True when the question belongs to the generic follow-up family.

    Membership is decided on normalized tokens, not substrings, so
    "otherwise" does not count as "other".
    """
    tokens = set(normalize_text(question))
    return any(marker in tokens for marker in markers)


# ---------------------------------------------------------------------------
# N-gram precision scores.
#
# B-n here is brevity penalty times the order-n modified precision alone,
# not the cumulative geometric mean over orders 1..n.  Worked check, single
# pair "a b c d" against "a b c e": bigrams of the candidate are
# (a b), (b c), (c d); the reference contributes (a b), (b c), so
# B-2 = 1.0 * 2/3.  Tokenization is plain whitespace split on both sides;
# normalization above is not applied.
# ---------------------------------------------------------------------------


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_hits(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int
                  ) -> tuple[int, int]:
    cand_counts = ngram_counts(candidate, n)
    total = sum(cand_counts.values())
    if total == 0:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    hits = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
    return hits, total


def _closest_ref_len(cand_len: int, ref_lens: Sequence[int]) -> int:
    # Ties broken toward the shorter reference.
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def brevity_penalty(candidate_len: int, reference_len: int) -> float:
    if candidate_len == 0:
        return 0.0
    if candidate_len >= reference_len:
        return 1.0
    return math.exp(1.0 - reference_len / candidate_len)


def sentence_bleu_n(candidate: str, references: Sequence[str], n: int) -> float:
    """Order-n score for one candidate: brevity penalty times modified n-gram
    precision against the closest-length reference set.  Empty candidate or
    candidate shorter than n tokens scores 0.0.
    """
    cand = candidate.split()
    refs = [ref.split() for ref in references]
    if not cand or not refs:
        return 0.0
    hits, total = _clipped_hits(cand, refs, n)
    if total == 0:
        return 0.0
    bp = brevity_penalty(len(cand), _closest_ref_len(len(cand), [len(r) for r in refs]))
    return bp * (hits / total)


def corpus_bleu_n(
    pairs: Iterable[tuple[str, Sequence[str]]], n: int
) -> float:
    """Corpus-level order-n score: clipped hit and total counts are summed
    over all pairs before dividing, and the brevity penalty uses the summed
    candidate and closest-reference lengths.
    """
    hits_sum = 0
    total_sum = 0
    cand_len_sum = 0
    ref_len_sum = 0
    for candidate, references in pairs:
        cand = candidate.split()
        refs = [ref.split() for ref in references]
        if not refs:
            continue
        cand_len_sum += len(cand)
        if cand:
            ref_len_sum += _closest_ref_len(len(cand), [len(r) for r in refs])
        else:
            ref_len_sum += min(len(r) for r in refs)
        hits, total = _clipped_hits(cand, refs, n)
        hits_sum += hits
        total_sum += total
    if total_sum == 0:
        return 0.0
    return brevity_penalty(cand_len_sum, ref_len_sum) * (hits_sum / total_sum)
