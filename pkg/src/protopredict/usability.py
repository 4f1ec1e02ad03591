"""Keyword-level usability scoring.

Free-text usability answers are tokenized, stopword-filtered and reduced to
lemmas; each predicted lemma is scored against the design's ground-truth
lemmas via word-vector cosine (identical lemmas always score 100, missing
vocabulary scores 0), the top three matches per design are flagged as
representatives, and flagged matches aggregate into a similarity/frequency
histogram and one frequency-weighted overall score per group.

The lexicons are plain data files (word vectors, a lemma table, stopwords)
with documented formats, so the pipeline carries no NLP runtime dependency
and is replaceable wholesale by flag.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping, Union

import numpy as np

from .errors import ParseError, ValidationError
from .retrieval import cosine_similarity

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]+")

Source = Union[str, Path, IO[str]]


def _read_lines(source: Source) -> list[str]:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8").splitlines()
    if isinstance(source, str):
        return Path(source).read_text(encoding="utf-8").splitlines()
    return source.read().splitlines()


@dataclass(frozen=True)
class WordVectorLexicon:
    """Case-insensitive token -> L2-normalized vector map of one dimension."""

    dim: int
    vectors: Mapping[str, np.ndarray]

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token.lower())

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class KeywordMatch:
    predicted_lemma: str
    best_truth_lemma: str
    similarity: float
    frequency: int
    representative: bool = False


def load_stopwords(source: Source) -> frozenset[str]:
    """One token per line; blank lines and #-comments ignored."""
    words = set()
    for line in _read_lines(source):
        token = line.strip().lower()
        if token and not token.startswith("#"):
            words.add(token)
    return frozenset(words)


def load_lemma_lexicon(source: Source) -> dict[str, str]:
    """Two-column tab-separated "inflected<TAB>lemma", case-folded.

    Every lemma on the right side must be a fixed point of the table, so
    lemmatization is idempotent by construction.
    """
    table: dict[str, str] = {}
    for lineno, line in enumerate(_read_lines(source), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("lemma line must have two tab-separated columns", locus=f"line {lineno}")
        inflected, lemma = parts[0].strip().lower(), parts[1].strip().lower()
        if not inflected or not lemma:
            raise ParseError("empty lemma column", locus=f"line {lineno}")
        table[inflected] = lemma
    for inflected, lemma in table.items():
        if table.get(lemma, lemma) != lemma:
            raise ValidationError(
                f"lemma {lemma!r} (from {inflected!r}) is itself mapped to {table[lemma]!r}"
            )
    return table


def load_word_vectors(source: Source) -> WordVectorLexicon:
    """Plain-text word vectors: "token c1 c2 ... cd" per line.

    Dimension is inferred from the first line and enforced afterwards;
    vectors are L2-normalized on load; a repeated token wins with its last
    occurrence (logged as a warning).
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for lineno, line in enumerate(_read_lines(source), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if dim is None:
            if len(parts) < 2:
                raise ParseError("vector line needs a token and components", locus=f"line {lineno}")
            dim = len(parts) - 1
        if len(parts) - 1 != dim:
            raise ParseError(
                f"expected {dim} components, found {len(parts) - 1}", locus=f"line {lineno}"
            )
        token = parts[0].lower()
        try:
            vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad component: {exc}", locus=f"line {lineno}") from exc
        if token in vectors:
            logger.warning("duplicate word vector for %r at line %d; last wins", token, lineno)
        norm = float(np.linalg.norm(vec))
        vectors[token] = vec / norm if norm > 0.0 else vec
    if dim is None:
        raise ParseError("word-vector file is empty")
    return WordVectorLexicon(dim=dim, vectors=vectors)


def tokenize_and_filter(text: str, stopwords: frozenset[str]) -> list[str]:
    """Case-folded alphabetic tokens, in order, with stopwords removed."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in stopwords]


def lemmatize(token: str, lexicon: Mapping[str, str]) -> str:
    """Table lookup with identity fallback for unknown tokens."""
    return lexicon.get(token, token)


def lemma_frequencies(
    texts: Iterable[str],
    stopwords: frozenset[str],
    lemma_lexicon: Mapping[str, str],
) -> dict[str, int]:
    """Lemma occurrence counts over all texts (insertion-ordered)."""
    freq: dict[str, int] = {}
    for text in texts:
        for token in tokenize_and_filter(text, stopwords):
            lemma = lemmatize(token, lemma_lexicon)
            freq[lemma] = freq.get(lemma, 0) + 1
    return freq


def keyword_similarity(a: str, b: str, vectors: WordVectorLexicon) -> float:
    """Similarity rating in [0, 100].

    Identical lemmas score exactly 100 whether or not the lexicon knows
    them; otherwise both must be in the lexicon and score max(0, cosine)
    x 100; an unknown member of a non-identical pair scores 0.
    """
    ka, kb = a.lower(), b.lower()
    if ka == kb:
        return 100.0
    va = vectors.get(ka)
    vb = vectors.get(kb)
    if va is None or vb is None:
        return 0.0
    if float(np.linalg.norm(va)) == 0.0 or float(np.linalg.norm(vb)) == 0.0:
        return 0.0
    return max(0.0, cosine_similarity(va, vb)) * 100.0


def match_keywords(
    predicted: Mapping[str, int] | Iterable[tuple[str, int]],
    truth_lemmas: Iterable[str],
    vectors: WordVectorLexicon,
    top_n: int = 3,
) -> list[KeywordMatch]:
    """Score every predicted lemma by its best truth match; flag the top_n.

    Result is sorted by similarity descending, ties broken alphabetically by
    predicted lemma; the first top_n entries carry representative=True.
    """
    truth = [t.lower() for t in truth_lemmas]
    if not truth:
        raise ValidationError("truth_lemmas must be non-empty")
    pairs = predicted.items() if isinstance(predicted, Mapping) else predicted
    scored: list[KeywordMatch] = []
    for lemma, freq in pairs:
        if freq < 1:
            raise ValidationError(f"frequency must be >= 1, got {freq!r} for {lemma!r}")
        best_lemma = ""
        best_score = -1.0
        for t in sorted(truth):
            score = keyword_similarity(lemma, t, vectors)
            if score > best_score:
                best_lemma, best_score = t, score
        scored.append(
            KeywordMatch(
                predicted_lemma=lemma.lower(),
                best_truth_lemma=best_lemma,
                similarity=best_score,
                frequency=int(freq),
            )
        )
    scored.sort(key=lambda m: (-m.similarity, m.predicted_lemma))
    return [
        KeywordMatch(
            predicted_lemma=m.predicted_lemma,
            best_truth_lemma=m.best_truth_lemma,
            similarity=m.similarity,
            frequency=m.frequency,
            representative=(i < top_n),
        )
        for i, m in enumerate(scored)
    ]


def similarity_distribution(
    matches: Iterable[KeywordMatch], bin_width: int = 10
) -> list[tuple[int, int]]:
    """Frequency totals per similarity bin: [0,10), ..., [90,100] (top closed)."""
    if bin_width <= 0 or 100 % bin_width != 0:
        raise ValidationError(f"bin_width must divide 100, got {bin_width!r}")
    n_bins = 100 // bin_width
    counts = [0] * n_bins
    for m in matches:
        idx = min(int(m.similarity // bin_width), n_bins - 1)
        counts[idx] += m.frequency
    return [(i * bin_width, counts[i]) for i in range(n_bins)]


def overall_similarity(matches: Iterable[KeywordMatch]) -> float:
    """Frequency-weighted mean similarity over flagged (top-3) matches."""
    flagged = [m for m in matches if m.representative]
    if not flagged:
        raise ValidationError("no flagged representative matches to aggregate")
    weight = sum(m.frequency for m in flagged)
    return sum(m.similarity * m.frequency for m in flagged) / weight


# --- bundled default lexicons -------------------------------------------------


def _bundled(name: str) -> Path:
    return Path(str(resources.files("protopredict").joinpath("data", name)))


def load_default_stopwords() -> frozenset[str]:
    return load_stopwords(_bundled("stopwords.txt"))


def load_default_lemma_lexicon() -> dict[str, str]:
    return load_lemma_lexicon(_bundled("lemmas.tsv"))


def load_default_word_vectors() -> WordVectorLexicon:
    return load_word_vectors(_bundled("vectors.txt"))
