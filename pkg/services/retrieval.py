"""
Retrieval Services for adaptlab.

Finds the past games whose opening turns look most like the current game.

Similarity is the position-wise joint-action match rate over the current
prefix: both players' actions must agree at a turn for it to count.
Ranking: more matches first, then higher stored ΔR, then older records.
Only records longer than the current prefix are eligible, since a record
without remaining turns has nothing to teach about the future.

``top_k_similar`` is the vectorised path used during play and training;
``scan_top_k`` is the exhaustive reference it must agree with.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import GameDomainError
from .game_core import GameRecord
from .history_memory import CurrentHistory, PastMemory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    record_ref: int
    matches: int = 0


def prefix_similarity(c: CurrentHistory, rec: GameRecord) -> SimilarityScore:
    """Fraction of the first m turns where both players' actions coincide."""
    m = c.length
    if m == 0:
        raise GameDomainError("Similarity is undefined for an empty current history")
    if rec.n < m:
        raise GameDomainError(f"Record has {rec.n} turns, shorter than the {m}-turn prefix")
    matches = int(np.count_nonzero(rec.joint_codes[:m] == c.codes()))
    return SimilarityScore(value=matches / m, record_ref=-1, matches=matches)


def rank_similar(c: CurrentHistory, p: PastMemory, k: int, exclude: Optional[int] = None) -> List[SimilarityScore]:
    """
    Top-k similarity scores, best first; ``record_ref`` indexes ``p``.

    ``exclude`` removes one memory position from consideration
    (leave-one-out retrieval during estimator training).
    """
    m = c.length
    if m == 0:
        raise GameDomainError("Retrieval needs at least one completed turn")
    if k < 1:
        raise GameDomainError(f"k must be positive, got {k}")
    if len(p) == 0:
        return []

    codes, lengths, deltas, seqs = p.code_matrix()
    eligible = lengths > m
    if exclude is not None and 0 <= exclude < len(p):
        eligible[exclude] = False
    candidates = np.flatnonzero(eligible)
    if candidates.size == 0:
        return []

    matches = np.count_nonzero(codes[candidates, :m] == c.codes()[None, :], axis=1)
    # np.lexsort sorts by the last key first
    order = np.lexsort((seqs[candidates], -deltas[candidates], -matches))[:k]
    return [
        SimilarityScore(value=int(matches[i]) / m, record_ref=int(candidates[i]), matches=int(matches[i]))
        for i in order
    ]


def top_k_similar(c: CurrentHistory, p: PastMemory, k: int, exclude: Optional[int] = None) -> List[GameRecord]:
    """The k most similar eligible records (fewer when memory holds fewer)."""
    return [p[score.record_ref] for score in rank_similar(c, p, k, exclude=exclude)]


def scan_top_k(c: CurrentHistory, p: PastMemory, k: int, exclude: Optional[int] = None) -> List[SimilarityScore]:
    """Exhaustive record-by-record reference for ``rank_similar``."""
    m = c.length
    if m == 0:
        raise GameDomainError("Retrieval needs at least one completed turn")
    scored = []
    for index, rec in enumerate(p):
        if index == exclude or rec.n <= m:
            continue
        score = prefix_similarity(c, rec)
        scored.append((-score.matches, -rec.delta_r, p.seq_of(index), index, score.matches))
    scored.sort()
    return [
        SimilarityScore(value=matches / m, record_ref=index, matches=matches)
        for _, _, _, index, matches in scored[:k]
    ]


__all__ = [
    'SimilarityScore',
    'prefix_similarity',
    'rank_similar',
    'top_k_similar',
    'scan_top_k',
]
