"""Global candidate scoring and selection.

Every feasible edited candidate gets

    score = lambda * s_ret + (1 - lambda) * s_edit,
    s_edit = 2 / (1 + exp(gamma * d)),

where s_ret is the retrieval similarity and d the editing cost. The final
progression is the argmax; ties break to the higher s_ret, then to memory
provenance order.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from .editor import EditResult
from .memory import Retrieval

_SMALLEST_POSITIVE = sys.float_info.min


@dataclass(frozen=True)
class RerankConfig:
    lambda_: float = 0.5
    gamma: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lambda_}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class RankedCandidate:
    edit: EditResult
    retrieval: Optional[Retrieval]  # None for synthesized (non-retrieved) candidates
    s_ret: float
    s_edit: float
    score: float


def edit_score(d: float, gamma: float) -> float:
    """2 / (1 + exp(gamma * d)); strictly decreasing, clamped to stay positive."""
    if d < 0:
        raise ValueError(f"edit cost must be >= 0, got {d}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    try:
        value = 2.0 / (1.0 + math.exp(gamma * d))
    except OverflowError:
        value = 0.0
    return max(value, _SMALLEST_POSITIVE)


def retrieval_score(similarity: float) -> float:
    """Identity pass-through clamped to [0, 1] against float noise."""
    return min(max(similarity, 0.0), 1.0)


def _provenance(retrieval: Optional[Retrieval]) -> tuple:
    if retrieval is None:
        return ("", -1)
    return retrieval.entry.source


def rerank(
    candidates: Sequence[tuple],
    config: RerankConfig = RerankConfig(),
) -> list:
    """Score and sort (Retrieval, EditResult) pairs, best first."""
    if not candidates:
        raise ValueError("no candidates to rerank; retrieval produced nothing")
    ranked = []
    for retrieval, edit_result in candidates:
        s_ret = retrieval_score(retrieval.similarity) if retrieval is not None else 0.0
        s_edit = edit_score(edit_result.cost, config.gamma)
        score = config.lambda_ * s_ret + (1.0 - config.lambda_) * s_edit
        ranked.append(
            RankedCandidate(
                edit=edit_result,
                retrieval=retrieval,
                s_ret=s_ret,
                s_edit=s_edit,
                score=score,
            )
        )
    ranked.sort(key=lambda c: (-c.score, -c.s_ret, _provenance(c.retrieval)))
    return ranked


def grid_search_lambda(pairs, memory, config, grid):
    """Delegates to the pipeline-level grid search (full runs per lambda)."""
    from .pipeline import grid_search_lambda as _grid_search

    return _grid_search(pairs, memory, config, grid)
