"""Rank correlation for judge agreement."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata, spearmanr

from ..exceptions import InvalidInputError, UndefinedCorrelationError


def spearman(a, b):
    """Spearman correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InvalidInputError("spearman needs two 1-D sequences of equal length")
    if a.size < 2:
        raise InvalidInputError("spearman needs at least 2 observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("spearman inputs must be finite")
    if np.ptp(rankdata(a)) == 0 or np.ptp(rankdata(b)) == 0:
        raise UndefinedCorrelationError("correlation is undefined when one side has no rank variance")
    return float(np.clip(spearmanr(a, b).statistic, -1.0, 1.0))
