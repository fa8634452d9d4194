"""Robust statistics shared by the detectors.

Median/MAD z-scores standardize hub-rate vectors without letting the hubs
themselves inflate the baseline; normalized Shannon entropy measures how
evenly an item's hits spread over query clusters; the Gini coefficient
measures how concentrated an item's hubness is within a single domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# Makes scaled MAD consistent with the standard deviation under normality.
MAD_SCALE = 1.4826
MAD_EPSILON = 1e-12


@dataclass(frozen=True)
class RobustZ:
    """Median/MAD standardization of a score vector.

    zscores[i] = (x[i] - median) / max(mad_scaled, 1e-12), where
    mad_scaled = 1.4826 * median(|x - median|). ``degenerate`` flags
    MAD == 0; the epsilon floor keeps the division finite instead of
    silently switching estimators.
    """

    zscores: np.ndarray
    median: float
    mad_scaled: float
    degenerate: bool


def robust_zscore(values) -> RobustZ:
    """Standardize ``values`` with median/MAD z-scores.

    Parameters
    ----------
    values : array-like of float, length >= 1
        Scores to standardize. The median of an even-length input is the
        mean of the two central order statistics (numpy convention).

    Returns
    -------
    RobustZ
        Constant input yields all-zero z-scores with ``degenerate=True``.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("robust_zscore requires a non-empty 1-D vector")
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    mad_scaled = MAD_SCALE * mad
    degenerate = mad_scaled == 0.0
    z = (x - med) / max(mad_scaled, MAD_EPSILON)
    return RobustZ(zscores=z, median=med, mad_scaled=mad_scaled, degenerate=degenerate)


def normalized_entropy(counts) -> float:
    """Shannon entropy of the normalized distribution, divided by log(n).

    ``n`` is the length of ``counts``. The result is in [0, 1] and is
    base-invariant because the normalization cancels the log base. An
    all-zero vector returns 0 by convention.
    """
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or c.size < 2:
        raise ParameterError("normalized_entropy requires a vector of length >= 2")
    if np.any(c < 0):
        raise ParameterError("normalized_entropy requires non-negative counts")
    total = c.sum()
    if total <= 0.0:
        return 0.0
    p = c / total
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum())
    return h / float(np.log(c.size))


def gini(rates) -> float:
    """Gini concentration of non-negative rates.

    Evaluates, on the ascending-sorted normalized rates p_(1) <= ... <= p_(n):

        G = (n + 1 - 2 * sum_j cum_j / total) / n

    where cum_j is the cumulative sum of the first j sorted rates. Uniform
    rates give 0; a one-hot vector gives (n - 1) / n. All-zero input
    returns 0 by convention.
    """
    r = np.asarray(rates, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ParameterError("gini requires a vector of length >= 2")
    if np.any(r < 0):
        raise ParameterError("gini requires non-negative rates")
    total = r.sum()
    if total <= 0.0:
        return 0.0
    n = r.size
    cums = np.cumsum(np.sort(r))
    return float((n + 1 - 2.0 * (cums / total).sum()) / n)


def nearest_rank_percentile(values, pct: float) -> float:
    """Nearest-rank percentile threshold over an empirical distribution.

    Returns the value at 0-based sorted index min(ceil(pct/100 * n), n - 1),
    i.e. the smallest value with strictly more than pct percent of the data
    below it (capped at the maximum). On 1000 distinct values, pct=99 leaves
    exactly 10 values at or above the returned threshold.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("percentile of an empty vector is undefined")
    if not 0.0 <= pct <= 100.0:
        raise ParameterError(f"percentile {pct} outside [0, 100]")
    n = x.size
    idx = min(int(np.ceil(pct / 100.0 * n)), n - 1)
    return float(np.sort(x)[idx])
