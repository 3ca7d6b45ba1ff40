import math
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy import stats

# Stable spawn keys; appending a stream never reshuffles existing ones.
STREAM_KEYS: Dict[str, int] = {
    "workload": 0,
    "arrivals": 1,
    "restarts": 2,
}


class RngStreams:
    """Named, independent random streams derived from one seed.

    Each stream is a `numpy.random.Generator` built from
    `SeedSequence(seed, spawn_key=(key,))`, so a given (seed, name) pair always
    yields the same sequence no matter which other streams are drawn from.

    Attributes:
        seed: The base seed the streams are derived from.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """Returns the generator for `name`, creating it on first use.

        Args:
            name: One of the keys of `STREAM_KEYS`.

        Raises:
            KeyError: If `name` is not a registered stream.
        """
        if name not in self._streams:
            key = STREAM_KEYS[name]
            seq = np.random.SeedSequence(self.seed, spawn_key=(key,))
            self._streams[name] = np.random.Generator(np.random.PCG64(seq))
        return self._streams[name]

    def __getattr__(self, name: str) -> np.random.Generator:
        if name in STREAM_KEYS:
            return self.stream(name)
        raise AttributeError(name)


def t_half_width(values: Sequence[float], confidence: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval for the mean of `values`.

    Returns 0.0 for fewer than two values or zero spread.
    """
    data = np.asarray(values, dtype=float)
    n = data.size
    if n < 2:
        return 0.0
    sd = float(np.std(data, ddof=1))
    if sd == 0.0:
        return 0.0
    quantile = float(stats.t.ppf(0.5 + confidence / 2.0, df=n - 1))
    return quantile * sd / math.sqrt(n)


def mean_and_half_width(
    values: Sequence[float], confidence: float = 0.95
) -> Tuple[float, float]:
    """Returns (mean, t half-width); (0.0, 0.0) for an empty sequence."""
    if len(values) == 0:
        return 0.0, 0.0
    return float(np.mean(values)), t_half_width(values, confidence)


def relative_error(measured: float, predicted: float) -> float:
    """|measured - predicted| / |predicted|, with 0/0 taken as exact agreement."""
    if predicted == 0.0:
        return 0.0 if measured == 0.0 else math.inf
    return abs(measured - predicted) / abs(predicted)


def parse_values(text: str) -> list:
    """Splits a comma-separated CLI list, converting numeric items.

    Integers stay integers, other numerics become floats, anything else is kept
    as a stripped string.
    """
    items = []
    for raw in text.split(","):
        item = raw.strip()
        if not item:
            continue
        try:
            items.append(int(item))
        except ValueError:
            try:
                items.append(float(item))
            except ValueError:
                items.append(item)
    return items


def safe_ratio(numerator: float, denominator: float, default: float = 0.0) -> float:
    """numerator/denominator, or `default` when the denominator is zero."""
    return numerator / denominator if denominator else default
