"""Monte-Carlo frequencies of the encoding error events."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .codebook import CodebookEnsemble, simulate_traces
from .typicality import TypicalityConfig

Z95 = 1.959963984540054


@dataclass(frozen=True)
class ErrorEventEstimate:
    n: int
    trials: int
    p_f0: float
    p_f1_given_not_f0: float | None
    p_f2_given_not_f0: float | None
    half_width_f0: float
    half_width_f1: float | None
    half_width_f2: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rate(hits: int, total: int):
    if total == 0:
        return None, None
    p = hits / total
    return p, Z95 * math.sqrt(p * (1 - p) / total)


def error_event_frequencies(traces) -> ErrorEventEstimate:
    if not traces:
        raise ValueError("need at least one trace")
    f0 = sum(t.flags[0] for t in traces)
    rest = [t for t in traces if not t.flags[0]]
    p0, h0 = _rate(f0, len(traces))
    p1, h1 = _rate(sum(t.flags[1] for t in rest), len(rest))
    p2, h2 = _rate(sum(t.flags[2] for t in rest), len(rest))
    return ErrorEventEstimate(traces[0].n, len(traces), p0, p1, p2, h0, h1, h2)


def estimate_error_events(instance, policy, config: TypicalityConfig, n: int, trials: int,
                          seed: int, rates=None, source=None) -> ErrorEventEstimate:
    """Frequencies of F0, F1 | not F0 and F2 | not F0 with 95% normal half-widths.

    Without an explicit ``source`` every trial uses a fresh random codebook.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if source is None:
        source = CodebookEnsemble(instance, policy, config, n, rates)
    return error_event_frequencies(simulate_traces(source, config, trials, seed))
