"""
Obfuscation quality metrics over sampled distributions.

tvd compares two distributions count by count and ranges over [0, 2]. dfc measures how
far the correct outcome leads (or trails) the strongest wrong one, in [-1, 1].
fidelity is the share of shots that returned the correct outcome.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from dataclasses_json import dataclass_json

from src.schemas import ExperimentRow
from src.simulator import Distribution


class ShotMismatch(ValueError):
    pass


class ZeroShots(ValueError):
    pass


def _require_shots(d: Distribution) -> None:
    if d.shots <= 0:
        raise ZeroShots("Distribution has no shots")


def tvd(orig: Distribution, obf: Distribution) -> float:
    """Sum of absolute count differences over the union of outcomes, divided by shots."""
    _require_shots(orig)
    _require_shots(obf)
    if orig.shots != obf.shots:
        raise ShotMismatch(f"Shot totals differ: {orig.shots} vs {obf.shots}")
    keys = set(orig.counts) | set(obf.counts)
    total = sum(abs(orig.count(k) - obf.count(k)) for k in keys)
    return total / orig.shots


def true_output(correct: str, shots: int) -> Distribution:
    """All shots on the correct outcome: what a faultless device would return."""
    return Distribution({correct: shots}, shots)


def dfc(obf: Distribution, correct: str) -> float:
    _require_shots(obf)
    wrong = [n for k, n in obf.counts.items() if k != correct]
    strongest_wrong = max(wrong, default=0)
    return (obf.count(correct) - strongest_wrong) / obf.shots


def fidelity(d: Distribution, correct: str) -> float:
    _require_shots(d)
    return d.count(correct) / d.shots


@dataclass_json
@dataclass
class Summary:
    """Box-plot statistics of one metric column."""
    count: int
    mean: Optional[float] = None
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None
    variance: Optional[float] = None


def summarize(values: Sequence[float]) -> Summary:
    if not values:
        return Summary(count=0)
    data = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    return Summary(
        count=len(data),
        mean=float(np.mean(data)),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        min=float(np.min(data)),
        max=float(np.max(data)),
        variance=float(np.var(data)),
    )


def best_seed(rows: List[ExperimentRow]) -> Optional[ExperimentRow]:
    """Row with the highest TVD; ties go to the smaller seed."""
    if not rows:
        return None
    return min(rows, key=lambda r: (-r.tvd, r.seed))


def counts_from_dict(counts: Dict[str, int], shots: Optional[int] = None) -> Distribution:
    """Distribution from plain counts, as read from a JSON file."""
    cleaned = {str(k): int(v) for k, v in counts.items() if int(v) > 0}
    return Distribution(cleaned, shots if shots is not None else sum(cleaned.values()))
