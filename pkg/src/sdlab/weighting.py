"""Candidate weighting schemes: reward scores -> gradient weights."""

from dataclasses import dataclass

import numpy as np

RANDOM = "random"
SOFTMAX = "softmax"
WINNER_TAKES_ALL = "winner_takes_all"
TWO_WINNERS = "two_winners"
BEST_MINUS_WORST = "best_minus_worst"
TOP2_MINUS_BOTTOM2 = "top2_minus_bottom2"

ALL_SCHEMES = (RANDOM, SOFTMAX, WINNER_TAKES_ALL, TWO_WINNERS,
               BEST_MINUS_WORST, TOP2_MINUS_BOTTOM2)

_MIN_N = {TWO_WINNERS: 2, BEST_MINUS_WORST: 2, TOP2_MINUS_BOTTOM2: 4}


@dataclass(frozen=True)
class WeightScheme:
    kind: str
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in ALL_SCHEMES:
            raise ValueError(f"unknown weighting scheme {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("softmax temperature must be positive")


def weights_from_scores(scores, scheme, rng=None):
    """Map N candidate scores to N weights.

    Ranking ties break by lowest candidate index; the positive and negative
    picks of the difference schemes are always disjoint candidates.
    """
    scores = np.asarray(scores, dtype=np.float64)
    N = scores.shape[0]
    if N < 1:
        raise ValueError("need at least one candidate")
    need = _MIN_N.get(scheme.kind, 1)
    if N < need:
        raise ValueError(f"scheme {scheme.kind} needs at least {need} candidates")

    w = np.zeros(N)
    if scheme.kind == RANDOM:
        if rng is None:
            raise ValueError("random scheme needs an rng")
        w[rng.integers(0, N)] = 1.0
        return w
    if scheme.kind == SOFTMAX:
        z = scores / scheme.temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    desc = np.argsort(-scores, kind="stable")
    asc = np.argsort(scores, kind="stable")
    if scheme.kind == WINNER_TAKES_ALL:
        w[desc[0]] = 1.0
    elif scheme.kind == TWO_WINNERS:
        w[desc[:2]] = 1.0
    elif scheme.kind == BEST_MINUS_WORST:
        best = desc[0]
        worst = next(i for i in asc if i != best)
        w[best] = 0.9
        w[worst] = -0.1
    else:  # TOP2_MINUS_BOTTOM2
        top = set(desc[:2].tolist())
        w[desc[:2]] = 0.9
        bottom = [i for i in asc if i not in top][:2]
        w[bottom] = -0.1
    return w
