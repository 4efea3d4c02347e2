"""Poisson point configurations on a box and the order statistics of their gaps.

A configuration is one realisation of a rate-``nu`` Poisson random measure
restricted to the open box ``(-L/2, L/2)``. The atoms split the box into
``kappa + 1`` atom-free intervals (the two outermost ones clipped at the box
edges); their lengths, sorted in descending order, drive everything else in
the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidParameterError

__all__ = [
    "PointConfiguration",
    "GapStatistics",
    "sample_configuration",
    "clipped_gaps",
    "top_gaps",
    "gap_difference_tail_exact",
    "count_concentration_bound",
    "count_in_concentration_window",
    "largest_gap_in_window",
    "iid_exponential_top_two",
    "log_inequality_margin",
]


@dataclass(frozen=True)
class PointConfiguration:
    """Sorted atoms of one Poisson realisation inside ``(-L/2, L/2)``."""

    rate: float
    box_length: float
    atoms: np.ndarray
    seed: int

    @property
    def count(self) -> int:
        return int(self.atoms.size)


@dataclass(frozen=True)
class GapStatistics:
    """Atom-free interval lengths in box order plus their descending order.

    ``edges`` holds ``-L/2, atoms..., L/2`` so gap ``i`` is the interval
    ``(edges[i], edges[i+1])``. ``order`` maps rank to box index: the
    ``r``-th largest gap is ``gaps[order[r]]``.
    """

    gaps: np.ndarray
    sorted_desc: np.ndarray
    order: np.ndarray
    edges: np.ndarray

    def interval(self, rank: int) -> tuple[float, float]:
        """Endpoints of the ``rank``-th largest gap (rank 1 is the largest)."""
        i = int(self.order[rank - 1])
        return float(self.edges[i]), float(self.edges[i + 1])

    def is_interior(self, rank: int) -> bool:
        """True when the ``rank``-th largest gap is bounded by atoms on both sides."""
        i = int(self.order[rank - 1])
        return 0 < i < self.gaps.size - 1


def sample_configuration(rate: float, box_length: float, seed: int) -> PointConfiguration:
    """Draw a Poisson configuration on ``(-L/2, L/2)``.

    The count is drawn by inverting the Poisson(``rate * box_length``) CDF at
    one uniform; the positions are iid uniform on the box, then sorted. The
    result is a pure function of ``seed``.
    """
    if not rate > 0:
        raise InvalidParameterError(f"rate must be positive, got {rate}")
    if box_length < 0:
        raise InvalidParameterError(f"box_length must be nonnegative, got {box_length}")
    rng = np.random.default_rng(seed)
    mean = rate * box_length
    u = rng.random()
    kappa = int(stats.poisson.ppf(u, mean)) if mean > 0 else 0
    kappa = max(kappa, 0)
    half = box_length / 2.0
    atoms = np.sort(rng.uniform(-half, half, size=kappa))
    # uniform() is half-open and floating point admits repeats; redraw until
    # the atoms are strictly increasing and strictly inside the box
    while kappa and (atoms[0] <= -half or np.any(np.diff(atoms) <= 0)):
        bad = np.concatenate(([atoms[0] <= -half], np.diff(atoms) <= 0))
        atoms[bad] = rng.uniform(-half, half, size=int(bad.sum()))
        atoms.sort()
    return PointConfiguration(float(rate), float(box_length), atoms, int(seed))


def clipped_gaps(config: PointConfiguration) -> GapStatistics:
    """Lengths of the ``kappa + 1`` atom-free intervals of the box."""
    half = config.box_length / 2.0
    edges = np.concatenate(([-half], config.atoms, [half]))
    gaps = np.diff(edges)
    # stable sort on the negated lengths: equal gaps keep left-to-right order
    order = np.argsort(-gaps, kind="stable")
    return GapStatistics(gaps=gaps, sorted_desc=gaps[order], order=order, edges=edges)


def top_gaps(stats_: GapStatistics, j: int) -> np.ndarray:
    """The ``j`` largest gaps, zero-padded when fewer than ``j`` exist."""
    if j < 1:
        raise InvalidParameterError(f"j must be >= 1, got {j}")
    out = np.zeros(j)
    m = min(j, stats_.sorted_desc.size)
    out[:m] = stats_.sorted_desc[:m]
    return out


def gap_difference_tail_exact(rate: float, c: float) -> float:
    """``exp(-rate * c)``: tail of the largest-minus-second-largest of iid Exp(rate).

    The value does not depend on the number ``k >= 2`` of iid gaps, and it is
    the asymptotic lower bound for the box gaps.
    """
    if not rate > 0:
        raise InvalidParameterError(f"rate must be positive, got {rate}")
    if c < 0:
        raise InvalidParameterError(f"c must be nonnegative, got {c}")
    return math.exp(-rate * c)


def count_concentration_bound(rate: float, box_length: float, eps: float) -> float:
    """Lower bound on P((1 - L^-eps) nu L <= kappa <= (1 + L^-eps) nu L).

    Returns ``max(0, 1 - 2 exp(-(nu/3) L^(1 - 2 eps)))``; the clamp matters
    for small boxes where the bound is vacuous.
    """
    if not 0 < eps < 0.5:
        raise InvalidParameterError(f"eps must lie in (0, 1/2), got {eps}")
    if not rate > 0 or not box_length > 0:
        raise InvalidParameterError("rate and box_length must be positive")
    return max(0.0, 1.0 - 2.0 * math.exp(-(rate / 3.0) * box_length ** (1.0 - 2.0 * eps)))


def count_in_concentration_window(config: PointConfiguration, eps: float) -> bool:
    """Whether this realisation's atom count falls in the concentration window."""
    L = config.box_length
    mean = config.rate * L
    slack = L ** (-eps)
    return (1.0 - slack) * mean <= config.count <= (1.0 + slack) * mean


def largest_gap_in_window(stats_: GapStatistics, rate: float, box_length: float, zeta: float) -> bool:
    """Whether ``(1-zeta) ln(L)/nu <= l1 <= (1+zeta) ln(L)/nu``."""
    scale = math.log(box_length) / rate
    l1 = float(stats_.sorted_desc[0])
    return (1.0 - zeta) * scale <= l1 <= (1.0 + zeta) * scale


def iid_exponential_top_two(rate: float, k: int, trials: int, rng: np.random.Generator,
                            chunk: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    """Largest and second-largest of ``k`` iid Exp(rate) draws, ``trials`` times."""
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    first = np.empty(trials)
    second = np.empty(trials)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        x = rng.exponential(1.0 / rate, size=(stop - start, k))
        part = -np.partition(-x, 1, axis=1)[:, :2]
        first[start:stop] = part[:, 0]
        second[start:stop] = part[:, 1]
    return first, second


def log_inequality_margin(x):
    """``(1+x) ln(1+x) - x - x^2 / (2x/3 + 2)``, nonnegative for ``x > -1``."""
    x = np.asarray(x, dtype=float)
    return (1.0 + x) * np.log1p(x) - x - x * x / (2.0 * x / 3.0 + 2.0)
