"""Random Schroedinger operators on the box and their lowest eigenvalues.

The potential is a superposition of scaled copies of one single-site shape
centred at the Poisson atoms. It is sampled at the centres of ``n`` equal
cells covering the box and ``-d^2/dx^2 + V`` becomes a symmetric tridiagonal
matrix:

* Dirichlet: ghost cells mirrored with a sign flip, end diagonals ``3/h^2``;
* Neumann: ghost cells mirrored, end diagonals ``1/h^2``.

Both variants have exactly known free spectra, ``(4/h^2) sin^2(pi m / 2n)``,
and a Neumann cut between two cells simply deletes one bond of the
quadratic form, so the Dirichlet matrix dominates any cut version of itself
in the form sense. That keeps Dirichlet-Neumann bracketing exact on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from . import _sturm
from .errors import InvalidParameterError, NumericalFailure, PreconditionError
from .point_process import GapStatistics, PointConfiguration

__all__ = [
    "SingleSitePotential",
    "PotentialField",
    "DiscretizedOperator",
    "Spectrum",
    "GapEventParams",
    "default_grid_spacing",
    "assemble_potential",
    "discretize",
    "lowest_eigenvalues",
    "eigenvalues_below",
    "luttinger_sy_eigenvalues",
    "luttinger_sy_levels_below",
    "dirichlet_ground_upper_bound",
    "neumann_ground_lower_bound",
    "lower_bound_coefficient",
    "gap_event_indicator",
    "neumann_direct_sum",
    "gap_neumann_block",
]

SHAPES = ("box", "triangle", "tabulated", "delta")
DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class SingleSitePotential:
    """Obstacle shape ``u`` on ``[-support_left, support_right]`` times a strength scale.

    ``param`` is the box height, the triangle peak or the delta weight
    ``gamma``; ``samples`` are the values of a tabulated shape on a uniform
    grid spanning the support.
    """

    shape: str
    param: float = 1.0
    support_left: float = 0.5
    support_right: float = 0.5
    strength_scale: float = 1.0
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidParameterError(f"unknown shape {self.shape!r}")
        if self.strength_scale < 0:
            raise InvalidParameterError("strength_scale must be nonnegative")
        if self.shape == "delta":
            if not self.param > 0:
                raise InvalidParameterError("delta weight gamma must be positive")
            return
        if not (self.support_left > 0 and self.support_right > 0):
            raise InvalidParameterError("supports must be positive")
        if self.shape == "tabulated":
            if self.samples is None or len(self.samples) < 2:
                raise InvalidParameterError("tabulated shape needs at least two samples")
            s = np.asarray(self.samples, dtype=float)
            if np.any(s < 0) or not np.all(np.isfinite(s)):
                raise InvalidParameterError("tabulated samples must be finite and nonnegative")
        elif not self.param > 0:
            raise InvalidParameterError(f"{self.shape} parameter must be positive")

    @property
    def support_total(self) -> float:
        if self.shape == "delta":
            return 0.0
        return self.support_left + self.support_right

    def scaled(self, strength_scale: float) -> "SingleSitePotential":
        return replace(self, strength_scale=float(strength_scale))

    def _breakpoints(self) -> np.ndarray:
        cl, cr = self.support_left, self.support_right
        if self.shape == "box":
            return np.array([-cl, cr])
        if self.shape == "triangle":
            return np.array([-cl, 0.0, cr])
        return np.linspace(-cl, cr, len(self.samples))

    def values(self, x) -> np.ndarray:
        """Unscaled ``u(x)``; zero outside the closed support."""
        x = np.asarray(x, dtype=float)
        cl, cr = self.support_left, self.support_right
        inside = (x >= -cl) & (x <= cr)
        if self.shape == "box":
            return np.where(inside, self.param, 0.0)
        if self.shape == "triangle":
            ramp = np.where(x < 0, 1.0 + x / cl, 1.0 - x / cr)
            return np.where(inside, self.param * ramp, 0.0)
        if self.shape == "tabulated":
            s = np.asarray(self.samples, dtype=float)
            return np.where(inside, np.interp(x, self._breakpoints(), s), 0.0)
        raise InvalidParameterError("delta shape has no pointwise values")

    def integral(self, lo: float, hi: float) -> float:
        """``int_lo^hi u`` (unscaled), exact for the piecewise-linear shapes."""
        if self.shape == "delta":
            raise InvalidParameterError("integral of a delta shape is not defined here")
        lo = max(lo, -self.support_left)
        hi = min(hi, self.support_right)
        if hi <= lo:
            return 0.0
        bp = self._breakpoints()
        pts = np.concatenate(([lo], bp[(bp > lo) & (bp < hi)], [hi]))
        return float(trapezoid(self.values(pts), pts))

    def strength(self) -> float:
        """``min(int_0^Cr u, int_-Cl^0 u)``, unscaled."""
        return min(self.integral(0.0, self.support_right), self.integral(-self.support_left, 0.0))

    def edge_strength(self, a: float, b: float) -> float:
        """Scaled ``S * min(int_{Cr-a}^{Cr} u, int_{-Cl}^{-Cl+b} u)``."""
        cl, cr = self.support_left, self.support_right
        if not (0 < a <= cr and 0 < b <= cl):
            raise InvalidParameterError(f"need 0 < a <= {cr} and 0 < b <= {cl}, got a={a}, b={b}")
        return self.strength_scale * min(self.integral(cr - a, cr), self.integral(-cl, -cl + b))


@dataclass(frozen=True)
class PotentialField:
    """Potential sampled at the cell centres ``x`` of a uniform grid on the box."""

    x: np.ndarray
    values: np.ndarray
    grid_spacing: float
    box_length: float

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class DiscretizedOperator:
    """Symmetric tridiagonal matrix for ``-d^2/dx^2 + V``.

    ``offdiag`` has one entry per bond between neighbouring cells; a zero
    entry is a Neumann cut.
    """

    grid_spacing: float
    diag: np.ndarray
    offdiag: np.ndarray
    boundary: str
    domain_length: float

    @property
    def dimension(self) -> int:
        return int(self.diag.size)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def count_below(self, energies) -> np.ndarray:
        """Number of eigenvalues strictly below each of ``energies``."""
        xs = np.atleast_1d(np.asarray(energies, dtype=float))
        return _sturm.count_below_many(self.diag, self.offdiag, xs)


@dataclass(frozen=True)
class Spectrum:
    """Ascending lowest eigenvalues and the provenance of their computation."""

    eigenvalues: np.ndarray
    k: int
    grid_spacing: Optional[float] = None
    boundary: str = DIRICHLET
    domain_length: Optional[float] = None

    def __len__(self):
        return int(self.eigenvalues.size)

    def __getitem__(self, j):
        return self.eigenvalues[j]


@dataclass(frozen=True)
class GapEventParams:
    zeta1: float
    zeta2: float
    particle_count: int
    rate: float
    box_length: float

    def __post_init__(self):
        if not 0 < self.zeta2 < self.zeta1 < 1:
            raise InvalidParameterError(
                f"need 0 < zeta2 < zeta1 < 1, got zeta1={self.zeta1}, zeta2={self.zeta2}")
        if self.particle_count < 1:
            raise InvalidParameterError("particle_count must be positive")

    @property
    def gap_threshold(self) -> float:
        return float(self.particle_count) ** (-1.0 + self.zeta1)

    @property
    def ground_ceiling(self) -> float:
        return ((1.0 + self.zeta2) * self.rate * math.pi / math.log(self.box_length)) ** 2


def default_grid_spacing(site: SingleSitePotential, box_length: float,
                         max_dimension: int = 10**6) -> float:
    """Sixteen cells per half-support and at least 32 per unit length.

    The spacing is coarsened only if the matrix would exceed ``max_dimension``.
    """
    h = 1.0 / 32.0
    if site.shape != "delta":
        h = min(h, min(site.support_left, site.support_right) / 16.0)
    if box_length / h > max_dimension:
        h = box_length / max_dimension
    return h


def _cells(box_length: float, grid_spacing: float) -> tuple[int, float]:
    n = max(2, int(math.ceil(box_length / grid_spacing - 1e-9)))
    return n, box_length / n


def assemble_potential(config: PointConfiguration, site: SingleSitePotential,
                       grid_spacing: float) -> PotentialField:
    """Sample ``V(x) = sum_j S u(x - atom_j)`` at the cell centres.

    The box is split into ``ceil(L / grid_spacing)`` equal cells, so the
    realised spacing never exceeds the requested one. A delta shape puts
    ``S * gamma / h`` into the cell containing each atom.
    """
    if not grid_spacing > 0:
        raise InvalidParameterError(f"grid_spacing must be positive, got {grid_spacing}")
    L = config.box_length
    n, h = _cells(L, grid_spacing)
    x = -L / 2.0 + (np.arange(n) + 0.5) * h
    atoms = config.atoms
    values = np.zeros(n)
    if atoms.size == 0 or site.strength_scale == 0:
        return PotentialField(x, values, h, L)
    if site.shape == "delta":
        idx = np.clip(np.floor((atoms + L / 2.0) / h).astype(np.int64), 0, n - 1)
        values += np.bincount(idx, minlength=n) * (site.strength_scale * site.param / h)
        return PotentialField(x, values, h, L)
    # cell i is touched by atom a when a - Cl <= x_i <= a + Cr
    first = np.ceil((atoms - site.support_left + L / 2.0) / h - 0.5).astype(np.int64)
    width = int(math.ceil(site.support_total / h)) + 2
    idx = first[:, None] + np.arange(width)[None, :]
    valid = (idx >= 0) & (idx < n)
    safe = np.clip(idx, 0, n - 1)
    contrib = site.values(x[safe] - atoms[:, None]) * valid
    values += np.bincount(safe.ravel(), weights=contrib.ravel(), minlength=n)
    values *= site.strength_scale
    return PotentialField(x, values, h, L)


def discretize(potential: PotentialField, boundary: str = DIRICHLET) -> DiscretizedOperator:
    """Three-point stencil for ``-d^2/dx^2 + V`` with mirrored ghost cells."""
    n = potential.n
    if n < 2:
        raise InvalidParameterError("need at least two cells")
    if boundary not in (DIRICHLET, NEUMANN):
        raise InvalidParameterError(f"unknown boundary {boundary!r}")
    inv = 1.0 / potential.grid_spacing**2
    diag = 2.0 * inv + potential.values
    end = 3.0 * inv if boundary == DIRICHLET else 1.0 * inv
    diag[0] = end + potential.values[0]
    diag[-1] = end + potential.values[-1]
    offdiag = np.full(n - 1, -inv)
    return DiscretizedOperator(potential.grid_spacing, diag, offdiag, boundary, potential.box_length)


def lowest_eigenvalues(op: DiscretizedOperator, k: int, tol: float = 1e-10) -> Spectrum:
    """The ``k`` smallest eigenvalues by Sturm counting and bisection.

    Every eigenvalue is returned as the midpoint of a bracket no wider than
    ``tol``; the initial bracket is the Gershgorin interval.
    """
    if k < 1 or k > op.dimension:
        raise InvalidParameterError(f"k must lie in [1, {op.dimension}], got {k}")
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    lo, hi, status = _sturm.smallest_eigenvalues(op.diag, op.offdiag, int(k), float(tol))
    if status >= 0:
        raise NumericalFailure(
            f"bisection for eigenvalue {status + 1} did not reach width {tol}",
            detail=(float(lo[status]), float(hi[status])),
        )
    return Spectrum(0.5 * (lo + hi), int(k), op.grid_spacing, op.boundary, op.domain_length)


def eigenvalues_below(op: DiscretizedOperator, emax: float, tol: float = 1e-10,
                      minimum: int = 1) -> Spectrum:
    """All eigenvalues below ``emax`` (at least ``minimum`` of them)."""
    k = int(op.count_below(emax)[0])
    k = min(max(k, minimum), op.dimension)
    return lowest_eigenvalues(op, k, tol)


def _ls_count(lengths: np.ndarray, root_e: float) -> int:
    return int(np.floor(lengths * root_e / math.pi).sum())


def _ls_levels(lengths: np.ndarray, root_e: float) -> np.ndarray:
    mmax = np.floor(lengths * root_e / math.pi).astype(np.int64)
    keep = mmax > 0
    lengths, mmax = lengths[keep], mmax[keep]
    if lengths.size == 0:
        return np.empty(0)
    m = np.concatenate([np.arange(1, c + 1) for c in mmax])
    ell = np.repeat(lengths, mmax)
    return np.sort((math.pi * m / ell) ** 2)


def _ls_lengths(stats_: GapStatistics, shrink: float) -> np.ndarray:
    lengths = stats_.gaps - shrink
    lengths = lengths[lengths > 0]
    if lengths.size == 0:
        raise InvalidParameterError("all gaps have zero length")
    return lengths


def luttinger_sy_eigenvalues(stats_: GapStatistics, k: int, shrink: float = 0.0) -> Spectrum:
    """``k`` smallest of ``(pi m / l_i)^2`` over all gaps ``l_i`` and ``m >= 1``.

    Dirichlet walls at every atom: the infinite-strength comparator. With
    ``shrink > 0`` every gap is first shortened by that amount, which turns
    the analytic levels into upper bounds for a grid of spacing ``shrink``.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    lengths = _ls_lengths(stats_, shrink)
    # sqrt(E) at which the largest gap alone supplies k levels
    hi = math.pi * k / lengths.max()
    lo = 0.0
    for _ in range(200):
        if _ls_count(lengths, hi) <= 4 * k:
            break
        mid = 0.5 * (lo + hi)
        if _ls_count(lengths, mid) >= k:
            hi = mid
        else:
            lo = mid
    levels = _ls_levels(lengths, hi * (1.0 + 1e-12))
    return Spectrum(levels[:k].copy(), int(k), None, "luttinger-sy", float(stats_.gaps.sum()))


def luttinger_sy_levels_below(stats_: GapStatistics, emax: float, shrink: float = 0.0) -> Spectrum:
    """All infinite-strength levels ``<= emax``."""
    lengths = _ls_lengths(stats_, shrink)
    levels = _ls_levels(lengths, math.sqrt(max(emax, 0.0)))
    return Spectrum(levels, int(levels.size), None, "luttinger-sy", float(stats_.gaps.sum()))


def dirichlet_ground_upper_bound(l1: float, support_total: float) -> Optional[float]:
    """``pi^2 / (l1 - C_u)^2`` when the largest gap exceeds the support, else ``None``."""
    if not l1 > 0:
        raise InvalidParameterError(f"l1 must be positive, got {l1}")
    if l1 <= support_total:
        return None
    return math.pi**2 / (l1 - support_total) ** 2


def lower_bound_coefficient() -> float:
    """``(4 pi)^2 (8 pi + 1)^2``."""
    return (4.0 * math.pi) ** 2 * (8.0 * math.pi + 1.0) ** 2


def neumann_ground_lower_bound(lj: float, site: SingleSitePotential, a: float, b: float) -> float:
    """Lower bound on the Neumann ground energy of a gap of length ``lj``.

    ``pi^2 / (lj - (C_u - a - b))^2 - (4pi)^2 (8pi+1)^2 / (S_ab (lj - C_u)^2 lj)``
    where ``S_ab`` is the scaled edge strength. The value may be negative,
    in which case the bound says nothing; it is returned unclamped.
    """
    cu = site.support_total
    s_ab = site.edge_strength(a, b)
    if lj < 2.0 * cu:
        raise PreconditionError(f"gap {lj} is shorter than twice the support {cu}")
    if s_ab <= 0:
        return -math.inf
    first = math.pi**2 / (lj - (cu - a - b)) ** 2
    return first - lower_bound_coefficient() / (s_ab * (lj - cu) ** 2 * lj)


def gap_event_indicator(spec: Spectrum, j: int, params: GapEventParams) -> bool:
    """Whether ``E^j - E^1 >= N^(zeta1 - 1)`` and ``E^1 <= ((1+zeta2) nu pi / ln L)^2``."""
    if j < 2 or j > len(spec):
        raise InvalidParameterError(f"j must lie in [2, {len(spec)}], got {j}")
    e1 = float(spec.eigenvalues[0])
    ej = float(spec.eigenvalues[j - 1])
    return (ej - e1 >= params.gap_threshold) and (e1 <= params.ground_ceiling)


def _cut_bond(position: float, potential: PotentialField) -> int:
    """Bond (cell face) nearest to ``position``; bond ``b`` sits between cells b and b+1."""
    b = int(round((position + potential.box_length / 2.0) / potential.grid_spacing)) - 1
    return min(max(b, 0), potential.n - 2)


def neumann_direct_sum(potential: PotentialField, stats_: GapStatistics) -> DiscretizedOperator:
    """Neumann conditions at every atom and at both box ends.

    The matrix is block diagonal, one block per gap, and is obtained from
    the Dirichlet matrix by deleting bonds, so it is dominated by it.
    """
    op = discretize(potential, NEUMANN)
    inv = 1.0 / potential.grid_spacing**2
    diag = op.diag.copy()
    offdiag = op.offdiag.copy()
    for a in stats_.edges[1:-1]:
        bnd = _cut_bond(float(a), potential)
        if offdiag[bnd] != 0.0:
            offdiag[bnd] = 0.0
            diag[bnd] -= inv
            diag[bnd + 1] -= inv
    return DiscretizedOperator(op.grid_spacing, diag, offdiag, NEUMANN, op.domain_length)


def gap_neumann_block(potential: PotentialField, stats_: GapStatistics, rank: int) -> DiscretizedOperator:
    """Neumann operator on the ``rank``-th largest gap, potential included."""
    i = int(stats_.order[rank - 1])
    n = potential.n
    start = 0 if i == 0 else _cut_bond(float(stats_.edges[i]), potential) + 1
    stop = n - 1 if i == stats_.gaps.size - 1 else _cut_bond(float(stats_.edges[i + 1]), potential)
    if stop - start + 1 < 2:
        raise InvalidParameterError("gap spans fewer than two cells")
    sub = PotentialField(potential.x[start:stop + 1], potential.values[start:stop + 1],
                         potential.grid_spacing, (stop - start + 1) * potential.grid_spacing)
    return discretize(sub, NEUMANN)
