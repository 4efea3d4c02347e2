"""Grand-canonical thermodynamics on a computed one-particle spectrum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, InvalidParameterError, NumericalFailure, TruncationError
from .spectral import Spectrum

__all__ = [
    "ThermoState",
    "IdsCurve",
    "CondensateStats",
    "bose_factor",
    "constraint_density",
    "solve_chemical_potential",
    "occupation_numbers",
    "thermo_state",
    "condensate_statistics",
    "analytic_ids_ls",
    "analytic_ids_curve",
    "empirical_ids",
    "ids_from_counts",
    "critical_density",
    "critical_density_estimates",
    "critical_density_ls",
    "lifshitz_slope_fit",
    "default_fit_window",
]


@dataclass(frozen=True)
class ThermoState:
    beta: float
    density: float
    particle_count: int
    chemical_potential: float
    occupations: np.ndarray
    residual: float


@dataclass(frozen=True)
class IdsCurve:
    """Per-length integrated density of states sampled on an energy grid.

    ``provenance`` is ``"empirical"`` or ``"analytic_ls"``; analytic curves
    also evaluate exactly off the grid.
    """

    energies: np.ndarray
    values: np.ndarray
    provenance: str
    ensemble_size: int = 0
    box_length: Optional[float] = None
    rate: Optional[float] = None

    def __call__(self, energy):
        energy = np.asarray(energy, dtype=float)
        if self.provenance == "analytic_ls":
            return analytic_ids_ls(self.rate, energy)
        e = self.energies
        v = self.values
        if e[0] > 0:
            e = np.concatenate(([0.0], e))
            v = np.concatenate(([0.0], v))
        return np.interp(energy, e, v, left=0.0, right=v[-1])


@dataclass(frozen=True)
class CondensateStats:
    ground_fraction: float
    second_fraction: float
    band_fraction: float
    eps: float
    rho0: Optional[float] = None


def bose_factor(energy_gap, beta: float):
    """``1 / (exp(beta * gap) - 1)`` for strictly positive gaps."""
    g = np.asarray(energy_gap, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("Bose factor needs a strictly positive energy gap")
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(beta * g)
    return float(out) if out.ndim == 0 else out


def _density(shifted: np.ndarray, delta: float, beta: float, box_length: float) -> float:
    # shifted = E_j - E_1, delta = E_1 - mu > 0
    with np.errstate(over="ignore"):
        return float(np.sum(1.0 / np.expm1(beta * (shifted + delta)))) / box_length


def constraint_density(spec: Spectrum, mu: float, beta: float, box_length: float) -> float:
    """``(1/L) sum_j B(E_j - mu)``."""
    e = np.asarray(spec.eigenvalues, dtype=float)
    if not mu < e[0]:
        raise DomainError(f"chemical potential {mu} is not below E1={e[0]}")
    return _density(e - e[0], e[0] - mu, beta, box_length)


def _solve_shift(e: np.ndarray, rho: float, beta: float, box_length: float, tol: float,
                 max_iter: int) -> float:
    """``delta = E1 - mu`` solving the density constraint, to full float precision."""
    shifted = e - e[0]

    def excess(delta):
        return _density(shifted, delta, beta, box_length) - rho

    hi = 1.0 / beta
    it = 0
    while excess(hi) > 0:
        hi *= 2.0
        it += 1
        if it > 2000:
            raise NumericalFailure("could not bracket the chemical potential from above", (0.0, hi))
    lo = min(hi, 1.0 / beta) * 0.5
    while excess(lo) < 0:
        lo *= 0.5
        it += 1
        if lo == 0.0 or it > 4000:
            raise NumericalFailure("could not bracket the chemical potential from below", (lo, hi))
    # bisect until the bracket cannot shrink any further; the density residual
    # alone does not pin mu down when the density is small
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi) if hi > 4.0 * lo else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f = excess(mid)
        if f == 0.0:
            return mid
        if f > 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalFailure("chemical potential bisection hit the iteration cap", (e[0] - hi, e[0] - lo))
    delta = min((lo, hi), key=lambda d: abs(excess(d)))
    if abs(excess(delta)) > tol * max(1.0, rho):
        raise NumericalFailure("density constraint not met to tolerance",
                               (e[0] - hi, e[0] - lo, excess(delta)))
    return delta


def _check_tail(shifted, delta, rho, beta, box_length, tail_tolerance):
    top = 1.0 / math.expm1(min(beta * (shifted[-1] + delta), 700.0))
    if top / box_length >= tail_tolerance * rho:
        raise TruncationError(
            f"level {shifted.size} still holds {top / box_length:.3g} per length; "
            "compute more eigenvalues")


def _validated(spec, rho, beta, box_length, tol):
    e = np.asarray(spec.eigenvalues, dtype=float)
    if e.size == 0:
        raise InvalidParameterError("empty spectrum")
    if not (rho > 0 and beta > 0 and box_length > 0 and tol > 0):
        raise InvalidParameterError("rho, beta, box_length and tol must be positive")
    return e


def solve_chemical_potential(spec: Spectrum, rho: float, beta: float, box_length: float,
                             tol: float = 1e-12, tail_tolerance: Optional[float] = None,
                             max_iter: int = 4000) -> float:
    """The unique ``mu < E1`` with ``(1/L) sum_j B(E_j - mu) = rho``.

    Bisection runs on ``delta = E1 - mu`` (geometric while the bracket spans
    decades, arithmetic afterwards), so levels very close to ``mu`` lose no
    precision to cancellation. With ``tail_tolerance`` set, the spectrum is
    treated as truncated and a :class:`TruncationError` is raised when the
    highest computed level still carries more than ``tail_tolerance * rho``
    per unit length.
    """
    e = _validated(spec, rho, beta, box_length, tol)
    delta = _solve_shift(e, rho, beta, box_length, tol, max_iter)
    if tail_tolerance is not None:
        _check_tail(e - e[0], delta, rho, beta, box_length, tail_tolerance)
    return e[0] - delta


def occupation_numbers(spec: Spectrum, mu: float, beta: float) -> np.ndarray:
    """``n_j = B(E_j - mu)``."""
    e = np.asarray(spec.eigenvalues, dtype=float)
    if not mu < e[0]:
        raise DomainError(f"chemical potential {mu} is not below E1={e[0]}")
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(beta * (e - mu))


def thermo_state(spec: Spectrum, rho: float, beta: float, box_length: float,
                 tol: float = 1e-12, tail_tolerance: Optional[float] = None) -> ThermoState:
    """Chemical potential, occupations and constraint residual in one pass.

    Occupations are evaluated from the shift ``E_j - E1 + delta`` rather
    than from ``mu`` so a condensate close to ``E1`` keeps full precision.
    """
    e = _validated(spec, rho, beta, box_length, tol)
    delta = _solve_shift(e, rho, beta, box_length, tol, 4000)
    shifted = e - e[0]
    if tail_tolerance is not None:
        _check_tail(shifted, delta, rho, beta, box_length, tail_tolerance)
    with np.errstate(over="ignore"):
        n = 1.0 / np.expm1(beta * (shifted + delta))
    residual = abs(float(n.sum()) / box_length - rho)
    return ThermoState(beta, rho, int(round(rho * box_length)), e[0] - delta, n, residual)


def condensate_statistics(spec: Spectrum, occupations, N: int, eps: float,
                          rho: Optional[float] = None, rho_c: Optional[float] = None) -> CondensateStats:
    """Fractions of the ``N`` particles in level 1, level 2 and the band ``E <= eps``."""
    e = np.asarray(spec.eigenvalues, dtype=float)
    n = np.asarray(occupations, dtype=float)
    ground = float(n[0]) / N
    second = float(n[1]) / N if n.size > 1 else 0.0
    band = float(n[e <= eps].sum()) / N
    rho0 = max(rho - rho_c, 0.0) if rho is not None and rho_c is not None else None
    return CondensateStats(ground, second, band, float(eps), rho0)


def analytic_ids_ls(rate: float, energy):
    """``nu e^{-a} / (1 - e^{-a})`` with ``a = nu pi / sqrt(E)``; zero for ``E <= 0``."""
    e = np.asarray(energy, dtype=float)
    pos = e > 0
    safe = np.where(pos, e, 1.0)
    with np.errstate(over="ignore"):
        out = np.where(pos, rate / np.expm1(rate * math.pi / np.sqrt(safe)), 0.0)
    return float(out) if out.ndim == 0 else out


def analytic_ids_curve(rate: float, energies) -> IdsCurve:
    energies = np.asarray(energies, dtype=float)
    return IdsCurve(energies, analytic_ids_ls(rate, energies), "analytic_ls", rate=float(rate))


def empirical_ids(spectra: Sequence[Spectrum], box_length: float, energy_grid) -> IdsCurve:
    """Ensemble mean of ``#{j : E_j < E} / L`` on ``energy_grid``.

    The sum runs in ensemble order, so the result does not depend on how
    the spectra were produced.
    """
    if len(spectra) == 0:
        raise InvalidParameterError("empty ensemble")
    grid = np.asarray(energy_grid, dtype=float)
    total = np.zeros(grid.size)
    for spec in spectra:
        total += np.searchsorted(np.asarray(spec.eigenvalues), grid, side="left")
    return IdsCurve(grid, total / (len(spectra) * box_length), "empirical",
                    ensemble_size=len(spectra), box_length=float(box_length))


def ids_from_counts(counts, box_length: float, energy_grid) -> IdsCurve:
    """Same as :func:`empirical_ids` from per-trial eigenvalue counts (trials x grid)."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] == 0:
        raise InvalidParameterError("counts must be a nonempty trials x grid array")
    total = np.zeros(counts.shape[1])
    for row in counts:
        total += row
    return IdsCurve(np.asarray(energy_grid, dtype=float), total / (counts.shape[0] * box_length),
                    "empirical", ensemble_size=counts.shape[0], box_length=float(box_length))


def _minus_bose_derivative(energy, beta):
    # -B'(E) = beta e^{bE} / (e^{bE} - 1)^2 = beta / (4 sinh^2(bE/2))
    with np.errstate(over="ignore"):
        return beta / (4.0 * np.sinh(0.5 * beta * energy) ** 2)


def _gauss_panels(f: Callable, edges: np.ndarray, order: int = 32) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    x = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
    return float(np.sum(0.5 * (b - a) * weights[None, :] * f(x)))


def critical_density_estimates(ids: IdsCurve, beta: float) -> tuple[float, float]:
    """``int B dN`` by an adaptive and by a fixed-panel rule, in that order.

    Both use the integrated-by-parts form ``int N(E) (-B'(E)) dE``.

    Analytic curves are integrated over ``(0, inf)``. Sampled curves are
    integrated over their grid ``[E_0, E_max]`` with the boundary term
    ``B(E_max) N(E_max)`` added, which places every state counted at ``E_0``
    at ``E_0`` itself. The adaptive rule is QUADPACK, the fixed one a
    composite 32-point Gauss-Legendre rule on preset panels.
    """
    if not beta > 0:
        raise InvalidParameterError("beta must be positive")

    def integrand(x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0, x, 1.0)
        return np.where(x > 0, ids(safe) * _minus_bose_derivative(safe, beta), 0.0)

    if ids.provenance == "analytic_ls":
        top = 80.0 / beta
        # the integrand vanishes faster than any power at 0; start where it is < 1e-300
        bottom = (ids.rate * math.pi / 700.0) ** 2
        adaptive = 0.0
        for lo, hi in ((0.0, 1.0 / beta), (1.0 / beta, top), (top, math.inf)):
            val, _ = integrate.quad(lambda t: float(integrand(t)), lo, hi, limit=400,
                                    epsabs=0.0, epsrel=1e-12)
            adaptive += val
        edges = np.concatenate((np.geomspace(bottom, 1.0 / beta, 120),
                                np.linspace(1.0 / beta, top, 400)[1:]))
        fixed = _gauss_panels(integrand, edges)
        boundary = 0.0
    else:
        e = ids.energies
        if np.any(np.diff(ids.values) < 0):
            raise InvalidParameterError("IDS values must be nondecreasing")
        # integrate from the first grid energy: all states counted there are
        # placed at e[0]. Interpolating linearly from (0, 0) instead would put
        # a flat density of states next to the 1/E pole of B and diverge.
        if not e[0] > 0:
            raise InvalidParameterError("sampled IDS grids must start at a positive energy")
        knots = e
        adaptive = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            val, _ = integrate.quad(lambda t: float(integrand(t)), lo, hi, limit=200,
                                    epsabs=0.0, epsrel=1e-12)
            adaptive += val
        # refine each knot interval into panels so the fixed rule resolves 1/E^2 near 0
        sub = [np.linspace(lo, hi, 9)[:-1] for lo, hi in zip(knots[:-1], knots[1:])]
        edges = np.concatenate(sub + [knots[-1:]])
        fixed = _gauss_panels(integrand, edges)
        boundary = float(ids(e[-1])) / math.expm1(beta * e[-1]) if e[-1] > 0 else 0.0
    return adaptive + boundary, fixed + boundary


def critical_density(ids: IdsCurve, beta: float, tol: float = 1e-6) -> float:
    """``int B dN``, accepted only when both quadrature rules agree to relative ``tol``."""
    adaptive, fixed = critical_density_estimates(ids, beta)
    scale = max(abs(adaptive), abs(fixed), 1e-300)
    if abs(adaptive - fixed) > tol * scale and abs(adaptive - fixed) > 1e-300:
        raise NumericalFailure("quadrature rules disagree", detail=(adaptive, fixed))
    return adaptive


def critical_density_ls(rate: float, beta: float, tol: float = 1e-6) -> float:
    """Critical density of the infinite-strength (Luttinger-Sy) limit."""
    return critical_density(analytic_ids_curve(rate, np.array([1.0])), beta, tol)


def default_fit_window(ids: IdsCurve, floor: float = 1e-6) -> tuple[float, float]:
    """The lowest energy decade where the curve exceeds ``floor``."""
    populated = ids.energies[ids.values > floor]
    if populated.size == 0:
        raise InvalidParameterError(f"no grid point with IDS above {floor}")
    e0 = float(populated[0])
    return e0, 10.0 * e0


def lifshitz_slope_fit(ids: IdsCurve, window: Optional[tuple] = None) -> tuple[float, float]:
    """Least-squares line through ``(E^-1/2, ln N(E))`` over the window.

    Returns ``(slope, intercept)``; the slope estimates ``-nu pi``.
    """
    lo, hi = window if window is not None else default_fit_window(ids)
    e = ids.energies
    v = ids.values
    sel = (e >= lo) & (e <= hi) & (v > 0)
    if int(sel.sum()) < 5:
        raise InvalidParameterError(
            f"only {int(sel.sum())} positive IDS values in [{lo}, {hi}], need 5")
    slope, intercept = np.polyfit(1.0 / np.sqrt(e[sel]), np.log(v[sel]), 1)
    return float(slope), float(intercept)
