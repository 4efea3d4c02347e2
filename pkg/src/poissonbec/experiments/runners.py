"""Monte Carlo experiments over Poisson realisations.

Each experiment maps ``(N, trial)`` pairs to immutable rows. Trials run on a
thread pool (the eigenvalue kernels release the GIL) and rows are gathered
in trial-index order, so a report depends only on the configuration and the
master seed.
"""

from __future__ import annotations

import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import point_process as pp
from .. import spectral as sp
from .. import thermo as th
from ..errors import InvalidParameterError, NumericalFailure, PreconditionError, TruncationError
from .config import ExperimentConfig, resolve_density, strength_ladder
from .report import (
    ExperimentReport,
    clt_half_width,
    frequency,
    nondecreasing,
    strictly_decreasing,
    strictly_increasing,
    tally,
)

log = logging.getLogger(__name__)

BASE_COLUMNS = ["trial", "seed", "N", "L", "S", "kappa", "l1", "l2",
                "E1", "E2", "E3", "E4", "E5", "mu", "n1_frac", "n2_frac", "band_frac"]


def trial_seed(master_seed: int, n: int, trial: int) -> int:
    """64-bit seed derived from ``(master_seed, N, trial)``; no state is shared."""
    ss = np.random.SeedSequence([int(master_seed) & (2**63 - 1), int(n), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _site(cfg: ExperimentConfig, strength: float) -> sp.SingleSitePotential:
    return sp.SingleSitePotential(cfg.shape, cfg.shape_param, cfg.support_left, cfg.support_right,
                                  strength, tuple(cfg.samples) if cfg.samples else None)


def _grid(cfg: ExperimentConfig, site: sp.SingleSitePotential, box_length: float) -> float:
    if cfg.grid_resolution:
        return float(cfg.grid_resolution)
    return sp.default_grid_spacing(site, box_length)


def _tasks(cfg: ExperimentConfig, density: float):
    for n in cfg.sizes:
        L = n / density
        for t in range(cfg.trials):
            yield n, L, t, trial_seed(cfg.seed, n, t)


def _map(fn, tasks, threads):
    tasks = list(tasks)
    if threads is None or threads <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def _flatten(chunks):
    out = []
    for c in chunks:
        out.extend(c)
    return out


def _put_levels(row, values, prefix="E", count=5):
    for j in range(count):
        row[f"{prefix}{j + 1}"] = float(values[j]) if j < len(values) else None


def _by_size(rows, n):
    return [r for r in rows if r["N"] == n]


def _median(xs):
    xs = [x for x in xs if x is not None]
    return statistics.median(xs) if xs else None


def _density(cfg):
    return resolve_density(cfg.density, cfg.rate, cfg.beta)


# ---------------------------------------------------------------- gap law

def run_gap_law(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Largest-gap statistics: exact tails, vanishing thresholds, j-th separations."""
    _check_kind(cfg, "gap_law")
    started = time.time()
    density = _density(cfg)
    nu = cfg.rate
    tail_cols = [f"diff_gt_{c!r}" for c in cfg.thresholds]
    sep_cols = [f"sep_{j}" for j in cfg.gap_ranks]
    jmax = max([2, *cfg.gap_ranks])

    def trial(n, L, t, seed):
        conf = pp.sample_configuration(nu, L, seed)
        st = pp.clipped_gaps(conf)
        top = pp.top_gaps(st, jmax)
        d = top[0] - top[1]
        row = {"trial": t, "seed": seed, "N": n, "L": L, "kappa": conf.count,
               "l1": top[0], "l2": top[1]}
        for col, c in zip(tail_cols, cfg.thresholds):
            row[col] = bool(d > c)
        row["diff_gt_vanishing"] = bool(d > 1.0 / math.log(L)) if L > 1 else None
        for col, j in zip(sep_cols, cfg.gap_ranks):
            row[col] = bool(top[0] - top[j - 1] > cfg.c_hat)
        row["count_window"] = pp.count_in_concentration_window(conf, cfg.concentration_eps)
        row["largest_window"] = pp.largest_gap_in_window(st, nu, L, cfg.largest_gap_zeta)
        return row

    rows = _map(trial, _tasks(cfg, density), threads)
    columns = ["trial", "seed", "N", "L", "kappa", "l1", "l2", *tail_cols, "diff_gt_vanishing",
               *sep_cols, "count_window", "largest_window"]

    # iid exponential surrogate, one stream for the whole run
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & (2**63 - 1), 0, 2**32 + 1]))
    first, second = pp.iid_exponential_top_two(nu, cfg.iid_k, cfg.trials, rng)
    iid = {}
    for c in cfg.thresholds:
        f = frequency(first - second > c)
        exact = pp.gap_difference_tail_exact(nu, c)
        f.update(exact=exact, within_clt=abs(f["frequency"] - exact) <= max(f["half_width"], 0.0)
                 if f["half_width"] > 0 else f["frequency"] == exact)
        iid[repr(c)] = f

    per_size = {}
    for n in cfg.sizes:
        sub = _by_size(rows, n)
        L = sub[0]["L"]
        tails = {}
        for col, c in zip(tail_cols, cfg.thresholds):
            f = frequency(r[col] for r in sub)
            exact = pp.gap_difference_tail_exact(nu, c)
            f.update(exact=exact, lower_ok=f["frequency"] >= exact - cfg.prob_slack)
            tails[repr(c)] = f
        seps = {str(j): frequency(r[col] for r in sub) for col, j in zip(sep_cols, cfg.gap_ranks)}
        per_size[str(n)] = {
            "L": L,
            "tail": tails,
            "vanishing_threshold": 1.0 / math.log(L) if L > 1 else None,
            "vanishing": frequency(r["diff_gt_vanishing"] for r in sub),
            "separation": seps,
            "separation_nondecreasing_in_j": nondecreasing([seps[str(j)]["frequency"] for j in cfg.gap_ranks]),
            "count_window": frequency(r["count_window"] for r in sub),
            "count_bound": pp.count_concentration_bound(nu, L, cfg.concentration_eps) if L > 0 else None,
            "largest_window": frequency(r["largest_window"] for r in sub),
            "kappa_mean_per_length": float(np.mean([r["kappa"] for r in sub])) / L if L > 0 else None,
        }
    aggregates = {
        "density": density,
        "iid": {"k": cfg.iid_k, "trials": cfg.trials, "tail": iid},
        "sizes": per_size,
        "trends": {
            "vanishing_nondecreasing": nondecreasing([per_size[str(n)]["vanishing"]["frequency"] for n in cfg.sizes]),
            "largest_window_nondecreasing": nondecreasing([per_size[str(n)]["largest_window"]["frequency"] for n in cfg.sizes]),
        },
    }
    return ExperimentReport(cfg, columns, rows, aggregates, timing=_timing(started))


# ---------------------------------------------------------- energy bounds

BOUND_COLUMNS = ["h", "upper_bound", "upper_check", "lower_bound", "lower_bound_E", "lower_check",
                 "lower_check_r2", "bracket", "second_floor", "level_floor", "failure"]


def _neumann_grounds(field, st, ranks, tol):
    out = {}
    for r in ranks:
        if r > st.gaps.size:
            out[r] = None
            continue
        try:
            block = sp.gap_neumann_block(field, st, r)
        except InvalidParameterError:
            out[r] = None
            continue
        out[r] = float(sp.lowest_eigenvalues(block, 1, tol).eigenvalues[0])
    return out


def _lower_check(st, rank, site, a, b, grounds, slack):
    if site.shape == "delta" or rank > st.gaps.size or not st.is_interior(rank):
        return None, "vacuous"
    lj = float(st.sorted_desc[rank - 1])
    try:
        bound = sp.neumann_ground_lower_bound(lj, site, a, b)
    except PreconditionError:
        return None, "vacuous"
    e = grounds.get(rank)
    if bound <= 0 or e is None:
        return bound, "vacuous"
    return bound, "held" if e * (1.0 + slack) >= bound else "violated"


def _energy_trial(cfg, n, L, seed, strengths):
    conf = pp.sample_configuration(cfg.rate, L, seed)
    st = pp.clipped_gaps(conf)
    top = pp.top_gaps(st, 2)
    rows = []
    for S in strengths:
        site = _site(cfg, S)
        row = {"seed": seed, "N": n, "L": L, "S": S, "kappa": conf.count, "l1": top[0], "l2": top[1]}
        try:
            h_req = _grid(cfg, site, L)
            field = sp.assemble_potential(conf, site, h_req)
            h = field.grid_spacing
            row["h"] = h
            slack = cfg.eig_slack * h * h
            k = min(5, field.n)
            dspec = sp.lowest_eigenvalues(sp.discretize(field, sp.DIRICHLET), k, cfg.tol)
            _put_levels(row, dspec.eigenvalues)
            e = dspec.eigenvalues
            ub = sp.dirichlet_ground_upper_bound(float(top[0]), site.support_total)
            row["upper_bound"] = ub
            row["upper_check"] = "vacuous" if ub is None else ("held" if e[0] <= ub * (1.0 + slack) else "violated")
            grounds = _neumann_grounds(field, st, (1, 2, 3), cfg.tol)
            a = cfg.edge_a if cfg.edge_a is not None else cfg.support_right / 2.0
            b = cfg.edge_b if cfg.edge_b is not None else cfg.support_left / 2.0
            row["lower_bound"], row["lower_check"] = _lower_check(st, 1, site, a, b, grounds, slack)
            row["lower_bound_E"] = grounds.get(1)
            _, row["lower_check_r2"] = _lower_check(st, 2, site, a, b, grounds, slack)
            nspec = sp.lowest_eigenvalues(sp.neumann_direct_sum(field, st), k, cfg.tol)
            row["bracket"] = "held" if np.all(e >= nspec.eigenvalues - 2 * cfg.tol) else "violated"
            lnL = math.log(L)
            floor_second = 9.0 / 4.0 * (cfg.rate * math.pi) ** 2 / lnL**2
            floor_level = 15.0 / 9.0 * (cfg.rate * math.pi) ** 2 / lnL**2
            g2 = grounds.get(2)
            if k >= 2 and g2 is not None:
                row["second_floor"] = "held" if e[1] >= min(g2, floor_second) - 2 * cfg.tol else "violated"
            else:
                row["second_floor"] = "vacuous"
            ok_level = []
            for j in range(1, k + 1):
                g = grounds.get(math.ceil(j / 2))
                if g is not None:
                    ok_level.append(e[j - 1] >= min(g, floor_level) - 2 * cfg.tol)
            row["level_floor"] = "vacuous" if not ok_level else ("held" if all(ok_level) else "violated")
        except NumericalFailure as exc:
            row["failure"] = f"{exc} {exc.detail}"
            for col in ("upper_check", "lower_check", "lower_check_r2", "bracket", "second_floor", "level_floor"):
                row[col] = "solver_failed"
        rows.append(row)
    return rows


def run_energy_bounds(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Per-realisation checks of the ground-state brackets."""
    _check_kind(cfg, "energy_bounds")
    started = time.time()
    density = _density(cfg)

    def trial(n, L, t, seed):
        rows = _energy_trial(cfg, n, L, seed, strength_ladder(cfg.strength, n))
        for r in rows:
            r["trial"] = t
        return rows

    rows = _flatten(_map(trial, _tasks(cfg, density), threads))
    checks = ("upper_check", "lower_check", "lower_check_r2", "bracket", "second_floor", "level_floor")
    tallies = {}
    for n in cfg.sizes:
        for S in strength_ladder(cfg.strength, n):
            sub = [r for r in rows if r["N"] == n and r["S"] == S]
            tallies[f"N={n},S={S!r}"] = {c: tally(r[c] for r in sub) for c in checks}
    violations = [{"seed": r["seed"], "N": r["N"], "S": r["S"], "check": c}
                  for r in rows for c in checks if r.get(c) == "violated" and c in ("upper_check", "lower_check", "lower_check_r2", "bracket")]
    aggregates = {"density": density, "violations": violations}
    return ExperimentReport(cfg, BASE_COLUMNS + BOUND_COLUMNS, rows, aggregates, tallies,
                            timing=_timing(started))


# ----------------------------------------------------------- condensation

def _spectrum_for(cfg, conf, st, n, L, S):
    """Levels entering the particle sum: LS analytic or numeric soft obstacles."""
    if cfg.comparator == "ls":
        e1 = float(sp.luttinger_sy_eigenvalues(st, 1).eigenvalues[0])
        return sp.luttinger_sy_levels_below(st, e1 + cfg.energy_cutoff / cfg.beta), None
    site = _site(cfg, S)
    field = sp.assemble_potential(conf, site, _grid(cfg, site, L))
    op = sp.discretize(field, sp.DIRICHLET)
    if cfg.levels > 0:
        return sp.lowest_eigenvalues(op, min(cfg.levels, op.dimension), cfg.tol), field.grid_spacing
    e1 = float(sp.lowest_eigenvalues(op, 1, cfg.tol).eigenvalues[0])
    return sp.eigenvalues_below(op, e1 + cfg.energy_cutoff / cfg.beta, cfg.tol, minimum=2), field.grid_spacing


def run_condensation(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Full pipeline per realisation: spectrum, chemical potential, occupations."""
    _check_kind(cfg, "condensation")
    started = time.time()
    density = _density(cfg)
    rho_c = th.critical_density_ls(cfg.rate, cfg.beta)
    rho0 = max(density - rho_c, 0.0)
    theta = cfg.theta if cfg.theta is not None else 0.5 * rho0 / density
    warnings = []
    if density <= rho_c:
        msg = (f"density {density!r} is not above the LS critical density {rho_c!r}: "
               "no-condensation regime")
        warnings.append(msg)
        log.warning(msg)

    def trial(n, L, t, seed):
        S = strength_ladder(cfg.strength, n)[0]
        conf = pp.sample_configuration(cfg.rate, L, seed)
        st = pp.clipped_gaps(conf)
        top = pp.top_gaps(st, 2)
        row = {"trial": t, "seed": seed, "N": n, "L": L, "S": None if cfg.comparator == "ls" else S,
               "kappa": conf.count, "l1": top[0], "l2": top[1]}
        try:
            spec, _ = _spectrum_for(cfg, conf, st, n, L, S)
        except NumericalFailure as exc:
            row["failure"] = f"{exc} {exc.detail}"
            return row
        _put_levels(row, spec.eigenvalues)
        row["levels"] = len(spec)
        params = sp.GapEventParams(cfg.zeta1, cfg.zeta2, n, cfg.rate, L)
        row["event_omega"] = sp.gap_event_indicator(spec, 2, params) if len(spec) >= 2 else None
        eps = 1.001 * float(spec.eigenvalues[1]) if cfg.eps_window.strip().upper() == "E2" else float(cfg.eps_window)
        row["eps"] = eps
        try:
            state = th.thermo_state(spec, density, cfg.beta, L, tail_tolerance=cfg.tail_tolerance)
        except TruncationError:
            row["failure"] = "truncated"
            return row
        except NumericalFailure as exc:
            row["failure"] = f"{exc} {exc.detail}"
            return row
        cs = th.condensate_statistics(spec, state.occupations, n, eps, density, rho_c)
        row.update(mu=state.chemical_potential, n1_frac=cs.ground_fraction,
                   n2_frac=cs.second_fraction, band_frac=cs.band_fraction,
                   residual=state.residual, above_theta=cs.ground_fraction >= theta)
        return row

    rows = _map(trial, _tasks(cfg, density), threads)
    columns = BASE_COLUMNS + ["levels", "eps", "residual", "event_omega", "above_theta", "failure"]
    per_size = {}
    for n in cfg.sizes:
        sub = _by_size(rows, n)
        n1 = [r["n1_frac"] for r in sub if r.get("n1_frac") is not None]
        per_size[str(n)] = {
            "L": n / density,
            "median_n1_frac": _median(n1),
            "median_n2_frac": _median([r.get("n2_frac") for r in sub]),
            "median_band_frac": _median([r.get("band_frac") for r in sub]),
            "mean_n1_frac": float(np.mean(n1)) if n1 else None,
            "second_moment_n1_frac": float(np.mean(np.square(n1))) if n1 else None,
            "event_omega": frequency(r.get("event_omega") for r in sub if r.get("event_omega") is not None),
            "above_theta": frequency(r.get("above_theta") for r in sub if r.get("above_theta") is not None) if n1 else None,
            "max_residual": max((r["residual"] for r in sub if r.get("residual") is not None), default=None),
            "failures": sum(1 for r in sub if r.get("failure")),
        }
    seq = [per_size[str(n)] for n in cfg.sizes]

    def trend(key, test):
        vals = [s[key] for s in seq]
        return None if any(v is None for v in vals) else test(vals)

    aggregates = {
        "density": density,
        "rho_c_ls": rho_c,
        "rho0_over_rho": rho0 / density,
        "theta": theta,
        "sizes": per_size,
        "trends": {
            "median_n1_increasing": trend("median_n1_frac", strictly_increasing),
            "median_n2_decreasing": trend("median_n2_frac", strictly_decreasing),
            "median_band_decreasing": trend("median_band_frac", strictly_decreasing),
            "event_omega_nondecreasing": nondecreasing([s["event_omega"]["frequency"] for s in seq]),
        },
    }
    return ExperimentReport(cfg, columns, rows, aggregates, warnings=warnings, timing=_timing(started))


# --------------------------------------------------------------- Lifshitz

def run_lifshitz(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Empirical IDS of an ensemble and the fitted Lifshitz exponent."""
    _check_kind(cfg, "lifshitz")
    started = time.time()
    density = _density(cfg)
    grid = np.geomspace(cfg.energy_min, cfg.energy_max, cfg.energy_points)

    def trial(n, L, t, seed):
        S = strength_ladder(cfg.strength, n)[0]
        conf = pp.sample_configuration(cfg.rate, L, seed)
        st = pp.clipped_gaps(conf)
        top = pp.top_gaps(st, 2)
        if cfg.comparator == "ls":
            counts = np.searchsorted(sp.luttinger_sy_levels_below(st, grid[-1]).eigenvalues, grid, "left")
        else:
            site = _site(cfg, S)
            field = sp.assemble_potential(conf, site, _grid(cfg, site, L))
            counts = sp.discretize(field, sp.DIRICHLET).count_below(grid)
        return {"trial": t, "seed": seed, "N": n, "L": L, "S": S, "kappa": conf.count,
                "l1": top[0], "l2": top[1], "counts": " ".join(str(int(c)) for c in counts)}

    rows = _map(trial, _tasks(cfg, density), threads)
    columns = ["trial", "seed", "N", "L", "S", "kappa", "l1", "l2", "counts"]
    target = -cfg.rate * math.pi
    per_size = {}
    for n in cfg.sizes:
        sub = _by_size(rows, n)
        L = sub[0]["L"]
        counts = np.array([[int(c) for c in r["counts"].split()] for r in sub])
        ids = th.ids_from_counts(counts, L, grid)
        reference = th.analytic_ids_ls(cfg.rate, grid)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(reference > 0, ids.values / reference, np.nan)
        entry = {"L": L, "energies": grid, "ids": ids.values,
                 "weyl_bound_ok": bool(np.all(ids.values <= np.sqrt(grid) / math.pi + 1e-15)),
                 # the comparison constant against the infinite-strength curve is not
                 # known, so its empirical value is reported per grid energy
                 "ratio_to_ls": ratio,
                 "max_ratio_to_ls": float(np.nanmax(ratio)) if np.any(np.isfinite(ratio)) else None}
        try:
            window = tuple(cfg.fit_window) if cfg.fit_window else th.default_fit_window(ids, cfg.ids_floor)
            slope, intercept = th.lifshitz_slope_fit(ids, window)
            entry.update(fit_window=window, slope=slope, intercept=intercept,
                         slope_ratio=slope / target, fit_failed=False)
        except InvalidParameterError as exc:
            entry.update(fit_failed=True, diagnostics=str(exc))
        per_size[str(n)] = entry
    control_grid = np.geomspace(cfg.control_window[0], cfg.control_window[1], 60)
    cslope, cint = th.lifshitz_slope_fit(th.analytic_ids_curve(cfg.rate, control_grid), tuple(cfg.control_window))
    aggregates = {
        "density": density,
        "target_slope": target,
        "analytic_control": {"slope": cslope, "intercept": cint, "slope_ratio": cslope / target,
                             "window": cfg.control_window},
        "sizes": per_size,
    }
    return ExperimentReport(cfg, columns, rows, aggregates, timing=_timing(started))


# ------------------------------------------------------------- LS compare

def run_ls_compare(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Distance of the finite-strength spectrum from the infinite-strength comparator."""
    _check_kind(cfg, "ls_compare")
    started = time.time()
    density = _density(cfg)

    def trial(n, L, t, seed):
        conf = pp.sample_configuration(cfg.rate, L, seed)
        st = pp.clipped_gaps(conf)
        top = pp.top_gaps(st, 2)
        ls = sp.luttinger_sy_eigenvalues(st, 5).eigenvalues
        rows = []
        for S in strength_ladder(cfg.strength, n):
            site = _site(cfg, S)
            row = {"trial": t, "seed": seed, "N": n, "L": L, "S": S, "kappa": conf.count,
                   "l1": top[0], "l2": top[1]}
            _put_levels(row, ls, prefix="LS")
            try:
                field = sp.assemble_potential(conf, site, _grid(cfg, site, L))
                e = sp.lowest_eigenvalues(sp.discretize(field), 5, cfg.tol).eigenvalues
            except NumericalFailure as exc:
                row["failure"] = f"{exc} {exc.detail}"
                row["dominated"] = "solver_failed"
                rows.append(row)
                continue
            _put_levels(row, e)
            rel = np.abs(e - ls) / ls
            row["rel_dev_E1"] = float(rel[0])
            row["max_rel_dev"] = float(rel.max())
            # a grid of spacing h can shorten every gap by at most h
            ceiling = sp.luttinger_sy_eigenvalues(st, 5, shrink=field.grid_spacing).eigenvalues
            row["dominated"] = "held" if np.all(e <= ceiling + 2 * cfg.tol) else "violated"
            rows.append(row)
        return rows

    rows = _flatten(_map(trial, _tasks(cfg, density), threads))
    columns = BASE_COLUMNS + ["LS1", "LS2", "LS3", "LS4", "LS5", "rel_dev_E1", "max_rel_dev",
                              "dominated", "failure"]
    per_size = {}
    tallies = {}
    for n in cfg.sizes:
        ladder = strength_ladder(cfg.strength, n)
        entry = {}
        for S in ladder:
            sub = [r for r in rows if r["N"] == n and r["S"] == S]
            dev = [r["rel_dev_E1"] for r in sub if r.get("rel_dev_E1") is not None]
            entry[repr(S)] = {
                "mean_rel_dev_E1": float(np.mean(dev)) if dev else None,
                "max_rel_dev": max((r["max_rel_dev"] for r in sub if r.get("max_rel_dev") is not None), default=None),
            }
            tallies[f"N={n},S={S!r}"] = {"dominated": tally(r["dominated"] for r in sub)}
        means = [entry[repr(S)]["mean_rel_dev_E1"] for S in ladder]
        entry["mean_rel_dev_decreasing"] = None if None in means else strictly_decreasing(means)
        per_size[str(n)] = entry
    return ExperimentReport(cfg, columns, rows, {"density": density, "sizes": per_size}, tallies,
                            timing=_timing(started))


# ------------------------------------------------------------------------

RUNNERS = {
    "gap_law": run_gap_law,
    "energy_bounds": run_energy_bounds,
    "condensation": run_condensation,
    "lifshitz": run_lifshitz,
    "ls_compare": run_ls_compare,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    return RUNNERS[cfg.kind](cfg, threads)


def _check_kind(cfg, kind):
    if cfg.kind != kind:
        raise InvalidParameterError(f"configuration is for {cfg.kind!r}, not {kind!r}")


def _timing(started):
    return {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "wall_time_s": time.time() - started}
