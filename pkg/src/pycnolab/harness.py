"""Experiment orchestration: sweeps, slope fits, invariant suites, artifacts.

Two rate experiments anchor the package. The kappa sweep measures how
fast diffusive two-layer runs approach the kappa = 0 run (terminal H^s
difference, expected first order in kappa). The epsilon sweep mollifies
the two-layer density jump over widths epsilon, evolves the continuously
stratified column from embedded two-layer data, and measures the
terminal distance to the embedded two-layer run away from the pycnocline
band, expected first order in the profile distance delta_0.

check_all re-runs the cross-module identity suites (classification vs
direct eigenvalues, symmetrizer certificates, conservation, the
total-velocity residual, embedding exactness, the Montgomery Lipschitz
bound, refined-system consistency, Richardson self-convergence) with a
seeded generator and returns machine-readable pass/fail records.

Artifacts are deterministic: CSV cells go through repr(float), JSON uses
the default float repr, and SVG coordinates are rounded to fixed
precision, so re-running a config with the same seed reproduces files
byte for byte.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import bilayer
from . import refined
from . import stratified
from .bilayer import csv_cell
from .core import Field2D, LevelGrid, SpatialGrid
from .hyperbolicity import (
    StatePoint,
    classify,
    critical_froude,
    in_hyperbolic_set,
    state_matrix,
    symmetrizer,
)

SCHEMA_VERSION = 1


# ----------------------------------------------------------------------
# slope fitting
# ----------------------------------------------------------------------

@dataclass
class FitResult:
    slope: float
    intercept: float
    interval: float
    n_points: int


def fit_slope(xs, ys):
    """Least-squares slope of log y against log x with a 95% interval."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 4:
        raise ValueError(f"need at least 4 paired points, got {xs.size}")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("slope fit needs strictly positive values")
    lx = np.log(xs)
    ly = np.log(ys)
    n = lx.size
    mx = lx.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    if sxx == 0.0:
        raise ValueError("abscissa values are all equal")
    slope = float(np.sum((lx - mx) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * mx)
    resid = ly - (slope * lx + intercept)
    dof = n - 2
    se = math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if dof > 0 else 0.0
    interval = float(stats.t.ppf(0.975, dof)) * se if dof > 0 else 0.0
    return FitResult(slope=slope, intercept=intercept, interval=interval,
                     n_points=n)


@dataclass(eq=False)
class SweepResult:
    """One rate experiment: raw per-point table plus the fitted slope."""
    experiment: str
    abscissa: np.ndarray
    series: dict
    headline: str
    fit: FitResult
    expected_slope: float
    slope_tolerance: float
    passed: bool
    inconclusive: bool = False
    detail: str = ""
    meta: dict = field(default_factory=dict)


def _fit_headline(abscissa, values, expected, tolerance):
    """Fit the headline series and judge it, enforcing the span rule."""
    abscissa = np.asarray(abscissa, dtype=float)
    if abscissa.size < 4:
        raise ValueError("sweeps need at least 4 points for a slope")
    span = float(abscissa.max() / abscissa.min())
    if span < 99.0:
        raise ValueError(
            f"sweep abscissa spans a factor {span:.3g}; need two decades")
    fit = fit_slope(abscissa, values)
    passed = abs(fit.slope - expected) <= tolerance
    return fit, passed


# ----------------------------------------------------------------------
# kappa sweep
# ----------------------------------------------------------------------

def _bilayer_difference_norm(a, b, s):
    """Combined H^s size of the four field differences between states."""
    total = 0.0
    for name in bilayer.BilayerState.FIELDS:
        diff = getattr(a, name).values - getattr(b, name).values
        total += a.grid.sobolev_norm_values(diff, s) ** 2
    return math.sqrt(total)


def _params_from_config(cfg):
    p = cfg.get("params", {})
    return bilayer.BilayerParams(
        rho_s=p.get("rho_s", 0.5), rho_b=p.get("rho_b", 1.0),
        Hbar_s=p.get("Hbar_s", 1.0 / 3.0), Hbar_b=p.get("Hbar_b", 2.0 / 3.0),
        Ubar_s=p.get("Ubar_s", 0.0), Ubar_b=p.get("Ubar_b", 0.0),
        kappa=p.get("kappa", 0.0))


def _initial_from_config(cfg, grid):
    init = cfg.get("initial", {})
    return bilayer.make_initial(
        grid, kind=init.get("kind", "sine"),
        amplitudes=init.get("amplitudes", {"H_s": 0.05, "U_s": 0.02}),
        wavenumber=init.get("wavenumber", 1),
        center=init.get("center"), width=init.get("width"))


def sweep_kappa(config, threads=1):
    """Terminal distance between diffusive runs and the plain run.

    All runs share one dt (the stability step of the most diffusive
    member) so the measured differences isolate the kappa terms.
    """
    cfg = dict(config)
    kappas = sorted(float(k) for k in cfg.get("kappas", []))
    if not kappas:
        raise ValueError("kappa sweep needs a non-empty kappas list")
    if kappas[0] <= 0.0:
        raise ValueError("kappa sweep values must be positive")
    T = float(cfg.get("T", 0.5))
    s = float(cfg.get("s", 2.0))
    cfl = float(cfg.get("cfl", 0.4))
    grid = SpatialGrid(int(cfg.get("n_x", 256)),
                       float(cfg.get("length", 2.0 * np.pi)))
    base = _params_from_config(cfg)
    initial = _initial_from_config(cfg, grid)

    def with_kappa(k):
        return bilayer.BilayerParams(base.rho_s, base.rho_b, base.Hbar_s,
                                     base.Hbar_b, base.Ubar_s, base.Ubar_b,
                                     kappa=k)

    # shared step for every member, with headroom for the limit to
    # tighten as the state steepens
    dt = 0.9 * min(bilayer.cfl_limit(initial, with_kappa(k), cfl)
                   for k in [0.0] + kappas)

    def run(k):
        return bilayer.integrate(initial, with_kappa(k), T, dt=dt, cfl=cfl,
                                 snapshot_every=10 ** 9)

    plain = run(0.0)
    if plain.blown_up:
        return SweepResult(
            experiment="sweep-kappa", abscissa=np.array(kappas),
            series={}, headline="difference", fit=None,
            expected_slope=float(cfg.get("expected_slope", 1.0)),
            slope_tolerance=float(cfg.get("slope_tolerance", 0.1)),
            passed=False, inconclusive=True,
            detail="kappa = 0 run blew up", meta={"dt": dt, "T": T})

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, kappas))
    else:
        runs = [run(k) for k in kappas]

    diffs = []
    for k, traj in zip(kappas, runs):
        if traj.blown_up:
            return SweepResult(
                experiment="sweep-kappa", abscissa=np.array(kappas),
                series={}, headline="difference", fit=None,
                expected_slope=float(cfg.get("expected_slope", 1.0)),
                slope_tolerance=float(cfg.get("slope_tolerance", 0.1)),
                passed=False, inconclusive=True,
                detail=f"run at kappa = {k:g} blew up",
                meta={"dt": dt, "T": T})
        diffs.append(_bilayer_difference_norm(traj.final, plain.final, s))
    diffs = np.array(diffs)

    expected = float(cfg.get("expected_slope", 1.0))
    tolerance = float(cfg.get("slope_tolerance", 0.1))
    if np.all(diffs == 0.0):
        return SweepResult(
            experiment="sweep-kappa", abscissa=np.array(kappas),
            series={"difference": diffs}, headline="difference", fit=None,
            expected_slope=expected, slope_tolerance=tolerance, passed=True,
            detail="all differences vanish; runs are identical",
            meta={"dt": dt, "T": T, "s": s})
    fit, passed = _fit_headline(kappas, diffs, expected, tolerance)
    return SweepResult(
        experiment="sweep-kappa", abscissa=np.array(kappas),
        series={"difference": diffs}, headline="difference", fit=fit,
        expected_slope=expected, slope_tolerance=tolerance, passed=passed,
        meta={"dt": dt, "T": T, "s": s, "n_x": grid.n_x})


# ----------------------------------------------------------------------
# epsilon sweep
# ----------------------------------------------------------------------

def _embedded_rows(levels, Hbar_s, upper, lower):
    edge = levels.interface_edge_index(-Hbar_s)
    out = np.empty((levels.n_r, upper.size))
    out[:edge] = lower
    out[edge:] = upper
    return out


def _terminal_level_distances(strat_final, bi_final, params, s):
    """Per-level H^s distance between a stratified state and an embedding."""
    levels = strat_final.levels
    grid = strat_final.grid
    want_h = _embedded_rows(levels, params.Hbar_s,
                            bi_final.H_s.values / params.Hbar_s,
                            bi_final.H_b.values / params.Hbar_b)
    want_u = _embedded_rows(levels, params.Hbar_s, bi_final.U_s.values,
                            bi_final.U_b.values)
    hn = grid.sobolev_norms_rows(strat_final.h.values - want_h, s)
    un = grid.sobolev_norms_rows(strat_final.u.values - want_u, s)
    return np.sqrt(hn * hn + un * un)


def sweep_epsilon(config, threads=1):
    """Distance of smoothed-pycnocline runs to the sharp two-layer run.

    All runs start from the same embedded two-layer data and share one
    dt; distances are sampled at t = T per level, aggregated over the
    levels outside the pycnocline band |r + Hbar_s| > band_factor * eps
    with the cell weights (an integral norm in r), and fitted against
    the closed-form profile distance delta_0.
    """
    cfg = dict(config)
    epsilons = sorted(float(e) for e in cfg.get("epsilons", []))
    if not epsilons:
        raise ValueError("epsilon sweep needs a non-empty epsilons list")
    T = float(cfg.get("T", 0.5))
    s = float(cfg.get("s", 2.0))
    cfl = float(cfg.get("cfl", 0.4))
    kappa = float(cfg.get("kappa", 0.1))
    shape = cfg.get("shape", "tanh")
    band_factor = float(cfg.get("band_factor", 3.0))
    grid = SpatialGrid(int(cfg.get("n_x", 256)),
                       float(cfg.get("length", 2.0 * np.pi)))
    params = _params_from_config(cfg)
    levels = LevelGrid.with_interface(int(cfg.get("n_r", 64)),
                                      -params.Hbar_s,
                                      cluster=float(cfg.get("cluster", 6.0)))
    bi_params = bilayer.BilayerParams(params.rho_s, params.rho_b,
                                      params.Hbar_s, params.Hbar_b,
                                      params.Ubar_s, params.Ubar_b,
                                      kappa=kappa)
    bi_initial = _initial_from_config(cfg, grid)
    _, strat_initial = stratified.embed_bilayer(bi_initial, params, levels)

    targets = []
    deltas = []
    for eps in epsilons:
        spec = stratified.PycnoclineSpec(params, eps, shape)
        profile, dist = stratified.smooth_pycnocline(spec, levels)
        targets.append(profile)
        deltas.append(dist["rho"] + dist["ubar"])
    deltas = np.array(deltas)

    dt = bilayer.cfl_limit(bi_initial, bi_params, cfl)
    for profile in targets:
        dt = min(dt, stratified.cfl_limit(strat_initial, profile, kappa, cfl))
    dt *= 0.9

    bi_run = bilayer.integrate(bi_initial, bi_params, T, dt=dt,
                               snapshot_every=10 ** 9)
    expected = float(cfg.get("expected_slope", 1.0))
    tolerance = float(cfg.get("slope_tolerance", 0.2))

    def bail(detail):
        return SweepResult(
            experiment="sweep-epsilon", abscissa=deltas, series={},
            headline="exterior", fit=None, expected_slope=expected,
            slope_tolerance=tolerance, passed=False, inconclusive=True,
            detail=detail, meta={"dt": dt, "T": T, "kappa": kappa})

    if bi_run.blown_up:
        return bail("two-layer run blew up")

    def run(profile):
        return stratified.integrate(strat_initial, profile, kappa, T, dt=dt,
                                    snapshot_every=10 ** 9)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, targets))
    else:
        runs = [run(p) for p in targets]

    exterior = []
    exterior_sup = []
    everywhere = []
    for eps, traj in zip(epsilons, runs):
        if traj.blown_up:
            return bail(f"stratified run at eps = {eps:g} blew up")
        per_level = _terminal_level_distances(traj.final, bi_run.final,
                                              params, s)
        mask = np.abs(levels.r + params.Hbar_s) > band_factor * eps
        if not np.any(mask):
            return bail(f"eps = {eps:g} leaves no levels outside the band")
        exterior.append(float(np.sum(levels.w[mask] * per_level[mask])))
        exterior_sup.append(float(np.max(per_level[mask])))
        everywhere.append(float(np.sum(levels.w * per_level)))

    series = {"exterior": np.array(exterior),
              "exterior_sup": np.array(exterior_sup),
              "all_levels": np.array(everywhere)}
    if np.all(series["exterior"] == 0.0):
        return SweepResult(
            experiment="sweep-epsilon", abscissa=deltas, series=series,
            headline="exterior", fit=None, expected_slope=expected,
            slope_tolerance=tolerance, passed=True,
            detail="all distances vanish; runs are identical",
            meta={"dt": dt, "T": T, "kappa": kappa})
    fit, passed = _fit_headline(deltas, series["exterior"], expected,
                                tolerance)
    return SweepResult(
        experiment="sweep-epsilon", abscissa=deltas, series=series,
        headline="exterior", fit=fit, expected_slope=expected,
        slope_tolerance=tolerance, passed=passed,
        meta={"dt": dt, "T": T, "kappa": kappa, "shape": shape,
              "epsilons": epsilons, "band_factor": band_factor,
              "n_x": grid.n_x, "n_r": levels.n_r})


# ----------------------------------------------------------------------
# invariant suites
# ----------------------------------------------------------------------

def random_state_point(rng, frac):
    """Random state with shear placed at frac times the lower threshold."""
    rho_b = rng.uniform(0.5, 2.0)
    rho_s = rho_b * rng.uniform(0.05, 0.95)
    H_s = rng.uniform(0.1, 2.0)
    H_b = rng.uniform(0.1, 2.0)
    U_s = rng.uniform(-1.0, 1.0)
    fr_minus, fr_plus = critical_froude(H_s / H_b, rho_s / rho_b)
    if frac <= 1.0:
        shear = frac * fr_minus
    else:
        shear = fr_minus + (frac - 1.0) * (fr_plus - fr_minus)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    U_b = U_s + sign * shear * math.sqrt(H_b)
    return StatePoint(rho_s=rho_s, rho_b=rho_b, H_s=H_s, H_b=H_b,
                      U_s=U_s, U_b=U_b)


def _suite_classification(rng, n_points):
    checked = 0
    for _ in range(n_points):
        frac = rng.uniform(0.0, 2.4)
        point = random_state_point(rng, frac)
        report = classify(point)
        if report.degenerate:
            continue
        eigs = np.linalg.eigvals(state_matrix(point))
        scale = 1.0 + float(np.max(np.abs(eigs)))
        direct = int(np.sum(np.abs(eigs.imag) <= 1e-9 * scale))
        if direct != report.real_count:
            return False, (
                f"root-count mismatch at {point}: classifier "
                f"{report.real_count}, direct eigenvalues {direct}")
        checked += 1
    return True, f"{checked} non-degenerate points agree with eigenvalues"


def _suite_symmetrizer(rng, n_points):
    done = 0
    while done < n_points:
        point = random_state_point(rng, rng.uniform(0.0, 0.8))
        if not in_hyperbolic_set(point, 0.1):
            continue
        cert = symmetrizer(point)
        eigs = np.linalg.eigvalsh(cert.S)
        if not (cert.certified and np.all(cert.minors > 0.0)
                and np.all(eigs > 0.0) and cert.asymmetry <= 1e-12):
            return False, f"certification failed at {point}"
        done += 1
    return True, f"{done} points certified by minors and eigenvalues"


def _suite_conservation(kappa):
    grid = SpatialGrid(128)
    initial = bilayer.make_initial(grid, amplitudes={"H_s": 0.05,
                                                     "U_s": 0.02})
    T = 0.5
    worst_mass = 0.0
    worst_mom = 0.0
    for k in (0.0, kappa):
        params = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0,
                                       kappa=k)
        traj = bilayer.integrate(initial, params, T, snapshot_every=10 ** 9)
        if traj.blown_up:
            return False, f"conservation run blew up at kappa = {k:g}"
        for name in ("H_s", "H_b"):
            drift = abs(getattr(traj.final, name).values.mean()
                        - getattr(initial, name).values.mean()) / T
            worst_mass = max(worst_mass, drift)
        if k == 0.0:
            for name in ("U_s", "U_b"):
                drift = abs(getattr(traj.final, name).values.mean()
                            - getattr(initial, name).values.mean()) / T
                worst_mom = max(worst_mom, drift)
    if worst_mass > 1e-12 or worst_mom > 1e-12:
        return False, (f"mass drift {worst_mass:.3e}, momentum drift "
                       f"{worst_mom:.3e} exceed 1e-12 per unit time")
    return True, (f"mass drift {worst_mass:.3e}, momentum drift "
                  f"{worst_mom:.3e} per unit time")


def _bd_residual_peak(dt_divisor, params, initial, T):
    dt = bilayer.cfl_limit(initial, params) / dt_divisor
    traj = bilayer.integrate(initial, params, T, dt=dt)
    times, res = bilayer.bd_residual(traj, params)
    return float(np.max(res))


def _suite_bd_residual(kappa):
    if kappa <= 0.0:
        return None, "kappa = 0 makes the total velocity equal the velocity"
    grid = SpatialGrid(64)
    params = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0,
                                   kappa=kappa)
    initial = bilayer.make_initial(grid, amplitudes={"H_s": 0.05})
    T = 0.2
    coarse = _bd_residual_peak(2.0, params, initial, T)
    fine = _bd_residual_peak(4.0, params, initial, T)
    ratio = coarse / fine
    if not 8.0 <= ratio <= 32.0:
        return False, f"residual halving ratio {ratio:.2f} not fourth order"
    return True, f"residual halving ratio {ratio:.2f}"


def _suite_embedding():
    grid = SpatialGrid(64)
    params = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0,
                                   kappa=0.1)
    levels = LevelGrid.with_interface(24, -params.Hbar_s)
    bistate = bilayer.make_initial(grid, amplitudes={"H_s": 0.05,
                                                     "U_b": 0.02})
    profile, state = stratified.embed_bilayer(bistate, params, levels)
    dH_s, dH_b, dU_s, dU_b = bilayer.rhs_diffusive(bistate, params)
    dh, du = stratified.rhs(state, profile, params.kappa)
    want_h = _embedded_rows(levels, params.Hbar_s,
                            dH_s.values / params.Hbar_s,
                            dH_b.values / params.Hbar_b)
    want_u = _embedded_rows(levels, params.Hbar_s, dU_s.values, dU_b.values)
    err = max(float(np.max(np.abs(dh.values - want_h))),
              float(np.max(np.abs(du.values - want_u))))
    if err > 1e-12:
        return False, f"embedded time derivatives differ by {err:.3e}"
    dt = min(bilayer.cfl_limit(bistate, params),
             stratified.cfl_limit(state, profile, params.kappa))
    T = 0.1
    bi = bilayer.integrate(bistate, params, T, dt=dt, snapshot_every=10 ** 9)
    strat = stratified.integrate(state, profile, params.kappa, T, dt=dt,
                                 snapshot_every=10 ** 9)
    want_h = _embedded_rows(levels, params.Hbar_s,
                            bi.final.H_s.values / params.Hbar_s,
                            bi.final.H_b.values / params.Hbar_b)
    want_u = _embedded_rows(levels, params.Hbar_s, bi.final.U_s.values,
                            bi.final.U_b.values)
    drift = max(float(np.max(np.abs(strat.final.h.values - want_h))),
                float(np.max(np.abs(strat.final.u.values - want_u))))
    if drift > 1e-10:
        return False, f"embedded trajectory drifted by {drift:.3e}"
    return True, f"derivatives match to {err:.1e}, runs to {drift:.1e}"


def _suite_lipschitz(rng, n_triples):
    grid = SpatialGrid(16)
    worst = 0.0
    for _ in range(n_triples):
        levels = LevelGrid.uniform(int(rng.integers(4, 48)))
        rho1 = rng.uniform(0.2, 4.0, levels.n_r)
        rho2 = np.abs(rho1 + rng.uniform(-0.5, 0.5, levels.n_r)) + 0.05
        p1 = stratified.StratifiedProfile(levels, rho1,
                                          np.zeros(levels.n_r))
        p2 = stratified.StratifiedProfile(levels, rho2,
                                          np.zeros(levels.n_r))
        h = Field2D(rng.standard_normal((levels.n_r, grid.n_x)), grid,
                    levels)
        worst = max(worst, stratified.montgomery_lipschitz_check(p1, p2, h))
    if worst > 1.0 + 1e-9:
        return False, f"bound ratio reached {worst}"
    return True, f"worst ratio {worst:.12f} over {n_triples} triples"


def _suite_refined(kappa):
    k = kappa if kappa > 0.0 else 0.1
    grid = SpatialGrid(64)
    params = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0)
    levels = LevelGrid.with_interface(32, -params.Hbar_s, cluster=4.0)
    bistate = bilayer.make_initial(grid, amplitudes={"H_s": 0.05,
                                                     "U_s": 0.02})
    profile, state = stratified.embed_bilayer(bistate, params, levels)
    dt = stratified.cfl_limit(state, profile, k) / 2.0
    ref_traj = stratified.integrate(state, profile, k, 0.3, dt=dt,
                                    snapshot_every=1)
    target, _ = stratified.smooth_pycnocline(
        stratified.PycnoclineSpec(params, 0.02, "tanh"), levels)
    forcing = refined.build_forcing(ref_traj, target)
    run = refined.solve_refined(state, target, forcing, k, 0.3, dt=dt)
    if run.blown_up:
        return False, "refined run blew up"
    series = refined.consistency_residual(run)
    agreement = float(np.max(series.agreement))
    ratio = float(np.max(series.ratio))
    if agreement > 1e-10:
        return False, f"residual paths disagree at {agreement:.3e}"
    if ratio > 1.0 + 1e-9:
        return False, f"consistency bound violated: ratio {ratio}"
    return True, f"paths agree to {agreement:.1e}, bound ratio {ratio:.3f}"


def _suite_richardson():
    grid = SpatialGrid(64)
    params = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0,
                                   kappa=0.05)
    initial = bilayer.make_initial(grid, amplitudes={"H_s": 0.05})
    T = 0.2
    base = bilayer.cfl_limit(initial, params) / 2.0
    finest = bilayer.integrate(initial, params, T, dt=base / 32.0,
                               snapshot_every=10 ** 9).final
    errs = []
    for m in (4, 8, 16):
        run = bilayer.integrate(initial, params, T, dt=base / m,
                                snapshot_every=10 ** 9).final
        errs.append(_bilayer_difference_norm(run, finest, 0.0))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    if not all(8.0 <= r <= 32.0 for r in ratios):
        return False, f"halving ratios {[f'{r:.1f}' for r in ratios]}"
    return True, f"halving ratios {[f'{r:.1f}' for r in ratios]}"


def check_all(config=None):
    """Run every cross-module invariant suite and report pass/fail rows."""
    cfg = dict(config or {})
    seed = int(cfg.get("seed", 0))
    kappa = float(cfg.get("kappa", 0.1))
    n_points = int(cfg.get("n_points", 1000))
    rng = np.random.default_rng(seed)

    suites = []

    def record(name, outcome):
        ok, detail = outcome
        status = "skip" if ok is None else ("pass" if ok else "fail")
        suites.append({"name": name, "status": status, "detail": detail})

    record("classification", _suite_classification(rng, n_points))
    record("symmetrizer", _suite_symmetrizer(rng, min(n_points, 400)))
    record("conservation", _suite_conservation(kappa))
    record("bd-residual", _suite_bd_residual(kappa))
    record("embedding", _suite_embedding())
    record("lipschitz", _suite_lipschitz(rng, n_points))
    record("refined-consistency", _suite_refined(kappa))
    record("richardson", _suite_richardson())

    passed = all(row["status"] != "fail" for row in suites)
    return {"seed": seed, "kappa": kappa, "n_points": n_points,
            "passed": passed, "suites": suites}


# ----------------------------------------------------------------------
# artifacts
# ----------------------------------------------------------------------

def write_sweep_csv(result, f):
    """Raw per-point sweep table; a trailing comment records the metadata.

    The comment goes last because np.genfromtxt(names=True) reads field
    names from the first line even when it is commented out.
    """
    names = sorted(result.series)
    f.write(",".join(["abscissa"] + names) + "\n")
    for i, x in enumerate(result.abscissa):
        cells = [csv_cell(x)] + [csv_cell(result.series[n][i])
                                 for n in names]
        f.write(",".join(cells) + "\n")
    meta = ",".join(f"{k}={v}" for k, v in sorted(result.meta.items()))
    f.write(f"# {result.experiment} {meta}\n")


def summary_dict(experiment_id, seed, passed, fit, files):
    return {
        "id": experiment_id,
        "seed": seed,
        "pass": bool(passed),
        "slope": None if fit is None else fit.slope,
        "interval": None if fit is None else fit.interval,
        "files": list(files),
    }


def write_summary(summary, f):
    json.dump(summary, f, indent=2, sort_keys=True)
    f.write("\n")


def svg_polylines(named_xy, title):
    """Linear-axes polyline plot; named_xy is a list of (name, xs, ys)."""
    width, height, pad = 480, 360, 48
    xs_all = np.concatenate([np.asarray(x, dtype=float)
                             for _, x, _ in named_xy])
    ys_all = np.concatenate([np.asarray(y, dtype=float)
                             for _, _, y in named_xy])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ("#1f3d7a", "#a03c3c", "#3c7a46", "#7a5e3c", "#5e3c7a",
              "#3c6e7a")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{pad}" y="24" font-size="14">{title}</text>']
    for ci, (name, xs, ys) in enumerate(named_xy):
        color = colors[ci % len(colors)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}"
                       for x, y in zip(np.asarray(xs, dtype=float),
                                       np.asarray(ys, dtype=float)))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_loglog(result, title):
    """Small hand-rolled log-log scatter of the sweep plus its fit line."""
    width, height, pad = 480, 360, 48
    xs = np.log10(result.abscissa)
    names = sorted(result.series)
    if not names:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
                f'height="{height}"><text x="20" y="40">{title}: no '
                f'data</text></svg>\n')
    all_vals = np.concatenate([result.series[n] for n in names])
    positive = all_vals[all_vals > 0.0]
    if positive.size == 0:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
                f'height="{height}"><text x="20" y="40">{title}: all '
                f'values zero</text></svg>\n')
    ys = np.log10(positive)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ("#1f3d7a", "#a03c3c", "#3c7a46", "#7a5e3c")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{pad}" y="24" font-size="14">{title}</text>']
    parts.append(
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>')
    parts.append(
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>')
    for ci, name in enumerate(names):
        vals = result.series[name]
        color = colors[ci % len(colors)]
        pts = []
        for x, v in zip(xs, vals):
            if v > 0.0:
                pts.append(f"{px(x):.2f},{py(math.log10(v)):.2f}")
        if pts:
            parts.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                         f'stroke="{color}" stroke-width="1"/>')
            for p in pts:
                cx, cy = p.split(",")
                parts.append(f'<circle cx="{cx}" cy="{cy}" r="3" '
                             f'fill="{color}"/>')
        parts.append(f'<text x="{width - pad - 110}" '
                     f'y="{pad + 16 * (ci + 1)}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    if result.fit is not None:
        ln10 = math.log(10.0)
        fy0 = (result.fit.slope * (x0 * ln10) + result.fit.intercept) / ln10
        fy1 = (result.fit.slope * (x1 * ln10) + result.fit.intercept) / ln10
        parts.append(
            f'<line x1="{px(x0):.2f}" y1="{py(fy0):.2f}" '
            f'x2="{px(x1):.2f}" y2="{py(fy1):.2f}" stroke="gray" '
            f'stroke-dasharray="5,4"/>')
        parts.append(
            f'<text x="{pad}" y="{height - 16}" font-size="12">slope '
            f'{result.fit.slope:.3f} +- {result.fit.interval:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
