"""Forced-system tests: forcing interpolation, decoupling, residual paths."""

import io
import types

import numpy as np
import pytest

import oracles
from pycnolab.core import Field2D, LevelGrid, SpatialGrid
from pycnolab import bilayer
from pycnolab import stratified
from pycnolab.refined import (
    ReferenceRun,
    build_forcing,
    consistency_residual,
    solve_refined,
    write_residuals,
)

PARAMS = bilayer.BilayerParams(0.5, 1.0, 1.0 / 3.0, 2.0 / 3.0)


def reference_setup(n_x=64, n_r=16, kappa=0.1, T=0.3, cluster=0.0):
    grid = SpatialGrid(n_x)
    levels = LevelGrid.with_interface(n_r, -PARAMS.Hbar_s, cluster=cluster)
    bistate = bilayer.make_initial(grid,
                                   amplitudes={"H_s": 0.05, "U_s": 0.02})
    profile, state = stratified.embed_bilayer(bistate, PARAMS, levels)
    dt = stratified.cfl_limit(state, profile, kappa) / 2.0
    traj = stratified.integrate(state, profile, kappa, T, dt=dt,
                                snapshot_every=1)
    return grid, levels, profile, state, traj


def fabricated_trajectory(grid, levels, coeffs, times):
    """Snapshots whose h is a polynomial in t times a fixed x-profile."""
    shape_x = np.sin(grid.x)
    rows = np.linspace(0.5, 1.5, levels.n_r)[:, None] * shape_x[None, :]
    states = []
    for t in times:
        amp = sum(c * t ** k for k, c in enumerate(coeffs))
        states.append(stratified.StratifiedState.from_arrays(
            t, grid, levels, 0.01 * amp * rows, np.zeros_like(rows)))
    return types.SimpleNamespace(states=states)


class TestForcing:

    def test_needs_four_snapshots(self):
        grid = SpatialGrid(16)
        levels = LevelGrid.uniform(4)
        prof = stratified.StratifiedProfile(levels, np.ones(4), np.zeros(4))
        traj = fabricated_trajectory(grid, levels, (1.0,), (0.0, 0.1, 0.2))
        with pytest.raises(ValueError):
            build_forcing(traj, prof)

    def test_level_grid_mismatch(self):
        grid = SpatialGrid(16)
        levels = LevelGrid.uniform(4)
        other = LevelGrid.uniform(5)
        prof = stratified.StratifiedProfile(other, np.ones(5), np.zeros(5))
        traj = fabricated_trajectory(grid, levels, (1.0,),
                                     (0.0, 0.1, 0.2, 0.3))
        with pytest.raises(ValueError):
            build_forcing(traj, prof)

    def test_node_exact(self):
        grid, levels, profile, _, traj = reference_setup(T=0.2)
        ref = build_forcing(traj, profile)
        P = stratified.pressure_matrix(profile)
        for i in (0, len(traj.states) // 2, len(traj.states) - 1):
            t = traj.states[i].t
            want = -(P @ grid.derivative(traj.states[i].h.values))
            got = ref.forcing(t)
            assert np.max(np.abs(got - want)) <= 1e-15
            assert np.array_equal(ref.h_ref(t), traj.states[i].h.values)

    def test_cubic_in_time_is_exact(self):
        grid = SpatialGrid(32)
        levels = LevelGrid.uniform(6)
        prof = stratified.StratifiedProfile(levels,
                                            np.linspace(2.0, 1.0, 6),
                                            np.zeros(6))
        coeffs = (1.0, 2.0, -1.0, 0.5)
        times = np.linspace(0.0, 1.0, 6)
        traj = fabricated_trajectory(grid, levels, coeffs, times)
        ref = build_forcing(traj, prof)
        P = stratified.pressure_matrix(prof)
        for t in (0.13, 0.37, 0.52, 0.81, 0.97):
            amp = sum(c * t ** k for k, c in enumerate(coeffs))
            h_t = amp * traj.states[0].h.values  # coeffs[0] = 1 at t = 0
            want = -(P @ grid.derivative(h_t))
            err = np.max(np.abs(ref.forcing(t) - want))
            assert err <= 1e-13, f"t = {t}: cubic interpolation off {err:.3e}"

    def test_zero_reference_gives_zero_forcing(self):
        grid = SpatialGrid(16)
        levels = LevelGrid.uniform(4)
        prof = stratified.StratifiedProfile(levels, np.ones(4), np.zeros(4))
        traj = fabricated_trajectory(grid, levels, (0.0,),
                                     (0.0, 0.1, 0.2, 0.3))
        ref = build_forcing(traj, prof)
        assert np.all(ref.forcing_snapshots == 0.0)
        assert np.all(ref.forcing(0.15) == 0.0)

    def test_crossed_forcing_obeys_lipschitz_bound(self):
        grid, levels, profile, _, traj = reference_setup(T=0.2, n_r=24)
        target, _ = stratified.smooth_pycnocline(
            stratified.PycnoclineSpec(PARAMS, 0.03, "tanh"), levels)
        worst = 0.0
        for state in traj.states[:: max(1, len(traj.states) // 5)]:
            dxh = Field2D(grid.derivative(state.h.values), grid, levels)
            worst = max(worst, stratified.montgomery_lipschitz_check(
                profile, target, dxh))
        assert worst <= 1.0 + 1e-9, f"crossed forcing ratio {worst}"

    def test_extrapolation_rejected(self):
        grid, levels, profile, _, traj = reference_setup(T=0.2)
        ref = build_forcing(traj, profile)
        with pytest.raises(ValueError):
            ref.forcing(ref.horizon * 1.5)
        with pytest.raises(ValueError):
            ref.forcing(-0.1)


class TestSolveRefined:

    def test_self_consistency(self):
        # feeding a run its own pressure back reproduces it to stepper error
        grid, levels, profile, state, traj = reference_setup()
        kappa, T, dt = 0.1, 0.3, traj.dt
        ref = build_forcing(traj, profile)
        run = solve_refined(state, profile, ref, kappa, T, dt=dt)
        half = stratified.integrate(state, profile, kappa, T, dt=dt / 2.0,
                                    snapshot_every=10 ** 9)
        tol = max(np.max(np.abs(half.final.h.values - traj.final.h.values)),
                  np.max(np.abs(half.final.u.values - traj.final.u.values)))
        diff = max(np.max(np.abs(run.final.h.values - traj.final.h.values)),
                   np.max(np.abs(run.final.u.values - traj.final.u.values)))
        assert diff <= 10.0 * tol, (
            f"self-consistency diff {diff:.3e} vs stepper error {tol:.3e}")

    def test_heat_mode_decay(self):
        # no forcing, no background: h diffuses mode by mode
        grid = SpatialGrid(64)
        levels = LevelGrid.uniform(6)
        prof = stratified.StratifiedProfile(levels, np.ones(6), np.zeros(6))
        rest = stratified.integrate(
            stratified.StratifiedState.zeros(grid, levels), prof, 0.0,
            T=0.3, snapshot_every=1)
        ref = build_forcing(rest, prof)
        amp, wavenumber, kappa = 0.01, 3, 0.1
        h0 = np.tile(amp * np.sin(wavenumber * grid.x), (6, 1))
        init = stratified.StratifiedState.from_arrays(
            0.0, grid, levels, h0, np.zeros((6, grid.n_x)))
        run = solve_refined(init, prof, ref, kappa, 0.3, dt=0.002)
        want = oracles.heat_mode_decay(amp, kappa, wavenumber, 0.3)
        err = np.max(np.abs(run.final.h.values[2]
                            - want * np.sin(wavenumber * grid.x)))
        assert err <= 1e-12, f"heat decay off oracle by {err:.3e}"
        assert np.all(run.final.u.values == 0.0)

    def test_levels_decouple_bitwise(self):
        grid, levels, profile, state, traj = reference_setup(n_r=12)
        ref_a = build_forcing(traj, profile)
        ref_b = build_forcing(traj, profile)
        ref_b.forcing_snapshots = ref_b.forcing_snapshots.copy()
        ref_b.forcing_snapshots[:, 5, :] = 0.0
        run_a = solve_refined(state, profile, ref_a, 0.1, 0.3, dt=traj.dt)
        run_b = solve_refined(state, profile, ref_b, 0.1, 0.3, dt=traj.dt)
        for i in range(levels.n_r):
            same_h = np.array_equal(run_a.final.h.values[i],
                                    run_b.final.h.values[i])
            same_u = np.array_equal(run_a.final.u.values[i],
                                    run_b.final.u.values[i])
            if i == 5:
                assert not same_u, "zeroed forcing left its level unchanged"
            else:
                assert same_h and same_u, f"level {i} felt a foreign forcing"

    def test_horizon_and_grid_guards(self):
        grid, levels, profile, state, traj = reference_setup(T=0.2)
        ref = build_forcing(traj, profile)
        with pytest.raises(ValueError):
            solve_refined(state, profile, ref, 0.1, 0.5)
        other = stratified.StratifiedState.zeros(SpatialGrid(32), levels)
        with pytest.raises(ValueError):
            solve_refined(other, profile, ref, 0.1, 0.2)

    def test_depth_collapse_flags_run(self):
        grid = SpatialGrid(16)
        levels = LevelGrid.uniform(4)
        prof = stratified.StratifiedProfile(levels, np.ones(4), np.zeros(4))
        rest = stratified.integrate(
            stratified.StratifiedState.zeros(grid, levels), prof, 0.0,
            T=0.2, dt=0.02, snapshot_every=1)
        ref = build_forcing(rest, prof)
        h0 = np.zeros((4, 16))
        h0[1, 3] = -1.0 + 5e-7
        init = stratified.StratifiedState.from_arrays(0.0, grid, levels, h0,
                                                      np.zeros((4, 16)))
        run = solve_refined(init, prof, ref, 0.0, 0.2, dt=0.01)
        assert run.blown_up
        assert run.blowup_time is not None
        assert len(run.states) == 1


class TestConsistencyResidual:

    def crossed_run(self, n_x=64, eps=0.02):
        grid, levels, profile, state, traj = reference_setup(
            n_x=n_x, n_r=32, cluster=4.0)
        target, _ = stratified.smooth_pycnocline(
            stratified.PycnoclineSpec(PARAMS, eps, "tanh"), levels)
        ref = build_forcing(traj, target)
        run = solve_refined(state, target, ref, 0.1, 0.3, dt=traj.dt)
        return run

    def test_identity_crossing_leaves_no_residual(self):
        grid, levels, profile, state, traj = reference_setup()
        ref = build_forcing(traj, profile)
        run = solve_refined(state, profile, ref, 0.1, 0.3, dt=traj.dt)
        series = consistency_residual(run)
        peak = float(np.max(series.residual_hs))
        assert peak <= 1e-8, f"identity crossing left residual {peak:.3e}"

    def test_two_paths_agree(self):
        series = consistency_residual(self.crossed_run())
        worst = float(np.max(series.agreement))
        assert worst <= 1e-10, f"residual paths disagree at {worst:.3e}"

    def test_inequality_holds_at_all_times(self):
        series = consistency_residual(self.crossed_run())
        worst = float(np.max(series.ratio))
        assert worst <= 1.0 + 1e-9, f"mixed-norm bound violated: {worst}"
        assert np.max(series.residual_hs) > 0.0

    def test_residual_csv(self):
        run = self.crossed_run(n_x=32)
        series = consistency_residual(run)
        buf = io.StringIO()
        write_residuals(series, run.states[0].levels, buf)
        buf.seek(0)
        data = np.genfromtxt(buf, delimiter=",", names=True)
        assert data.dtype.names == ("t", "r", "residual_hs", "bound", "ratio")
        n_r = run.states[0].levels.n_r
        assert data["t"].size == series.times.size * n_r
        block = data["ratio"][:n_r]
        bound = series.bound[0]
        if bound > 0.0:
            want = series.residual_hs[0] / bound
            assert np.max(np.abs(block - want)) <= 1e-12
