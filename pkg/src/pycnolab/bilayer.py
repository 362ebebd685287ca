"""Two-layer shallow-water dynamics with thickness diffusivity.

State fields are deviations (H_s, H_b, U_s, U_b) from reference constants
(Hbar_s, Hbar_b, Ubar_s, Ubar_b). With total depths h_l = Hbar_l + H_l and
total velocities u_l = Ubar_l + U_l the evolution is

    d/dt H_l = -d_x(h_l u_l) + kappa d_x^2 H_l
    d/dt U_s = -(u_s - kappa d_x H_s / h_s) d_x U_s - d_x H_s - d_x H_b
    d/dt U_b = -(u_b - kappa d_x H_b / h_b) d_x U_b
               - (rho_s/rho_b) d_x H_s - d_x H_b

(kappa = 0 recovers the plain system). The combination
V_l = U_l - kappa d_x H_l / h_l closes on its own: the mass equations with
u replaced by Ubar + V reproduce the diffusive mass equations exactly, and

    d/dt V_l + (Ubar_l + V_l - kappa d_x H_l / h_l) d_x V_l + press_l
        = kappa d_x^2 V_l

with the same pressure gradients, so diffusion acts as a plain viscosity
on V. `bd_residual` checks that identity along stored trajectories.

Space is Fourier pseudo-spectral with 2/3 dealiasing applied to every
nonlinear product; time is explicit RK4 under the step constraint
dt <= cfl * min(dx / lambda_max, dx^2 / (2 kappa)) with lambda_max the
largest characteristic speed over the grid.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import Field1D, SobolevIndex
from .hyperbolicity import (
    coefficient_arrays,
    critical_froude,
    max_characteristic_speed,
    quartic_roots_batch,
    symmetrizer_fields,
)

DEPTH_FLOOR = 1e-6
CFL_DEFAULT = 0.4
BLOWUP_NORM_INDEX = SobolevIndex(2.0)


class BlowUpError(RuntimeError):
    """Raised when a run produces non-finite fields or vanishing depth."""

    def __init__(self, message, t):
        super().__init__(f"{message} at t = {t:.6g}")
        self.t = t


@dataclass
class BilayerParams:
    """Reference constants and diffusivity for a bilayer run."""
    rho_s: float
    rho_b: float
    Hbar_s: float
    Hbar_b: float
    Ubar_s: float = 0.0
    Ubar_b: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.rho_s <= 0.0 or self.rho_b <= 0.0:
            raise ValueError("densities must be positive")
        if self.Hbar_s <= 0.0 or self.Hbar_b <= 0.0:
            raise ValueError("reference depths must be positive")
        if abs(self.Hbar_s + self.Hbar_b - 1.0) > 1e-14:
            raise ValueError(
                f"reference depths must sum to 1, got {self.Hbar_s + self.Hbar_b}")
        if abs(self.Ubar_s + self.Ubar_b) > 1e-14:
            raise ValueError(
                f"reference velocities must sum to 0, got {self.Ubar_s + self.Ubar_b}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")

    @property
    def rho_ratio(self):
        return self.rho_s / self.rho_b


class BilayerState:
    """Deviation fields at one instant, all on a shared grid."""

    FIELDS = ("H_s", "H_b", "U_s", "U_b")

    def __init__(self, t, H_s, H_b, U_s, U_b):
        self.t = float(t)
        grid = H_s.grid
        for f in (H_b, U_s, U_b):
            if f.grid is not grid:
                raise ValueError("all four fields must share one grid")
        self.H_s, self.H_b, self.U_s, self.U_b = H_s, H_b, U_s, U_b
        self.grid = grid

    @classmethod
    def zeros(cls, grid, t=0.0):
        z = Field1D.zeros(grid)
        return cls(t, z, z, z, z)

    @classmethod
    def from_arrays(cls, t, grid, stacked):
        return cls(t, *(Field1D(row, grid) for row in stacked))

    def stacked(self):
        return np.array([self.H_s.values, self.H_b.values,
                         self.U_s.values, self.U_b.values])


@dataclass
class EnergySample:
    """Symmetrizer quadratic form and plain L2 size of a perturbation."""
    t: float
    E: float
    l2: float
    coercivity: float = 0.0


def _totals(stacked, params):
    hs = params.Hbar_s + stacked[0]
    hb = params.Hbar_b + stacked[1]
    us = params.Ubar_s + stacked[2]
    ub = params.Ubar_b + stacked[3]
    return hs, hb, us, ub


def _check_depths(hs, hb, t):
    m = min(float(hs.min()), float(hb.min()))
    if m <= DEPTH_FLOOR:
        raise BlowUpError(f"layer depth fell to {m:.3e} (floor {DEPTH_FLOOR})", t)


def _rhs(stacked, grid, params, t):
    """Time derivative of the stacked deviations (4, n_x)."""
    hs, hb, us, ub = _totals(stacked, params)
    _check_depths(hs, hb, t)
    d = grid.derivative
    dHs = d(stacked[0])
    dHb = d(stacked[1])
    dUs = d(stacked[2])
    dUb = d(stacked[3])

    rhs_Hs = -d(grid.dealias(hs * us))
    rhs_Hb = -d(grid.dealias(hb * ub))
    adv_s, adv_b = us, ub
    if params.kappa > 0.0:
        rhs_Hs += params.kappa * d(stacked[0], order=2)
        rhs_Hb += params.kappa * d(stacked[1], order=2)
        adv_s = us - params.kappa * dHs / hs
        adv_b = ub - params.kappa * dHb / hb
    rr = params.rho_ratio
    rhs_Us = -grid.dealias(adv_s * dUs) - dHs - dHb
    rhs_Ub = -grid.dealias(adv_b * dUb) - rr * dHs - dHb
    return np.array([rhs_Hs, rhs_Hb, rhs_Us, rhs_Ub])


def rhs_nondiffusive(state, params):
    """Plain-system time derivatives; params.kappa must be 0."""
    if params.kappa != 0.0:
        raise ValueError("rhs_nondiffusive needs kappa = 0")
    out = _rhs(state.stacked(), state.grid, params, state.t)
    return tuple(Field1D(row, state.grid) for row in out)


def rhs_diffusive(state, params):
    """Diffusive-system time derivatives; params.kappa must be positive."""
    if params.kappa <= 0.0:
        raise ValueError("rhs_diffusive needs kappa > 0")
    out = _rhs(state.stacked(), state.grid, params, state.t)
    return tuple(Field1D(row, state.grid) for row in out)


def total_velocity(state, params):
    """The fields V_l = U_l - kappa d_x H_l / (Hbar_l + H_l)."""
    stacked = state.stacked()
    hs, hb, _, _ = _totals(stacked, params)
    _check_depths(hs, hb, state.t)
    g = state.grid
    Vs = stacked[2] - params.kappa * g.derivative(stacked[0]) / hs
    Vb = stacked[3] - params.kappa * g.derivative(stacked[1]) / hb
    return Field1D(Vs, g), Field1D(Vb, g)


def grid_max_speed(state, params):
    """Largest characteristic root magnitude over the grid."""
    hs, hb, us, ub = _totals(state.stacked(), params)
    return max_characteristic_speed(params.rho_ratio, hs, hb, us, ub)


def cfl_limit(state, params, cfl=CFL_DEFAULT):
    """Largest admissible dt at this state."""
    dt = cfl * state.grid.dx / grid_max_speed(state, params)
    if params.kappa > 0.0:
        dt = min(dt, cfl * state.grid.dx ** 2 / (2.0 * params.kappa))
    return dt


def _rk4(stacked, grid, params, t, dt):
    k1 = _rhs(stacked, grid, params, t)
    k2 = _rhs(stacked + 0.5 * dt * k1, grid, params, t + 0.5 * dt)
    k3 = _rhs(stacked + 0.5 * dt * k2, grid, params, t + 0.5 * dt)
    k4 = _rhs(stacked + dt * k3, grid, params, t + dt)
    return stacked + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, params, dt, cfl=CFL_DEFAULT):
    """One RK4 step; rejects dt beyond the CFL limit."""
    limit = cfl_limit(state, params, cfl)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt = {dt:.3e} exceeds the stability limit {limit:.3e} "
            f"(cfl = {cfl})")
    out = _rk4(state.stacked(), state.grid, params, state.t, dt)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite fields after step", state.t + dt)
    return BilayerState.from_arrays(state.t + dt, state.grid, out)


# ----------------------------------------------------------------------
# margins along a run
# ----------------------------------------------------------------------

class MarginTable:
    """Interpolation table for Fr_-(depth ratio) at fixed density ratio.

    Exact bisection at every grid point and step would dominate runtime;
    the threshold is smooth in the depth ratio, so diagnostics read a
    geometric table instead and extend it on demand.
    """

    def __init__(self, rho_ratio, lo, hi, per_decade=192):
        self.rho_ratio = rho_ratio
        self.lo = lo
        self.hi = hi
        self.per_decade = per_decade
        self._build()

    def _build(self):
        decades = math.log10(self.hi / self.lo)
        n = max(17, int(decades * self.per_decade) + 1)
        self.nodes = np.geomspace(self.lo, self.hi, n)
        self.fr_minus = np.array(
            [critical_froude(h, self.rho_ratio)[0] for h in self.nodes])

    def __call__(self, ratios):
        rmin, rmax = float(np.min(ratios)), float(np.max(ratios))
        if rmin < self.lo or rmax > self.hi:
            self.lo = min(self.lo, 0.5 * rmin)
            self.hi = max(self.hi, 2.0 * rmax)
            self._build()
        return np.interp(ratios, self.nodes, self.fr_minus)


def pointwise_margin(state, params, table=None):
    """Fr_-(H_s/H_b) - |u_b - u_s|/sqrt(h_b) at every grid point."""
    hs, hb, us, ub = _totals(state.stacked(), params)
    _check_depths(hs, hb, state.t)
    ratios = hs / hb
    if table is None:
        table = MarginTable(params.rho_ratio,
                            0.5 * float(ratios.min()), 2.0 * float(ratios.max()))
    shear = np.abs(ub - us) / np.sqrt(hb)
    return table(ratios) - shear, table


def in_margin_set(state, params, sigma, table=None):
    """Pointwise membership in the sigma-margin hyperbolicity set."""
    rr = params.rho_ratio
    if not sigma / 2.0 <= rr <= 1.0 - sigma / 2.0:
        return False, table
    hs, hb, _, _ = _totals(state.stacked(), params)
    ratios = hs / hb
    if float(ratios.min()) < sigma or float(ratios.max()) > 1.0 / sigma:
        return False, table
    if float((hs + hb).min()) < sigma:
        return False, table
    margin, table = pointwise_margin(state, params, table)
    return bool(margin.min() >= sigma), table


# ----------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    params: BilayerParams
    dt: float
    n_steps: int
    states: list
    diagnostics: dict
    blown_up: bool = False
    blowup_time: float = None
    warnings: tuple = ()

    @property
    def final(self):
        return self.states[-1]

    @property
    def times(self):
        return np.array([s.t for s in self.states])


def combined_norm(state, s=BLOWUP_NORM_INDEX):
    """H^s size of the four deviation fields together."""
    g = state.grid
    return float(np.sqrt(sum(
        g.sobolev_norm_values(row, s) ** 2 for row in state.stacked())))


def integrate(initial, params, T, dt=None, cfl=CFL_DEFAULT, snapshot_every=1,
              sigma=None, blowup_factor=1e3):
    """March the state to time T with a fixed step.

    The step is chosen once from the CFL limit of the initial state (or
    from the `dt` request, shrunk to divide T evenly); every step
    re-checks the limit against the current state. Snapshots and
    diagnostics (masses, H^2 norm, worst margin) are stored every
    `snapshot_every` steps. If `sigma` is given the initial state must
    lie in the sigma-margin set; dropping below sigma/2 along the run is
    recorded as a warning, not an error. The run halts with a blow-up
    flag when the H^2 norm passes blowup_factor times its initial value
    or depths hit the positivity floor.
    """
    T = float(T)
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    target = cfl_limit(initial, params, cfl) if dt is None else float(dt)
    n_steps = max(1, math.ceil(T / target - 1e-12))
    dt = T / n_steps

    table = None
    if sigma is not None:
        ok, table = in_margin_set(initial, params, sigma, table)
        if not ok:
            raise ValueError(
                f"initial state leaves the sigma = {sigma} margin set")

    norm0 = combined_norm(initial)
    ceiling = blowup_factor * max(norm0, 1e-8)
    warnings = []

    diag = {"t": [], "mass_s": [], "mass_b": [], "hs_norm": [], "margin": []}
    states = [initial]

    def record(st):
        margin, _ = pointwise_margin(st, params, table) if table is not None \
            else pointwise_margin(st, params)
        diag["t"].append(st.t)
        diag["mass_s"].append(float(st.H_s.values.mean()))
        diag["mass_b"].append(float(st.H_b.values.mean()))
        diag["hs_norm"].append(combined_norm(st))
        diag["margin"].append(float(margin.min()))
        return margin

    if table is None:
        _, table = pointwise_margin(initial, params)
    record(initial)

    state = initial
    blown_up = False
    blowup_time = None
    for i in range(1, n_steps + 1):
        try:
            state = step(state, params, dt, cfl)
        except BlowUpError as err:
            blown_up = True
            blowup_time = err.t
            warnings.append(str(err))
            break
        if i % snapshot_every == 0 or i == n_steps:
            states.append(state)
            margin = record(state)
            if sigma is not None and float(margin.min()) < 0.5 * sigma:
                warnings.append(
                    f"margin fell below sigma/2 = {0.5 * sigma} at t = {state.t:.6g}")
                sigma = None  # warn once
            if diag["hs_norm"][-1] > ceiling:
                blown_up = True
                blowup_time = state.t
                warnings.append(
                    f"H^2 norm {diag['hs_norm'][-1]:.3e} passed the ceiling "
                    f"{ceiling:.3e} at t = {state.t:.6g}")
                break

    return Trajectory(
        params=params, dt=dt, n_steps=n_steps, states=states,
        diagnostics={k: np.array(v) for k, v in diag.items()},
        blown_up=blown_up, blowup_time=blowup_time, warnings=tuple(warnings))


# ----------------------------------------------------------------------
# total-velocity consistency along a run
# ----------------------------------------------------------------------

def bd_residual(trajectory, params):
    """Residual of the closed (H, V) system along a stored run.

    Snapshots must be every step (uniform spacing dt). Time derivatives
    use the five-point fourth-order centered stencil, so only interior
    times appear in the output. Returns (times, residual) with residual
    the root-sum-square of the four equation residuals in discrete L2.
    """
    states = trajectory.states
    if len(states) < 5:
        raise ValueError("need at least five snapshots for the time stencil")
    dts = np.diff([s.t for s in states])
    if np.max(np.abs(dts - dts[0])) > 1e-12 * max(dts[0], 1e-30):
        raise ValueError("bd_residual needs uniformly spaced snapshots")
    dt = dts[0]
    grid = states[0].grid
    kappa = params.kappa

    H = np.array([s.stacked()[:2] for s in states])        # (m, 2, n_x)
    V = np.zeros_like(H)
    for i, s in enumerate(states):
        Vs, Vb = total_velocity(s, params)
        V[i, 0] = Vs.values
        V[i, 1] = Vb.values

    # five-point centered d/dt
    dH = (-H[4:] + 8.0 * H[3:-1] - 8.0 * H[1:-3] + H[:-4]) / (12.0 * dt)
    dV = (-V[4:] + 8.0 * V[3:-1] - 8.0 * V[1:-3] + V[:-4]) / (12.0 * dt)

    times = np.array([s.t for s in states[2:-2]])
    res = np.zeros(times.size)
    rr = params.rho_ratio
    d = grid.derivative
    scale = np.sqrt(grid.length)

    for j, i in enumerate(range(2, len(states) - 2)):
        st = states[i]
        hs, hb, _, _ = _totals(st.stacked(), params)
        dHs, dHb = d(st.H_s.values), d(st.H_b.values)
        vs, vb = V[i]
        eq = np.zeros((4, grid.n_x))
        eq[0] = dH[j, 0] + d(grid.dealias(hs * (params.Ubar_s + vs)))
        eq[1] = dH[j, 1] + d(grid.dealias(hb * (params.Ubar_b + vb)))
        adv_s = params.Ubar_s + vs - kappa * dHs / hs
        adv_b = params.Ubar_b + vb - kappa * dHb / hb
        eq[2] = (dV[j, 0] + grid.dealias(adv_s * d(vs)) + dHs + dHb
                 - kappa * d(vs, order=2))
        eq[3] = (dV[j, 1] + grid.dealias(adv_b * d(vb)) + rr * dHs + dHb
                 - kappa * d(vb, order=2))
        res[j] = scale * np.sqrt(float(np.sum(np.mean(eq * eq, axis=1))))
    return times, res


# ----------------------------------------------------------------------
# symmetrizer energy
# ----------------------------------------------------------------------

def _middle_root_shift(hs, hb, us, ub, rho_ratio):
    """Per-point shift lambda: midpoint of the middle real roots, clipped."""
    roots = quartic_roots_batch(*coefficient_arrays(rho_ratio, hs, hb, us, ub))
    scale = 1.0 + np.max(np.abs(roots), axis=-1)
    n_real = np.sum(np.abs(roots.imag) <= 1e-9 * scale[..., None], axis=-1)
    if np.any(n_real < 4):
        raise ValueError("base state leaves the hyperbolic regime")
    lams = np.sort(roots.real, axis=-1)
    lam = 0.5 * (lams[..., 1] + lams[..., 2])
    return np.clip(lam, np.minimum(us, ub), np.maximum(us, ub))


def energy_functional(base, perturbation, params):
    """The symmetrizer energy of a perturbation pair along a base pair.

    `base` and `perturbation` are (state_U, state_V) pairs; the
    symmetrizer is assembled pointwise at the base U state with the
    middle-root shift, and E sums its quadratic form over both
    perturbation members with trapezoidal (here: exact periodic)
    quadrature. The sample records the empirical coercivity constant
    c^2 = min over the grid of the smallest symmetrizer eigenvalue, so
    E >= c^2 * l2^2 holds by construction.
    """
    base_u, _ = base
    pert_u, pert_v = perturbation
    grid = base_u.grid
    hs, hb, us, ub = _totals(base_u.stacked(), params)
    _check_depths(hs, hb, base_u.t)
    lam = _middle_root_shift(hs, hb, us, ub, params.rho_ratio)
    S = symmetrizer_fields(params.rho_ratio, hs, hb, us, ub, lam)

    eigs = np.linalg.eigvalsh(S)
    c2 = float(eigs[..., 0].min())
    if c2 <= 0.0:
        raise ValueError(
            f"symmetrizer lost definiteness (min eigenvalue {c2:.3e})")

    du = pert_u.stacked().T    # (n_x, 4)
    dv = pert_v.stacked().T
    quad = grid.length / grid.n_x
    E = float(np.einsum("xi,xij,xj->", du, S, du)
              + np.einsum("xi,xij,xj->", dv, S, dv)) * quad
    l2 = float(np.sqrt((np.sum(du * du) + np.sum(dv * dv)) * quad))
    return EnergySample(t=base_u.t, E=E, l2=l2, coercivity=c2)


# ----------------------------------------------------------------------
# initial data and CSV interfaces
# ----------------------------------------------------------------------

def make_initial(grid, kind="sine", amplitudes=None, wavenumber=1,
                 center=None, width=None, t=0.0):
    """Closed-form initial deviations.

    kind "sine": a * sin(2 pi k x / L); "gaussian": a * exp(-(x-c)^2 /
    (2 w^2)) with the offset wrapped periodically; "zero". `amplitudes`
    maps field names (H_s, H_b, U_s, U_b) to a; omitted fields stay 0.
    """
    if amplitudes is None:
        amplitudes = {"H_s": 0.05}
    unknown = set(amplitudes) - set(BilayerState.FIELDS)
    if unknown:
        raise ValueError(f"unknown field names: {sorted(unknown)}")
    L = grid.length
    if center is None:
        center = 0.5 * L
    if width is None:
        width = L / 12.0

    def shape(a):
        if kind == "sine":
            return a * np.sin(2.0 * np.pi * wavenumber * grid.x / L)
        if kind == "gaussian":
            off = (grid.x - center + 0.5 * L) % L - 0.5 * L
            return a * np.exp(-0.5 * (off / width) ** 2)
        if kind == "zero":
            return np.zeros(grid.n_x)
        raise ValueError(f"unknown initial-data kind {kind!r}")

    fields = [Field1D(shape(amplitudes.get(name, 0.0)), grid)
              for name in BilayerState.FIELDS]
    return BilayerState(t, *fields)


def load_initial_csv(path, grid, t=0.0):
    """Initial state from CSV columns (x, H_s, H_b, U_s, U_b)."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    want = ("x",) + BilayerState.FIELDS
    if names is None or tuple(names) != want:
        raise ValueError(f"CSV must have columns {want}, got {names}")
    x = np.asarray(data["x"], dtype=float)
    if (x.size != grid.n_x or not np.all(np.isfinite(x))
            or np.max(np.abs(x - grid.x)) > 1e-9):
        raise ValueError("CSV x column does not match the grid nodes")
    fields = [Field1D(np.asarray(data[name], dtype=float), grid)
              for name in BilayerState.FIELDS]
    return BilayerState(t, *fields)


def csv_cell(value):
    """Shortest exact decimal form of one float (plain, not numpy repr)."""
    return repr(float(value))


def write_snapshots(trajectory, f):
    """Rows (t, x, H_s, H_b, U_s, U_b) for every stored snapshot."""
    f.write("t,x,H_s,H_b,U_s,U_b\n")
    for st in trajectory.states:
        rows = st.stacked()
        t = csv_cell(st.t)
        for j, x in enumerate(st.grid.x):
            cells = ",".join(csv_cell(rows[i, j]) for i in range(4))
            f.write(f"{t},{csv_cell(x)},{cells}\n")


def write_diagnostics(trajectory, f):
    """Rows (t, mass_s, mass_b, hs_norm, margin)."""
    d = trajectory.diagnostics
    f.write("t,mass_s,mass_b,hs_norm,margin\n")
    for i in range(d["t"].size):
        cells = ",".join(csv_cell(d[k][i]) for k in
                         ("t", "mass_s", "mass_b", "hs_norm", "margin"))
        f.write(cells + "\n")
