"""Continuously stratified hydrostatic dynamics in isopycnal coordinates.

The vertical coordinate r in (-1, 0) labels density surfaces; unknowns
h(t, x, r) and u(t, x, r) are deviations of the infinitesimal isopycnal
depth (from 1) and of the horizontal velocity (from a background shear
ubar(r)). With a background density rho(r) the motion obeys

    d/dt h + d_x((1 + h)(ubar + u)) = kappa d_x^2 h
    d/dt u + (ubar + u - kappa d_x h / (1 + h)) d_x u
          + (1/rho) d_x Psi = 0

where Psi is the Montgomery potential

    Psi(x, r) = rho(r) * integral_{-1}^{r} h dr'
              + integral_{r}^{0} rho(r') h dr'.

Discretely the r-integrals use the midpoint rule with the cell at r
split half below / half above its midpoint, which makes the kernel
W[i, j] = w_j * rho[max(i, j)] (levels indexed bottom to top) and keeps
the operator exact on piecewise-constant data aligned to cell edges.
That exactness is what turns two-layer states into exact solutions of
this system: `embed_bilayer` maps a bilayer state onto an
interface-aligned level grid and the level-wise dynamics reproduces the
bilayer dynamics to rounding.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import Field2D
from .bilayer import BlowUpError, csv_cell

DEPTH_FLOOR = 1e-6
CFL_DEFAULT = 0.4


class StratifiedProfile:
    """Background density and shear sampled at level midpoints."""

    def __init__(self, levels, rho, ubar):
        rho = np.asarray(rho, dtype=float).copy()
        ubar = np.asarray(ubar, dtype=float).copy()
        if rho.shape != (levels.n_r,) or ubar.shape != (levels.n_r,):
            raise ValueError(
                f"profile needs {levels.n_r} per-level values, got "
                f"{rho.shape} and {ubar.shape}")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(ubar))):
            raise ValueError("profile contains non-finite entries")
        if np.any(rho <= 0.0):
            raise ValueError("background density must be positive")
        rho.flags.writeable = False
        ubar.flags.writeable = False
        self.levels = levels
        self.rho = rho
        self.ubar = ubar

    @property
    def M_bound(self):
        """max(discrete L1 of rho, sup of 1/rho); the Lipschitz constant."""
        l1 = float(np.sum(self.levels.w * self.rho))
        return max(l1, float(np.max(1.0 / self.rho)))


class StratifiedState:
    """Deviation fields (h, u) at one instant."""

    def __init__(self, t, h, u):
        if h.grid != u.grid or h.levels != u.levels:
            raise ValueError("h and u must share grid and levels")
        self.t = float(t)
        self.h = h
        self.u = u
        self.grid = h.grid
        self.levels = h.levels

    @classmethod
    def zeros(cls, grid, levels, t=0.0):
        z = Field2D.zeros(grid, levels)
        return cls(t, z, z)

    @classmethod
    def from_arrays(cls, t, grid, levels, h_values, u_values):
        return cls(t, Field2D(h_values, grid, levels),
                   Field2D(u_values, grid, levels))


@dataclass
class PycnoclineSpec:
    """Mollified two-layer profile: half-width epsilon, transition shape."""
    params: object
    epsilon: float
    shape: str = "tanh"

    SHAPES = ("tanh", "erf", "piecewise-linear")

    def __post_init__(self):
        limit = 0.5 * min(self.params.Hbar_s, self.params.Hbar_b)
        if not 0.0 < self.epsilon < limit:
            raise ValueError(
                f"epsilon must lie in (0, {limit:g}) so the transition stays "
                f"interior, got {self.epsilon}")
        if self.shape not in self.SHAPES:
            raise ValueError(f"shape must be one of {self.SHAPES}")


# ----------------------------------------------------------------------
# Montgomery operator
# ----------------------------------------------------------------------

def montgomery_kernel(profile):
    """The (n_r, n_r) matrix W with Psi = W @ h columns."""
    w = profile.levels.w
    idx = np.arange(profile.levels.n_r)
    return w[None, :] * profile.rho[np.maximum(idx[:, None], idx[None, :])]


def pressure_matrix(profile):
    """(1/rho) W: rows give the pressure-gradient coupling per level."""
    return montgomery_kernel(profile) / profile.rho[:, None]


def montgomery(profile, h):
    """Apply M[rho] to a Field2D, returning Psi as a Field2D."""
    if h.levels != profile.levels:
        raise ValueError("field and profile live on different level grids")
    return Field2D(montgomery_kernel(profile) @ h.values, h.grid, h.levels)


def montgomery_lipschitz_check(profile1, profile2, h):
    """Worst ratio of |(1/rho1)M1 h - (1/rho2)M2 h| to its stated bound.

    The bound is (M^3 |rho1 - rho2|(r) + M ||rho1 - rho2||_L1) ||h||_sup_r
    with M at least the L1 norm of each density and the sup of each
    1/density. Exact arithmetic keeps the ratio at or below 1; rounding
    can push it a hair over.
    """
    if profile1.levels != profile2.levels:
        raise ValueError("profiles live on different level grids")
    left = np.abs((pressure_matrix(profile1) - pressure_matrix(profile2))
                  @ h.values)
    M = max(profile1.M_bound, profile2.M_bound)
    drho = np.abs(profile1.rho - profile2.rho)
    l1 = float(np.sum(profile1.levels.w * drho))
    hsup = np.max(np.abs(h.values), axis=0)
    right = (M ** 3 * drho[:, None] + M * l1) * hsup[None, :]
    ratio = np.where(right > 0.0, left / np.where(right > 0.0, right, 1.0), 0.0)
    if np.any((right == 0.0) & (left > 0.0)):
        return float("inf")
    return float(np.max(ratio)) if ratio.size else 0.0


# ----------------------------------------------------------------------
# dynamics
# ----------------------------------------------------------------------

def _check_depth(h_tot, t):
    m = float(h_tot.min())
    if m <= DEPTH_FLOOR:
        raise BlowUpError(
            f"isopycnal depth fell to {m:.3e} (floor {DEPTH_FLOOR})", t)


def _rhs(h, u, grid, profile, kappa, t):
    """Stacked time derivatives for raw (n_r, n_x) arrays."""
    h_tot = 1.0 + h
    _check_depth(h_tot, t)
    u_tot = profile.ubar[:, None] + u
    d = grid.derivative
    dxh = d(h)
    dxu = d(u)

    dh = -d(grid.dealias(h_tot * u_tot))
    adv = u_tot
    if kappa > 0.0:
        dh += kappa * d(h, order=2)
        adv = u_tot - kappa * dxh / h_tot
    press = pressure_matrix(profile) @ dxh
    du = -grid.dealias(adv * dxu) - press
    return dh, du


def rhs(state, profile, kappa):
    """Time derivatives (dh, du) as Field2D pairs."""
    if state.levels != profile.levels:
        raise ValueError("state and profile live on different level grids")
    if kappa < 0.0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    dh, du = _rhs(state.h.values, state.u.values, state.grid, profile,
                  kappa, state.t)
    return (Field2D(dh, state.grid, state.levels),
            Field2D(du, state.grid, state.levels))


def wave_speed_estimate(state, profile):
    """Upper estimate of the fastest characteristic speed.

    Advection bound max|ubar + u| plus the fastest internal gravity wave
    of the frozen-coefficient linearization, whose squared speeds are the
    eigenvalues of diag(1+h) @ (1/rho)W; per-level maxima of 1+h give a
    safe bound.
    """
    u_tot = profile.ubar[:, None] + state.u.values
    depth = np.max(1.0 + state.h.values, axis=1)
    K = depth[:, None] * pressure_matrix(profile)
    c2 = float(np.max(np.abs(np.linalg.eigvals(K))))
    return float(np.max(np.abs(u_tot))) + math.sqrt(max(c2, 0.0))


def cfl_limit(state, profile, kappa, cfl=CFL_DEFAULT):
    dt = cfl * state.grid.dx / wave_speed_estimate(state, profile)
    if kappa > 0.0:
        dt = min(dt, cfl * state.grid.dx ** 2 / (2.0 * kappa))
    return dt


def step(state, profile, kappa, dt, cfl=CFL_DEFAULT):
    """One RK4 step of the level-coupled system."""
    limit = cfl_limit(state, profile, kappa, cfl)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt = {dt:.3e} exceeds the stability limit {limit:.3e}")
    g = state.grid
    h0, u0 = state.h.values, state.u.values
    t = state.t
    k1h, k1u = _rhs(h0, u0, g, profile, kappa, t)
    k2h, k2u = _rhs(h0 + 0.5 * dt * k1h, u0 + 0.5 * dt * k1u, g, profile,
                    kappa, t + 0.5 * dt)
    k3h, k3u = _rhs(h0 + 0.5 * dt * k2h, u0 + 0.5 * dt * k2u, g, profile,
                    kappa, t + 0.5 * dt)
    k4h, k4u = _rhs(h0 + dt * k3h, u0 + dt * k3u, g, profile, kappa, t + dt)
    h1 = h0 + (dt / 6.0) * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
    u1 = u0 + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    if not (np.all(np.isfinite(h1)) and np.all(np.isfinite(u1))):
        raise BlowUpError("non-finite fields after step", t + dt)
    return StratifiedState.from_arrays(t + dt, g, state.levels, h1, u1)


@dataclass(eq=False)
class StratifiedTrajectory:
    profile: StratifiedProfile
    kappa: float
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


def state_norm(state, s=2.0):
    """Worst-level H^s size of (h, u) together."""
    g = state.grid
    hn = g.sobolev_norms_rows(state.h.values, s)
    un = g.sobolev_norms_rows(state.u.values, s)
    return float(np.max(np.sqrt(hn * hn + un * un)))


def integrate(initial, profile, kappa, T, dt=None, cfl=CFL_DEFAULT,
              snapshot_every=1, blowup_factor=1e3):
    """Fixed-step RK4 trajectory of the stratified system to time T.

    Mirrors the bilayer driver: the step divides T evenly, snapshots and
    diagnostics (per-level masses, worst-level H^2 norm, min depth) are
    recorded every `snapshot_every` steps, and the run halts flagged when
    the norm passes blowup_factor times its initial value, depths touch
    the positivity floor, or fields go non-finite.
    """
    T = float(T)
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    target = cfl_limit(initial, profile, kappa, cfl) if dt is None else float(dt)
    n_steps = max(1, math.ceil(T / target - 1e-12))
    dt = T / n_steps

    norm0 = state_norm(initial)
    ceiling = blowup_factor * max(norm0, 1e-8)
    warnings = []
    diag = {"t": [], "min_depth": [], "norm": [], "mass": []}
    states = [initial]

    def record(st):
        diag["t"].append(st.t)
        diag["min_depth"].append(float((1.0 + st.h.values).min()))
        diag["norm"].append(state_norm(st))
        diag["mass"].append(st.h.values.mean(axis=1))

    record(initial)
    state = initial
    blown_up = False
    blowup_time = None
    for i in range(1, n_steps + 1):
        try:
            state = step(state, profile, kappa, dt, cfl)
        except BlowUpError as err:
            blown_up = True
            blowup_time = err.t
            warnings.append(str(err))
            break
        if i % snapshot_every == 0 or i == n_steps:
            states.append(state)
            record(state)
            if diag["norm"][-1] > ceiling:
                blown_up = True
                blowup_time = state.t
                warnings.append(
                    f"H^2 norm {diag['norm'][-1]:.3e} passed the ceiling "
                    f"{ceiling:.3e} at t = {state.t:.6g}")
                break

    return StratifiedTrajectory(
        profile=profile, kappa=kappa, dt=dt, n_steps=n_steps, states=states,
        diagnostics={k: np.array(v) for k, v in diag.items()},
        blown_up=blown_up, blowup_time=blowup_time, warnings=tuple(warnings))


# ----------------------------------------------------------------------
# two-layer embedding
# ----------------------------------------------------------------------

def _layer_slices(levels, Hbar_s):
    edge = levels.interface_edge_index(-Hbar_s)
    if edge is None or edge == 0 or edge == levels.n_r:
        raise ValueError(
            f"level grid has no interior cell edge at r = {-Hbar_s}; build "
            f"it with LevelGrid.with_interface")
    return slice(0, edge), slice(edge, levels.n_r)


def embed_bilayer(bistate, params, levels):
    """Map a bilayer state onto levels with an edge at r = -Hbar_s.

    Upper-layer cells carry (rho_s, Ubar_s, H_s/Hbar_s, U_s), lower cells
    (rho_b, Ubar_b, H_b/Hbar_b, U_b); no averaging touches the interface,
    so the embedded state is an exact solution of the level dynamics.
    """
    lower, upper = _layer_slices(levels, params.Hbar_s)
    n_r = levels.n_r
    rho = np.empty(n_r)
    ubar = np.empty(n_r)
    rho[lower], rho[upper] = params.rho_b, params.rho_s
    ubar[lower], ubar[upper] = params.Ubar_b, params.Ubar_s
    profile = StratifiedProfile(levels, rho, ubar)

    n_x = bistate.grid.n_x
    h = np.empty((n_r, n_x))
    u = np.empty((n_r, n_x))
    h[lower] = bistate.H_b.values / params.Hbar_b
    h[upper] = bistate.H_s.values / params.Hbar_s
    u[lower] = bistate.U_b.values
    u[upper] = bistate.U_s.values
    state = StratifiedState.from_arrays(bistate.t, bistate.grid, levels, h, u)
    return profile, state


def layer_average(state, params):
    """Weighted per-layer means of (h, u); inverts an exact embedding."""
    lower, upper = _layer_slices(state.levels, params.Hbar_s)
    w = state.levels.w

    def avg(rows, sl):
        return (w[sl, None] * rows[sl]).sum(axis=0) / w[sl].sum()

    return (avg(state.h.values, upper), avg(state.h.values, lower),
            avg(state.u.values, upper), avg(state.u.values, lower))


# ----------------------------------------------------------------------
# smoothed pycnoclines
# ----------------------------------------------------------------------

def _ramp(X, shape):
    """Transition from 0 (X << 0) to 1 (X >> 0) of unit width."""
    if shape == "tanh":
        return 0.5 * (1.0 + np.tanh(X))
    if shape == "erf":
        return 0.5 * (1.0 + erf(X))
    # piecewise-linear: linear on |X| <= 1
    return np.clip(0.5 * (X + 1.0), 0.0, 1.0)


def _ramp_l1_tail(A, shape):
    """integral_0^A of (1 - ramp(X)) dX, exactly."""
    if shape == "tanh":
        return 0.5 * (math.log(2.0) - math.log1p(math.exp(-2.0 * A)))
    if shape == "erf":
        return 0.5 * (A * (1.0 - erf(A))
                      + (1.0 - math.exp(-A * A)) / math.sqrt(math.pi))
    return 0.25 if A >= 1.0 else 0.5 * A - 0.25 * A * A


def profile_l1_distance(spec):
    """Continuum L1(-1, 0) distances of the mollified profile to two-layer.

    Per unit jump the distance is epsilon times the two one-sided ramp
    tails, cut off at the surface and the bed. Returns (rho part, ubar
    part).
    """
    p = spec.params
    eps = spec.epsilon
    tails = (_ramp_l1_tail(p.Hbar_s / eps, spec.shape)
             + _ramp_l1_tail(p.Hbar_b / eps, spec.shape))
    return (eps * abs(p.rho_b - p.rho_s) * tails,
            eps * abs(p.Ubar_b - p.Ubar_s) * tails)


def smooth_pycnocline(spec, levels):
    """Sampled mollified profile plus its exact L1 distances.

    The ramp is evaluated at level midpoints (values are never averaged
    over cells), and the reported distances are the closed-form continuum
    integrals, so sweeps can place runs on an exact abscissa.
    """
    p = spec.params
    X = (levels.r + p.Hbar_s) / spec.epsilon
    frac = _ramp(X, spec.shape)
    rho = p.rho_b + (p.rho_s - p.rho_b) * frac
    ubar = p.Ubar_b + (p.Ubar_s - p.Ubar_b) * frac
    profile = StratifiedProfile(levels, rho, ubar)
    d_rho, d_ubar = profile_l1_distance(spec)
    return profile, {"rho": d_rho, "ubar": d_ubar}


# ----------------------------------------------------------------------
# CSV interfaces
# ----------------------------------------------------------------------

def write_profile(profile, f):
    f.write("r,rho,ubar\n")
    for i, r in enumerate(profile.levels.r):
        f.write(f"{csv_cell(r)},{csv_cell(profile.rho[i])},"
                f"{csv_cell(profile.ubar[i])}\n")


def read_profile(path, levels):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.dtype.names != ("r", "rho", "ubar"):
        raise ValueError(f"profile CSV needs columns (r, rho, ubar), "
                         f"got {data.dtype.names}")
    r = np.atleast_1d(np.asarray(data["r"], dtype=float))
    if (r.size != levels.n_r or not np.all(np.isfinite(r))
            or np.max(np.abs(r - levels.r)) > 1e-9):
        raise ValueError("profile CSV levels do not match the level grid")
    return StratifiedProfile(levels, np.atleast_1d(data["rho"]),
                             np.atleast_1d(data["ubar"]))


def write_state(state, f):
    f.write("x,r,h,u\n")
    for i, r in enumerate(state.levels.r):
        rc = csv_cell(r)
        for j, x in enumerate(state.grid.x):
            f.write(f"{csv_cell(x)},{rc},{csv_cell(state.h.values[i, j])},"
                    f"{csv_cell(state.u.values[i, j])}\n")


def read_state(path, grid, levels, t=0.0):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.dtype.names != ("x", "r", "h", "u"):
        raise ValueError(f"state CSV needs columns (x, r, h, u), "
                         f"got {data.dtype.names}")
    n = levels.n_r * grid.n_x
    if data["x"].size != n:
        raise ValueError(f"state CSV has {data['x'].size} rows, expected {n}")
    shape = (levels.n_r, grid.n_x)
    x = np.asarray(data["x"], dtype=float).reshape(shape)
    r = np.asarray(data["r"], dtype=float).reshape(shape)
    if (not np.all(np.isfinite(x)) or not np.all(np.isfinite(r))
            or np.max(np.abs(x - grid.x[None, :])) > 1e-9
            or np.max(np.abs(r - levels.r[:, None])) > 1e-9):
        raise ValueError("state CSV coordinates do not match the grids")
    return StratifiedState.from_arrays(
        t, grid, levels,
        np.asarray(data["h"], dtype=float).reshape(shape),
        np.asarray(data["u"], dtype=float).reshape(shape))
