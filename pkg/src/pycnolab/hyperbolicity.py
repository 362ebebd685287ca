"""Eigenvalue structure of the bilayer first-order system.

At a state point (H_s, H_b, U_s, U_b) with density ratio rr = rho_s/rho_b
the 4x4 coefficient matrix

        A = [[U_s, 0,   H_s, 0  ],
             [0,   U_b, 0,   H_b],
             [1,   1,   U_s, 0  ],
             [rr,  1,   0,   U_b]]

has characteristic polynomial

    P(l) = ((U_b - l)^2 - H_b) ((U_s - l)^2 - H_s) - rr H_s H_b ,

a quartic whose real-root count switches between 4 (hyperbolic), 2
(elliptic, one conjugate pair) and 4 again (supercritical) as the scaled
shear |U_b - U_s|/sqrt(H_b) crosses two thresholds Fr_- < Fr_+ that
depend only on H_s/H_b and rr. In normalized variables
p_s = (U_s - l)/sqrt(H_s), p_b = (U_b - l)/sqrt(H_b) the real roots are
the intersections of the curve (p_s^2 - 1)(p_b^2 - 1) = rr (an inner
oval plus four hyperbola-like branches) with the line
p_b = p_s sqrt(H_s/H_b) + (U_b - U_s)/sqrt(H_b).

Since P(U_s +- sqrt(H_s)) = -rr H_s H_b < 0, the quartic always has at
least two real roots, so the sign of its discriminant decides the count
outright: positive means 4 real, negative means 2.

For hyperbolic points the matrix S built from a shift l between the two
middle roots,

        S = [[rr,     rr,  rr us,  0 ],
             [rr,     1,   0,      ub],
             [rr us,  0,   rr H_s, 0 ],
             [0,      ub,  0,      H_b]]      (us = U_s - l, ub = U_b - l)

is symmetric, makes S A symmetric exactly, and is positive definite
precisely when its leading principal minors (rr, rr(1-rr),
rr^2 (H_s (1-rr) - us^2), rr^2 P(l)) are positive.
"""

from dataclasses import dataclass, field

import numpy as np

_REAL_TOL = 1e-9


@dataclass
class StatePoint:
    """One bilayer state: densities, total depths, total velocities."""
    rho_s: float
    rho_b: float
    H_s: float
    H_b: float
    U_s: float
    U_b: float

    def __post_init__(self):
        vals = (self.rho_s, self.rho_b, self.H_s, self.H_b, self.U_s, self.U_b)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("state point has non-finite entries")
        if self.rho_b <= 0.0 or self.rho_s <= 0.0:
            raise ValueError("densities must be positive")
        if self.H_s <= 0.0 or self.H_b <= 0.0:
            raise ValueError(f"depths must be positive, got ({self.H_s}, {self.H_b})")

    @property
    def rho_ratio(self):
        return self.rho_s / self.rho_b

    @property
    def shear(self):
        return abs(self.U_b - self.U_s) / np.sqrt(self.H_b)

    def require_stable(self):
        if not self.rho_s < self.rho_b:
            raise ValueError(
                f"stable stratification rho_s < rho_b required, got "
                f"{self.rho_s} >= {self.rho_b}")


@dataclass(eq=False)
class HyperbolicityReport:
    coefficients: np.ndarray
    roots: np.ndarray
    real_count: int
    regime: str
    fr_minus: float
    fr_plus: float
    shear: float
    margin: float
    degenerate: bool
    tolerance: float


@dataclass(eq=False)
class Symmetrizer:
    lam: float
    S: np.ndarray
    SA: np.ndarray
    certified: bool
    minors: np.ndarray
    min_eigenvalue: float
    asymmetry: float
    clipped: bool = False
    searched: bool = False


# ----------------------------------------------------------------------
# characteristic polynomial and root machinery
# ----------------------------------------------------------------------

def coefficient_arrays(rho_ratio, H_s, H_b, U_s, U_b):
    """Monic quartic coefficients (c3, c2, c1, c0), broadcasting over arrays.

    Expansion of ((U_b-l)^2 - H_b)((U_s-l)^2 - H_s) - rr H_s H_b.
    """
    rho_ratio, H_s, H_b, U_s, U_b = np.broadcast_arrays(
        *map(np.asarray, (rho_ratio, H_s, H_b, U_s, U_b)))
    # (l^2 - 2 U_b l + U_b^2 - H_b) * (l^2 - 2 U_s l + U_s^2 - H_s)
    ab, cb = -2.0 * U_b, U_b * U_b - H_b
    as_, cs = -2.0 * U_s, U_s * U_s - H_s
    c3 = ab + as_
    c2 = cb + cs + ab * as_
    c1 = ab * cs + as_ * cb
    c0 = cb * cs - rho_ratio * H_s * H_b
    return c3, c2, c1, c0


def characteristic_polynomial(point):
    """Coefficients [1, c3, c2, c1, c0] of P at a StatePoint."""
    c3, c2, c1, c0 = coefficient_arrays(
        point.rho_ratio, point.H_s, point.H_b, point.U_s, point.U_b)
    return np.array([1.0, float(c3), float(c2), float(c1), float(c0)])


def quartic_discriminant(c3, c2, c1, c0):
    """Discriminant of l^4 + c3 l^3 + c2 l^2 + c1 l + c0 (vectorized).

    Positive means four real roots here (two real roots always exist),
    negative means exactly two.
    """
    b, c, d, e = c3, c2, c1, c0
    return (256.0 * e**3 - 192.0 * b * d * e**2 - 128.0 * c**2 * e**2
            + 144.0 * c * d**2 * e - 27.0 * d**4 + 144.0 * b**2 * c * e**2
            - 6.0 * b**2 * d**2 * e - 80.0 * b * c**2 * d * e
            + 18.0 * b * c * d**3 + 16.0 * c**4 * e - 4.0 * c**3 * d**2
            - 27.0 * b**4 * e**2 + 18.0 * b**3 * c * d * e - 4.0 * b**3 * d**3
            - 4.0 * b**2 * c**3 * e + b**2 * c**2 * d**2)


def quartic_roots(coefficients, polish=True):
    """Roots of a monic quartic via companion-matrix eigenvalues.

    One Newton step polishes each eigenvalue against the polynomial; the
    companion route is robust near double roots where closed forms lose
    digits.
    """
    _, b, c, d, e = (float(v) for v in coefficients)
    comp = np.array([
        [-b, -c, -d, -e],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    roots = np.linalg.eigvals(comp)
    if polish:
        p = np.array([1.0, b, c, d, e])
        dp = np.array([4.0, 3.0 * b, 2.0 * c, d])
        val = np.polyval(p, roots)
        der = np.polyval(dp, roots)
        ok = np.abs(der) > 1e-30
        roots = np.where(ok, roots - val / np.where(ok, der, 1.0), roots)
    return roots


def quartic_roots_batch(c3, c2, c1, c0):
    """Eigenvalue roots for stacked quartics; returns (..., 4) complex."""
    c3, c2, c1, c0 = np.broadcast_arrays(
        *map(np.asarray, (c3, c2, c1, c0)))
    shape = c3.shape
    comp = np.zeros(shape + (4, 4))
    comp[..., 0, 0] = -c3
    comp[..., 0, 1] = -c2
    comp[..., 0, 2] = -c1
    comp[..., 0, 3] = -c0
    comp[..., 1, 0] = 1.0
    comp[..., 2, 1] = 1.0
    comp[..., 3, 2] = 1.0
    return np.linalg.eigvals(comp)


def max_characteristic_speed(rho_ratio, H_s, H_b, U_s, U_b):
    """max |root| over broadcast state arrays; used for CFL bounds."""
    roots = quartic_roots_batch(*coefficient_arrays(rho_ratio, H_s, H_b, U_s, U_b))
    return float(np.max(np.abs(roots)))


def _real_count(roots, tol):
    return int(np.sum(np.abs(roots.imag) <= tol))


# ----------------------------------------------------------------------
# critical Froude thresholds
# ----------------------------------------------------------------------

def _disc_of_intercept(c, h_ratio, rho_ratio):
    """Discriminant of the normalized quartic (H_b=1, H_s=h, U_s=0, U_b=c)."""
    c = np.asarray(c, dtype=float)
    h = h_ratio
    c3 = -2.0 * c
    c2 = c * c - 1.0 - h
    c1 = 2.0 * c * h
    c0 = -h * (c * c - 1.0) - rho_ratio * h
    return quartic_discriminant(c3, c2, c1, c0)


def critical_froude(h_ratio, rho_ratio, tol=1e-10, scan_points=256):
    """The two shear thresholds (Fr_minus, Fr_plus) for given ratios.

    Works on the normalized state H_b = 1, H_s = h_ratio, U_s = 0,
    U_b = c >= 0 and locates the sign changes of the quartic
    discriminant in c by scan plus bisection. Between the thresholds the
    discriminant is negative (two real roots); outside it is positive.
    """
    h_ratio = float(h_ratio)
    rho_ratio = float(rho_ratio)
    if h_ratio <= 0.0:
        raise ValueError(f"h_ratio must be positive, got {h_ratio}")
    if not 0.0 < rho_ratio < 1.0:
        raise ValueError(f"rho_ratio must lie in (0, 1), got {rho_ratio}")

    c_hi = 2.0 * (2.0 + np.sqrt(h_ratio))
    while _disc_of_intercept(c_hi, h_ratio, rho_ratio) <= 0.0:
        c_hi *= 2.0
        if c_hi > 1e6:
            raise RuntimeError("no supercritical regime found below c = 1e6")

    m = int(scan_points)
    neg = np.array([], dtype=int)
    cs = None
    while m <= 64 * scan_points:
        cs = np.linspace(0.0, c_hi, m)
        disc = _disc_of_intercept(cs, h_ratio, rho_ratio)
        neg = np.nonzero(disc < 0.0)[0]
        if neg.size:
            break
        m *= 8
    if not neg.size:
        raise RuntimeError(
            f"elliptic window not resolved for h_ratio={h_ratio}, "
            f"rho_ratio={rho_ratio}; it is narrower than {c_hi / m:.2e}")

    def bisect(lo, hi, want_neg_at_hi):
        # sign of disc flips once in [lo, hi]
        for _ in range(200):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if (_disc_of_intercept(mid, h_ratio, rho_ratio) < 0.0) == want_neg_at_hi:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    fr_minus = bisect(cs[neg[0] - 1] if neg[0] > 0 else 0.0, cs[neg[0]], True)
    fr_plus = bisect(cs[neg[-1]], cs[neg[-1] + 1], False)
    return fr_minus, fr_plus


def froude_table(rho_ratio, h_min, h_max, n_nodes=129, tol=1e-10):
    """Sampled Fr_-(h) and Fr_+(h) over [h_min, h_max] for interpolation.

    Solvers evaluating hyperbolicity margins along a trajectory use
    np.interp on this table instead of running a bisection at every grid
    point; the thresholds vary smoothly in the depth ratio so the table
    error is far below diagnostic needs for >= 129 nodes.
    """
    hs = np.geomspace(h_min, h_max, int(n_nodes))
    pairs = np.array([critical_froude(h, rho_ratio, tol=tol) for h in hs])
    return hs, pairs[:, 0], pairs[:, 1]


# ----------------------------------------------------------------------
# classification
# ----------------------------------------------------------------------

def classify(point):
    """Regime report at a state point.

    Requires stable stratification. The real-root count uses the
    scale-aware tolerance 1e-9*(1 + max|root|); points whose shear sits
    within that tolerance of a threshold, or whose roots nearly collide,
    are flagged degenerate rather than trusted.
    """
    point.require_stable()
    coeffs = characteristic_polynomial(point)
    roots = quartic_roots(coeffs)
    scale = 1.0 + float(np.max(np.abs(roots)))
    tol = _REAL_TOL * scale
    nreal = _real_count(roots, tol)

    fr_minus, fr_plus = critical_froude(point.H_s / point.H_b, point.rho_ratio)
    shear = point.shear
    margin = fr_minus - shear

    degenerate = (min(abs(shear - fr_minus), abs(shear - fr_plus))
                  <= _REAL_TOL * (1.0 + shear))
    # near-collision of roots also deserves the flag
    seps = np.abs(roots[:, None] - roots[None, :])[np.triu_indices(4, k=1)]
    if float(np.min(seps)) <= 10.0 * tol:
        degenerate = True

    if nreal >= 4:
        regime = "Hyperbolic" if shear < fr_plus else "FastHyperbolic"
        if not (shear <= fr_minus or shear >= fr_plus):
            # root count and threshold test disagree: only possible in the
            # tolerance band around a tangency
            degenerate = True
            regime = "Hyperbolic" if margin >= 0.0 else "FastHyperbolic"
    elif nreal == 2:
        regime = "Elliptic"
    else:
        # odd counts arise when a conjugate pair sits exactly on the
        # tolerance edge; classify by the threshold test instead
        degenerate = True
        if margin >= 0.0:
            regime = "Hyperbolic"
        elif shear >= fr_plus:
            regime = "FastHyperbolic"
        else:
            regime = "Elliptic"

    return HyperbolicityReport(
        coefficients=coeffs, roots=roots, real_count=nreal, regime=regime,
        fr_minus=fr_minus, fr_plus=fr_plus, shear=shear, margin=margin,
        degenerate=degenerate, tolerance=tol)


def in_hyperbolic_set(point, sigma):
    """Membership in the compact hyperbolicity set with margin sigma.

    Four conditions: sigma/2 <= rho_s/rho_b <= 1 - sigma/2,
    sigma <= H_s/H_b <= 1/sigma, H_s + H_b >= sigma, and
    Fr_- - |U_b - U_s|/sqrt(H_b) >= sigma.
    """
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    rr = point.rho_ratio
    if not (sigma / 2.0 <= rr <= 1.0 - sigma / 2.0):
        return False
    ratio = point.H_s / point.H_b
    if not (sigma <= ratio <= 1.0 / sigma):
        return False
    if point.H_s + point.H_b < sigma:
        return False
    fr_minus, _ = critical_froude(ratio, rr)
    return bool(fr_minus - point.shear >= sigma)


# ----------------------------------------------------------------------
# symmetrizer
# ----------------------------------------------------------------------

def state_matrix(point):
    """The 4x4 coefficient matrix A at the state point."""
    return np.array([
        [point.U_s, 0.0, point.H_s, 0.0],
        [0.0, point.U_b, 0.0, point.H_b],
        [1.0, 1.0, point.U_s, 0.0],
        [point.rho_ratio, 1.0, 0.0, point.U_b],
    ])


def symmetrizer_matrix(point, lam):
    """Assemble S at shift lam (exactly symmetric by construction)."""
    rr = point.rho_ratio
    us = point.U_s - lam
    ub = point.U_b - lam
    return np.array([
        [rr, rr, rr * us, 0.0],
        [rr, 1.0, 0.0, ub],
        [rr * us, 0.0, rr * point.H_s, 0.0],
        [0.0, ub, 0.0, point.H_b],
    ])


def _golden_max(fn, a, b, tol=1e-10):
    """Golden-section maximization of a unimodal-ish fn on [a, b]."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - phi * (b - a)
    x2 = a + phi * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + phi * (b - a)
            f2 = fn(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - phi * (b - a)
            f1 = fn(x1)
    return 0.5 * (a + b)


def leading_minors(S):
    return np.array([np.linalg.det(S[:k, :k]) for k in (1, 2, 3, 4)])


def symmetrizer(point, report=None):
    """Construct and certify the symmetrizer at a hyperbolic point.

    The shift starts from the midpoint of the two middle roots, clipped
    into [min(U_s, U_b), max(U_s, U_b)]; if clipping pushes it out of the
    open middle-root interval, a golden-section search maximizes the
    smallest eigenvalue of S over that interval instead. Certification
    is Sylvester's criterion on the four leading principal minors.
    """
    if report is None:
        report = classify(point)
    if report.regime != "Hyperbolic" or report.margin <= 0.0:
        raise ValueError(
            f"symmetrizer needs a hyperbolic point with positive margin, "
            f"got regime {report.regime} with margin {report.margin:.3e}")
    lams = np.sort(report.roots.real)
    lo, hi = lams[1], lams[2]
    u_lo, u_hi = min(point.U_s, point.U_b), max(point.U_s, point.U_b)

    lam = 0.5 * (lo + hi)
    clipped = False
    searched = False
    if lam < u_lo or lam > u_hi:
        lam = min(max(lam, u_lo), u_hi)
        clipped = True
    if not lo < lam < hi:
        searched = True
        gap = hi - lo

        def min_eig(l):
            return float(np.linalg.eigvalsh(symmetrizer_matrix(point, l))[0])

        lam = _golden_max(min_eig, lo + 1e-12 * gap, hi - 1e-12 * gap,
                          tol=1e-10 * max(gap, 1.0))

    S = symmetrizer_matrix(point, lam)
    SA = S @ state_matrix(point)
    minors = leading_minors(S)
    eigs = np.linalg.eigvalsh(S)
    certified = bool(np.all(minors > 0.0))
    return Symmetrizer(
        lam=float(lam), S=S, SA=SA, certified=certified, minors=minors,
        min_eigenvalue=float(eigs[0]),
        asymmetry=float(np.max(np.abs(SA - SA.T))),
        clipped=clipped, searched=searched)


def symmetrizer_fields(rho_ratio, H_s, H_b, U_s, U_b, lam):
    """Stacked symmetrizers S(x) for per-grid-point state arrays.

    All arguments broadcast; lam may vary per point. Returns (..., 4, 4).
    Used by the energy functional, which needs S at every grid point.
    """
    rr, H_s, H_b, U_s, U_b, lam = np.broadcast_arrays(
        *map(np.asarray, (rho_ratio, H_s, H_b, U_s, U_b, lam)))
    us = U_s - lam
    ub = U_b - lam
    S = np.zeros(rr.shape + (4, 4))
    S[..., 0, 0] = rr
    S[..., 0, 1] = rr
    S[..., 1, 0] = rr
    S[..., 0, 2] = rr * us
    S[..., 2, 0] = rr * us
    S[..., 1, 1] = 1.0
    S[..., 1, 3] = ub
    S[..., 3, 1] = ub
    S[..., 2, 2] = rr * H_s
    S[..., 3, 3] = H_b
    return S


# ----------------------------------------------------------------------
# the root atlas in normalized (p_s, p_b) coordinates
# ----------------------------------------------------------------------

@dataclass(eq=False)
class AtlasCurves:
    h_ratio: float
    rho_ratio: float
    branches: list = field(default_factory=list)   # (name, p_s, p_b)
    lines: list = field(default_factory=list)      # (name, p_s, p_b)


def atlas(h_ratio, rho_ratio, intercepts, n_samples=2001, reach=None):
    """Polyline samples of the quartic curve plus shear lines.

    The curve (p_s^2-1)(p_b^2-1) = rr splits into an inner oval
    (|p_s| <= sqrt(1-rr), traced top and bottom) and four outer branches
    on which p_s^2-1 = sqrt(rr) e^s, p_b^2-1 = sqrt(rr) e^{-s}; the
    exponential parameter keeps samples dense near the corners where the
    lines p_b = p_s sqrt(h_ratio) + intercept cross. `reach` extends the
    sampled range; by default it adapts to cover every real
    characteristic root of the supplied intercepts.
    """
    h_ratio = float(h_ratio)
    rho_ratio = float(rho_ratio)
    if not 0.0 < rho_ratio < 1.0:
        raise ValueError(f"rho_ratio must lie in (0, 1), got {rho_ratio}")
    intercepts = [float(c) for c in intercepts]
    slope = np.sqrt(h_ratio)

    if reach is None:
        reach = 4.0
        for c in intercepts:
            roots = quartic_roots_batch(*coefficient_arrays(
                rho_ratio, h_ratio, 1.0, 0.0, c))
            real = roots.real[np.abs(roots.imag) <= 1e-9 * (1.0 + np.max(np.abs(roots)))]
            if real.size:
                ps = -real / np.sqrt(h_ratio)
                pb = c - real
                reach = max(reach, 1.5 * float(np.max(np.abs(ps))) + 1.0,
                            1.5 * float(np.max(np.abs(pb))) + 1.0)

    out = AtlasCurves(h_ratio=h_ratio, rho_ratio=rho_ratio)
    n = int(n_samples)

    # inner oval: p_b^2 = 1 - rr/(1 - p_s^2) for p_s^2 <= 1 - rr
    half = np.sqrt(1.0 - rho_ratio)
    ps = np.linspace(-half, half, n)
    inner = 1.0 - rho_ratio / np.maximum(1.0 - ps * ps, rho_ratio)
    pb = np.sqrt(np.maximum(inner, 0.0))
    out.branches.append(("oval_top", ps, pb))
    out.branches.append(("oval_bottom", ps, -pb))

    # outer branches via the exponential parametrization
    sq = np.sqrt(rho_ratio)
    s_max = np.log((reach * reach - 1.0) / sq)
    s = np.linspace(-s_max, s_max, n)
    mag_s = np.sqrt(1.0 + sq * np.exp(s))
    mag_b = np.sqrt(1.0 + sq * np.exp(-s))
    for name, sgn_s, sgn_b in (("branch_pp", 1.0, 1.0), ("branch_pm", 1.0, -1.0),
                               ("branch_mp", -1.0, 1.0), ("branch_mm", -1.0, -1.0)):
        out.branches.append((name, sgn_s * mag_s, sgn_b * mag_b))

    ps_line = np.linspace(-reach, reach, n)
    for c in intercepts:
        out.lines.append((f"line_{c:g}", ps_line, slope * ps_line + c))
    return out


def count_line_intersections(curves, intercept):
    """Count curve/line crossings from the polylines by sign changes."""
    slope = np.sqrt(curves.h_ratio)
    total = 0
    for _, ps, pb in curves.branches:
        g = pb - (slope * ps + intercept)
        total += int(np.sum(g[:-1] * g[1:] < 0.0))
        total += int(np.sum(g == 0.0))
    return total
