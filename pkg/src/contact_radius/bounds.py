"""Comparison functions and radius bounds computed from scalar curvature data."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .errors import InvalidInputs, OutOfRange

SIMPSON_TOL = 1e-10
SIMPSON_MAX_INTERVALS = 1_000_000


# ---- reference functions -----------------------------------------------------------

def ct(k: float, r: float) -> float:
    """Generalised cotangent: sqrt(k) cot(sqrt(k) r), 1/r, or sqrt(-k) coth(sqrt(-k) r)."""
    if not r > 0:
        raise OutOfRange(f"ct needs r > 0, got {r}")
    if k > 0:
        s = math.sqrt(k)
        if not r < math.pi / s:
            raise OutOfRange(f"ct needs r < pi/sqrt(k) = {math.pi / s}, got {r}")
        return s / math.tan(s * r)
    if k == 0:
        return 1.0 / r
    s = math.sqrt(-k)
    return s / math.tanh(s * r)


def sn(k: float, r: float) -> float:
    """Generalised sine: sin(sqrt(k) r)/sqrt(k), r, or sinh(sqrt(-k) r)/sqrt(-k)."""
    if r < 0:
        raise OutOfRange(f"sn needs r >= 0, got {r}")
    if k > 0:
        s = math.sqrt(k)
        return math.sin(s * r) / s
    if k == 0:
        return float(r)
    s = math.sqrt(-k)
    return math.sinh(s * r) / s


def sn_inv(k: float, y: float) -> float:
    """Inverse of sn on its principal branch ([0, pi/(2 sqrt k)] when k > 0)."""
    if y < 0:
        raise OutOfRange(f"sn_inv needs y >= 0, got {y}")
    if k > 0:
        s = math.sqrt(k)
        if y * s > 1.0:
            if y * s - 1.0 < 1e-15:
                return math.pi / (2 * s)
            raise OutOfRange(f"sn_inv needs y <= 1/sqrt(k) = {1 / s}, got {y}")
        return math.asin(y * s) / s
    if k == 0:
        return float(y)
    s = math.sqrt(-k)
    return math.asinh(y * s) / s


def adaptive_simpson(f, a: float, b: float, tol: float = SIMPSON_TOL,
                     max_intervals: int = SIMPSON_MAX_INTERVALS) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol)]
    total = 0.0
    intervals = 1
    while stack:
        lo, hi, flo, fmid, fhi, est, eps = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        delta = left + right - est
        if abs(delta) <= 15 * eps or intervals >= max_intervals or hi - lo < 1e-14 * max(1.0, abs(hi)):
            total += left + right + delta / 15
            continue
        intervals += 1
        stack.append((mid, hi, fmid, frm, fhi, right, eps / 2))
        stack.append((lo, mid, flo, flm, fmid, left, eps / 2))
    return total


def _sn_ratio(kappa: float, r: float) -> float:
    return 1.0 if r == 0 else sn(kappa, r) / r


def H1_of_r(r: float, kappa: float) -> float:
    """sqrt(1 + (sn_kappa(r)/r)^2)."""
    if not r > 0:
        raise OutOfRange(f"H1 needs r > 0, got {r}")
    return math.sqrt(1.0 + _sn_ratio(kappa, r) ** 2)


def H2_of_r(r: float, kappa: float, sec_abs: float) -> float:
    """4/3 |sec| (r H1(r) + integral_0^r H1)."""
    if not r > 0:
        raise OutOfRange(f"H2 needs r > 0, got {r}")
    integral = adaptive_simpson(lambda t: math.sqrt(1.0 + _sn_ratio(kappa, t) ** 2), 0.0, r)
    return 4.0 / 3.0 * sec_abs * (r * H1_of_r(r, kappa) + integral)


def twist_factor(r: float, A: float, B: float) -> float:
    """1 - B r - A r^2 / 2."""
    return 1.0 - B * r - 0.5 * A * r * r


def Q_of_r(r: float, K_upper: float, A: float, B: float) -> float:
    """sn_K^{-1}((1 - B r - A r^2/2) sn_K(r))."""
    if r < 0:
        raise OutOfRange(f"Q needs r >= 0, got {r}")
    f = twist_factor(r, A, B)
    if f < 0:
        raise OutOfRange(f"1 - Br - Ar^2/2 = {f} < 0: r lies beyond the transversality radius")
    if f > 1:
        raise OutOfRange(f"1 - Br - Ar^2/2 = {f} > 1")
    if K_upper > 0 and r > math.pi / (2 * math.sqrt(K_upper)):
        raise OutOfRange("Q needs r <= pi/(2 sqrt K)")
    # Q(r) <= r holds exactly; the clamp only removes round-off from sn_inv(sn(r))
    return min(sn_inv(K_upper, f * sn(K_upper, r)), float(r))


def ball_in_cylinder(r0: float, K_upper: float, P_r0: float) -> float:
    """Radius of the geodesic ball inside the Reeb cylinder over a disk of radius r0."""
    if not 0.0 <= P_r0 <= 1.0:
        raise OutOfRange(f"P(r0) must lie in [0, 1], got {P_r0}")
    if r0 < 0:
        raise OutOfRange(f"r0 must be >= 0, got {r0}")
    if K_upper > 0 and not r0 < math.pi / (2 * math.sqrt(K_upper)):
        raise OutOfRange("r0 must be below pi/(2 sqrt K)")
    if K_upper == 0:
        return r0 * (1.0 - P_r0)
    return sn_inv(K_upper, sn(K_upper, r0) * (1.0 - P_r0))


# ---- constants and the bound report ---------------------------------------------------

@dataclass(frozen=True)
class BoundInputs:
    n: int
    inj: float
    kappa: float
    K_upper: float
    sec_abs: float
    theta_prime: float
    ric_min: float

    def validate(self):
        vals = asdict(self)
        for name, v in vals.items():
            if not math.isfinite(v):
                raise InvalidInputs(f"{name} must be finite")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputs("n must be an integer >= 1")
        if not self.inj > 0:
            raise InvalidInputs("inj must be positive")
        if self.kappa > self.K_upper:
            raise InvalidInputs("kappa must not exceed K_upper")
        if self.sec_abs < 0:
            raise InvalidInputs("sec_abs must be non-negative")
        if not self.theta_prime > 0:
            raise InvalidInputs("theta_prime must be positive")
        if self.n * self.theta_prime ** 2 / 4 - self.ric_min / 2 < 0:
            raise InvalidInputs("n theta'^2/4 - ric_min/2 must be non-negative")
        return self

    @property
    def symmetric_bound(self) -> float:
        """Curvature scale for the rough bound: sec lies in [-K, K] with this K."""
        return max(self.sec_abs, abs(self.kappa), abs(self.K_upper))


@dataclass(frozen=True)
class Constants:
    r_max: float
    A: float
    B: float
    Hbar1: float
    Hbar2: float
    Hbar: float
    c_n: float
    d_n: float


def c_n(n: int) -> float:
    return 1.0 / (192 * (1 + 2 * n * (n - 1)) * math.sqrt(n))


def d_n(n: int) -> float:
    return 1.0 / (96 * (1 + 2 * n * (n - 1)) * math.sqrt(n))


def _half_pi_over_sqrt(K: float) -> float:
    return math.pi / (2 * math.sqrt(K)) if K > 0 else math.inf


def compute_constants(inp: BoundInputs) -> Constants:
    inp.validate()
    n = inp.n
    r_max = min(0.5 * inp.inj, _half_pi_over_sqrt(inp.K_upper))
    A = 4.0 / 3.0 * (2 * n - 1) * inp.sec_abs
    B = inp.theta_prime / 2 + math.sqrt(n * inp.theta_prime ** 2 / 4 - inp.ric_min / 2)
    if inp.kappa >= 0:
        H1 = math.sqrt(2.0)
    else:
        H1 = math.sqrt(1.0 + (sn(inp.kappa, r_max) / r_max) ** 2)
    H2 = 4.0 / 3.0 * inp.sec_abs * H1 * r_max
    H = 4.0 * (H2 + B * H1) * H1
    return Constants(r_max, A, B, H1, H2, H, c_n(n), d_n(n))


@dataclass(frozen=True)
class BoundReport:
    r_max: float
    A: float
    B: float
    Hbar1: float
    Hbar2: float
    Hbar: float
    r_perp: float
    r_tau: float
    Q_at_r_tau: float
    darboux_refined: float
    darboux_rough: float
    bound_3d: float | None
    tightness_bound: float
    tube_embed_radius: float
    c_n: float
    d_n: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def transversality_radius(inj: float, A: float, B: float) -> float:
    """min(inj/2, 2/(sqrt(2A + B^2) + B))."""
    denom = math.sqrt(2 * A + B * B) + B
    return min(0.5 * inj, 2.0 / denom if denom > 0 else math.inf)


def rough_scale(inp: BoundInputs) -> float:
    """max(sqrt(K), theta') for the symmetric curvature bound K."""
    return max(math.sqrt(inp.symmetric_bound), inp.theta_prime)


def rough_proof_chain(inp: BoundInputs) -> float:
    """Lower bound min(inj/2, d_n/rho)/2 that the rough-bound argument actually delivers."""
    return 0.5 * min(0.5 * inp.inj, d_n(inp.n) / rough_scale(inp))


def radius_bounds(inp: BoundInputs) -> BoundReport:
    k = compute_constants(inp)
    n = inp.n
    r_perp = transversality_radius(inp.inj, k.A, k.B)
    r_tau = min(0.5 * inp.inj, r_perp, 1.0 / ((1 + 2 * n * (n - 1)) * k.Hbar))
    Q = Q_of_r(r_tau, inp.K_upper, k.A, k.B)
    rough = min(0.5 * inp.inj, k.c_n / rough_scale(inp))
    half_pi = _half_pi_over_sqrt(inp.K_upper)
    tight = min(inp.inj, half_pi)
    bound_3d = min(0.5 * inp.inj, half_pi, r_perp) if n == 1 else None
    tube = min(0.5 * inp.inj, half_pi)
    return BoundReport(k.r_max, k.A, k.B, k.Hbar1, k.Hbar2, k.Hbar, r_perp, r_tau, Q, Q, rough,
                       bound_3d, tight, tube, k.c_n, k.d_n)


def interpolation_constants(C: float, C0: float, C1: float, T0: float, T: float) -> dict:
    """epsilon and lambda making both interpolation inequalities strictly positive."""
    if not (C > 0 and C0 > 0 and C1 > 0 and T0 >= 1 and T > T0):
        raise InvalidInputs("need C, C0, C1 > 0, T0 >= 1 and T > T0")
    width = T - T0
    eps = 0.5 * C1 / (4 * C / width + C1)
    lam = 8 * C * (1 - eps) / (width * eps * C0)
    first = -C * 2 * eps / (width / 2) + (1 - eps) * C1
    second = -C * 2 * (1 - eps) / (width / 2) + lam * eps * C0
    assert first > 0 and second > 0, "interpolation inequalities must be strictly positive"
    return {"epsilon": eps, "lambda": lam, "first": first, "second": second}
