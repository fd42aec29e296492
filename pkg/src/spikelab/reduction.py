"""Peak ansatz, reduced energy along the boundary, and the small-eps expansion fit.

The transplanted spike W is the rescaled radial ground state pushed through
the Fermi chart at a boundary point and cut off at a fixed radius.  Its energy
is evaluated exactly in rescaled Fermi coordinates: for a planar domain the
pullback metric of the boundary strip is diag((1 - y_n k(s))^2, 1) with k the
signed boundary curvature, so the integral reduces to a 2-D tensor quadrature
with geometrically graded Gauss-Legendre panels against the known e^{-2|z|}
decay.  Linear fits of J against eps recover the energy constant and the
curvature coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from ._numutil import cutoff, cutoff_d1
from .errors import ChartOverflow, DegenerateH, QuadratureUnstable
from .geometry import (
    BoundaryManifold,
    CriticalPoint,
    PlanarCurve,
    find_critical_points,
    second_fundamental_form,
)
from .profile import GroundStateProfile, compute_constants, eval_profile

__all__ = [
    "PeakAnsatz",
    "ReducedEnergySample",
    "ExpansionFit",
    "eval_ansatz",
    "basis_function",
    "basis_gram",
    "reduced_energy",
    "fit_expansion",
    "gradient_check",
    "predict_peaks",
]


@dataclass(frozen=True)
class PeakAnsatz:
    """Spike of width eps at boundary point xi, cut off at radius R_cut."""

    eps: float
    xi: object
    R_cut: float
    profile: GroundStateProfile

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.R_cut <= 0.0:
            raise ValueError("R_cut must be positive")

    def fermi_coords(self, m: BoundaryManifold, x):
        """(ybar, y_n) of an ambient point via closest-point projection."""
        x = np.asarray(x, dtype=float)
        foot = m.closest_boundary_param(x)
        y_n = float(np.linalg.norm(x - m.boundary_point(foot)))
        ybar = m.log(self.xi, foot)
        return np.atleast_1d(ybar), y_n


def eval_ansatz(a: PeakAnsatz, m: BoundaryManifold, x) -> float:
    """W at the ambient point x: U(|y|/eps) * cutoff(|y|), zero outside the chart."""
    ybar, y_n = a.fermi_coords(m, x)
    rho = math.hypot(float(np.linalg.norm(ybar)), y_n)
    if rho >= a.R_cut:
        return 0.0
    v, _ = eval_profile(a.profile, rho / a.eps)
    return float(v * cutoff(rho, a.R_cut))


def basis_function(a: PeakAnsatz, i: int, m: BoundaryManifold, x) -> float:
    """Near-kernel basis member i: (U'(|z|)/|z|) z_i rescaled and cut off."""
    if not 1 <= i <= m.ndim - 1:
        raise ValueError(f"basis index {i} out of range for ambient dimension {m.ndim}")
    ybar, y_n = a.fermi_coords(m, x)
    rho = math.hypot(float(np.linalg.norm(ybar)), y_n)
    if rho >= a.R_cut or rho == 0.0:
        return 0.0
    z = rho / a.eps
    _, dv = eval_profile(a.profile, z)
    zi = float(ybar[i - 1]) / a.eps
    return float((dv / z) * zi * cutoff(rho, a.R_cut))


@dataclass(frozen=True)
class ReducedEnergySample:
    eps: float
    xi: float
    J: float
    gradJ: np.ndarray
    quad_error: float
    H: float

    def to_json_dict(self) -> dict:
        return {
            "eps": self.eps,
            "xi": self.xi,
            "J": self.J,
            "gradJ": [float(g) for g in np.atleast_1d(self.gradJ)],
            "quad_error": self.quad_error,
            "H": self.H,
        }


@dataclass(frozen=True)
class ExpansionFit:
    C_hat: float
    slope_hat: float
    alpha_hat: float | None
    r_squared: float
    eps_min: float
    eps_max: float

    def to_json_dict(self) -> dict:
        return {
            "C_hat": self.C_hat,
            "slope_hat": self.slope_hat,
            "alpha_hat": self.alpha_hat,
            "r2": self.r_squared,
            "eps_min": self.eps_min,
            "eps_max": self.eps_max,
        }


# --- quadrature machinery ---------------------------------------------------


def _graded_panels(z_max: float, breaks_at: tuple = ()) -> np.ndarray:
    """Panel breakpoints 0, 1, 2, 4, ... up to z_max, plus any requested points."""
    pts = {0.0, float(z_max)}
    b = 1.0
    while b < z_max:
        pts.add(b)
        b *= 2.0
    for extra in breaks_at:
        if 0.0 < extra < z_max:
            pts.add(float(extra))
    return np.array(sorted(pts))


def _panel_rule(breaks: np.ndarray, order: int):
    x, w = leggauss(order)
    nodes = []
    weights = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


class _StripQuadrature:
    """Tensor rule on the rescaled half strip z in [-Z,Z] x [0,Zn]."""

    def __init__(self, z_tan: float, z_nor: float, chi_break: float, order: int):
        btan = _graded_panels(z_tan, (chi_break, 0.5 * chi_break))
        bnor = _graded_panels(z_nor, (chi_break, 0.5 * chi_break))
        xt, wt = _panel_rule(btan, order)
        xt = np.concatenate([-xt[::-1], xt])
        wt = np.concatenate([wt[::-1], wt])
        xn, wn = _panel_rule(bnor, order)
        self.z1 = xt[:, None]
        self.zn = xn[None, :]
        self.w = wt[:, None] * wn[None, :]


def _planar_strip_energy(
    m: PlanarCurve,
    prof: GroundStateProfile,
    eps: float,
    xi: float,
    R_cut: float,
    order: int,
) -> float:
    """J(W) by exact strip-metric quadrature in rescaled Fermi coordinates."""
    p = prof.p
    s0 = m.arclength_from(xi)

    # normal extent capped inside the focal set of the nearby boundary arc
    window = np.linspace(-R_cut, R_cut, 201)
    kmax = max(float(np.max(m.curvature_at_arclength(s0 + window))), 0.0)
    reach = 1.0 / kmax if kmax > 0.0 else math.inf
    z_nor = min(R_cut, 0.90 * reach) / eps
    if z_nor < 5.0:
        raise ChartOverflow(
            f"cutoff radius {R_cut:g} exceeds chart validity (usable normal extent "
            f"{z_nor * eps:.3f}, eps={eps:g})"
        )
    z_tan = R_cut / eps

    quad = _StripQuadrature(z_tan, z_nor, R_cut / eps, order)
    z1, zn, w = quad.z1, quad.zn, quad.w
    rho = np.hypot(z1, zn)
    v, dv = eval_profile(prof, rho.ravel())
    v = v.reshape(rho.shape)
    dv = dv.reshape(rho.shape)
    chi = cutoff(eps * rho, R_cut)
    dchi = cutoff_d1(eps * rho, R_cut) * eps
    radial = dv * chi + v * dchi          # d/drho of V(rho) chi(eps rho)
    u = v * chi
    du1 = radial * z1 / rho
    dun = radial * zn / rho

    kappa = m.curvature_at_arclength(s0 + eps * z1)
    fac = 1.0 - eps * zn * kappa          # sqrt(det g); also (g^{11})^{-1/2}
    g11 = fac**-2.0

    # the positive part in the energy is inactive: the ansatz is nonnegative
    assert u.min() >= 0.0
    integrand = (0.5 * (g11 * du1**2 + dun**2) + 0.5 * u**2 - (u**p) / p) * fac
    return float(np.sum(integrand * w))


def reduced_energy(
    m: BoundaryManifold,
    prof: GroundStateProfile,
    eps: float,
    xi: float,
    R_cut: float = 0.8,
    order: int = 16,
    quad_tol: float = 1e-7,
    want_gradient: bool = True,
) -> ReducedEnergySample:
    """J(W) at the peak ansatz (eps, xi) with a tangential gradient estimate.

    The gradient is a centered difference along the boundary geodesic with
    step eps/10; the quadrature error estimate compares two Gauss orders.
    """
    if not isinstance(m, PlanarCurve):
        raise NotImplementedError("reduced energy quadrature is implemented for planar domains")
    if eps > R_cut / 10.0:
        raise ValueError(f"eps={eps:g} too large for R_cut={R_cut:g} (need eps <= R_cut/10)")

    J = _planar_strip_energy(m, prof, eps, xi, R_cut, order)
    J_low = _planar_strip_energy(m, prof, eps, xi, R_cut, order - 4)
    err = abs(J - J_low)
    if err > quad_tol:
        raise QuadratureUnstable(f"quadrature error estimate {err:.2e} above {quad_tol:g}")

    if want_gradient:
        ds = eps / 10.0
        Jp = _planar_strip_energy(m, prof, eps, m.exp(xi, ds), R_cut, order)
        Jm = _planar_strip_energy(m, prof, eps, m.exp(xi, -ds), R_cut, order)
        grad = np.array([(Jp - Jm) / (2.0 * ds)])
    else:
        grad = np.array([0.0])

    H = m.mean_curvature(xi)
    return ReducedEnergySample(eps=eps, xi=float(xi), J=J, gradJ=grad, quad_error=err, H=H)


def basis_gram(
    m: PlanarCurve,
    prof: GroundStateProfile,
    eps: float,
    xi: float,
    R_cut: float = 0.8,
    order: int = 16,
) -> float:
    """eps-weighted Gram entry <Z, Z> of the single tangential basis function (n=2)."""
    s0 = m.arclength_from(xi)
    z_tan = R_cut / eps
    window = np.linspace(-R_cut, R_cut, 201)
    kmax = max(float(np.max(m.curvature_at_arclength(s0 + window))), 0.0)
    z_nor = min(R_cut, 0.90 * (1.0 / kmax if kmax > 0 else math.inf)) / eps

    quad = _StripQuadrature(z_tan, z_nor, R_cut / eps, order)
    z1, zn, w = quad.z1, quad.zn, quad.w
    rho = np.hypot(z1, zn)
    v, dv = eval_profile(prof, rho.ravel())
    v = v.reshape(rho.shape)
    dv = dv.reshape(rho.shape)
    chi = cutoff(eps * rho, R_cut)
    dchi = cutoff_d1(eps * rho, R_cut) * eps

    phi = (dv / rho) * z1                   # d U / d z_1
    # d/dz1 and d/dzn of phi * chi
    with np.errstate(invalid="ignore"):
        d2 = np.where(rho > 0, (prof._spline_dv(rho, 1)), 0.0)
    radial_term = (d2 - dv / rho) / rho**2  # d/drho (dv/rho) / rho
    dphi1 = dv / rho + radial_term * z1 * z1
    dphin = radial_term * z1 * zn
    u1 = dphi1 * chi + phi * dchi * z1 / rho
    un = dphin * chi + phi * dchi * zn / rho

    kappa = m.curvature_at_arclength(s0 + eps * z1)
    fac = 1.0 - eps * zn * kappa
    g11 = fac**-2.0
    integrand = (g11 * u1**2 + un**2 + (phi * chi) ** 2) * fac
    return float(np.sum(integrand * w))


def fit_expansion(samples: list[ReducedEnergySample], h_tol: float = 1e-8) -> ExpansionFit:
    """Linear regression of J on eps: intercept C_hat, slope, alpha_hat = -slope/H."""
    if len(samples) < 4:
        raise ValueError("need at least 4 samples")
    eps = np.array([s.eps for s in samples])
    if eps.max() / eps.min() < 4.0 - 1e-12:
        raise ValueError("eps values must span at least a factor of 4")
    xis = {round(s.xi, 12) for s in samples}
    if len(xis) != 1:
        raise ValueError("samples must share a single boundary point")
    J = np.array([s.J for s in samples])
    slope, intercept = np.polyfit(eps, J, 1)
    pred = slope * eps + intercept
    ss_res = float(np.sum((J - pred) ** 2))
    ss_tot = float(np.sum((J - J.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    H = samples[0].H
    if abs(H) <= h_tol:
        raise DegenerateH(f"|H|={abs(H):.2e} too small to normalize the slope")
    return ExpansionFit(
        C_hat=float(intercept),
        slope_hat=float(slope),
        alpha_hat=float(-slope / H),
        r_squared=r2,
        eps_min=float(eps.min()),
        eps_max=float(eps.max()),
    )


def gradient_check(
    m: PlanarCurve,
    prof: GroundStateProfile,
    eps: float,
    xi: float,
    R_cut: float = 0.8,
    h_tol: float = 1e-8,
) -> dict:
    """Compare the finite-difference dJ/ds with -eps * alpha * dH/ds at xi."""
    rep = second_fundamental_form(m, xi)
    if np.max(np.abs(rep.dH)) <= h_tol:
        raise DegenerateH("mean curvature is critical here; nothing to compare")
    sample = reduced_energy(m, prof, eps, xi, R_cut=R_cut)
    constants = compute_constants(prof)
    predicted = -eps * constants.alpha * rep.dH
    measured = np.atleast_1d(sample.gradJ)
    deviation = float(np.linalg.norm(measured - predicted) / np.linalg.norm(predicted))
    return {
        "eps": eps,
        "xi": float(xi),
        "grad_measured": measured.tolist(),
        "grad_predicted": predicted.tolist(),
        "relative_deviation": deviation,
    }


def predict_peaks(
    m: BoundaryManifold,
    eps: float,
    prof: GroundStateProfile | None = None,
) -> list[tuple[CriticalPoint, str]]:
    """Stable critical points of H ordered by the reduced-energy proxy C - eps*alpha*H.

    Maxima of H come first (lowest proxy energy).  Without a profile the
    ordering is by -H alone, which is equivalent since alpha > 0.
    """
    cps = find_critical_points(m)
    if prof is not None:
        constants = compute_constants(prof)
        c0, alpha = constants.C, constants.alpha
    else:
        c0, alpha = 0.0, 1.0
    scored = sorted(cps, key=lambda cp: c0 - eps * alpha * cp.value)
    best = scored[0].value if scored else None
    out = []
    for cp in scored:
        role = "lowest-energy candidate" if cp.value == best else "higher-energy candidate"
        out.append((cp, role))
    return out
