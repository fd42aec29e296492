"""Compact flat domains with parametric boundary, Fermi charts, and curvature.

Two families are provided: planar domains bounded by a closed curve (ambient
dimension 2) and solids of revolution (ambient dimension 3).  The ambient
metric is Euclidean throughout, so all curvature enters through the boundary.
Boundary points are addressed by their parameter: a float t for curves and a
pair (t, phi) for revolved surfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from ._numutil import FD_STEP, fitted_slope
from .errors import DegenerateLandscape, OutOfChart, SingularMetric

__all__ = [
    "BoundaryManifold",
    "PlanarCurve",
    "SurfaceOfRevolution",
    "FermiChart",
    "CurvatureReport",
    "CriticalPoint",
    "ellipse",
    "disk",
    "ball",
    "boundary_exponential",
    "fermi_map",
    "metric_in_fermi",
    "second_fundamental_form",
    "verify_metric_expansion",
    "transition_derivatives",
    "find_critical_points",
    "manifold_from_spec",
]

_DENSE = 8192  # samples for arclength tables and closest-point seeding


class BoundaryManifold:
    """Shared interface of the two domain families."""

    ndim: int  # ambient dimension

    def boundary_point(self, param):
        raise NotImplementedError

    def inward_normal(self, param):
        raise NotImplementedError

    def exp(self, param, y):
        """Boundary exponential map: travel along a boundary geodesic."""
        raise NotImplementedError

    def log(self, base_param, target_param):
        """Inverse of exp in the orthonormal frame at the base point."""
        raise NotImplementedError

    def closest_boundary_param(self, x):
        raise NotImplementedError

    def contains(self, x) -> bool:
        raise NotImplementedError

    def mean_curvature(self, param) -> float:
        raise NotImplementedError

    def reach(self) -> float:
        """Largest normal offset with a positive volume element (1/max principal curvature)."""
        raise NotImplementedError


class PlanarCurve(BoundaryManifold):
    """Closed boundary curve of a planar domain, given with two derivatives.

    The curve is stored as supplied; signs are normalized internally so that
    curvature and normals follow the inward-normal convention (unit disk has
    curvature +1 and volume element 1 - t at inward offset t).
    """

    ndim = 2

    def __init__(self, gamma, dgamma, d2gamma, period=2.0 * math.pi, name="curve",
                 orientation=1):
        self.gamma = gamma
        self.dgamma = dgamma
        self.d2gamma = d2gamma
        self.period = float(period)
        self.name = name

        t = np.linspace(0.0, self.period, _DENSE + 1)
        pts = np.array([gamma(tt) for tt in t])
        dpts = np.array([dgamma(tt) for tt in t])
        speed = np.hypot(dpts[:, 0], dpts[:, 1])
        if speed.min() < 1e-12:
            raise ValueError("boundary parametrization is not an immersion")
        # positive shoelace area means counterclockwise; orientation=-1 flips
        # the normal convention (and, coherently, every curvature sign)
        area2 = np.trapezoid(pts[:, 0] * dpts[:, 1] - pts[:, 1] * dpts[:, 0], t)
        self.orientation = (1.0 if area2 > 0 else -1.0) * float(orientation)

        # cumulative arclength table and its inverse (spline antiderivative of
        # the speed keeps the reconstructed ds/dt accurate to O(Δt^4))
        s = CubicSpline(t, speed).antiderivative()(t)
        self.perimeter = float(s[-1])
        self._s_of_t = CubicSpline(t, s)
        self._t_of_s = CubicSpline(s, t)
        self._dense_t = t
        self._dense_pts = pts
        ddpts = np.array([d2gamma(tt) for tt in t])
        kap = self.orientation * (
            dpts[:, 0] * ddpts[:, 1] - dpts[:, 1] * ddpts[:, 0]
        ) / speed**3
        kap[-1] = kap[0]
        self._kappa_of_s = CubicSpline(s, kap, bc_type="periodic")

    # --- local frame ------------------------------------------------------

    def boundary_point(self, param):
        return np.asarray(self.gamma(param), dtype=float)

    def unit_tangent(self, param):
        d = np.asarray(self.dgamma(param), dtype=float)
        return d / np.hypot(d[0], d[1])

    def inward_normal(self, param):
        tx, ty = self.unit_tangent(param)
        return self.orientation * np.array([-ty, tx])

    def curvature(self, param):
        """Signed curvature in the inward-normal convention (disk: +1)."""
        d = np.asarray(self.dgamma(param), dtype=float)
        dd = np.asarray(self.d2gamma(param), dtype=float)
        sp = np.hypot(d[..., 0], d[..., 1]) if d.ndim else np.hypot(d[0], d[1])
        return self.orientation * (d[0] * dd[1] - d[1] * dd[0]) / sp**3

    def mean_curvature(self, param) -> float:
        return float(self.curvature(param))

    def curvature_at_arclength(self, s):
        """Vectorized signed curvature as a function of arclength (spline table)."""
        return self._kappa_of_s(np.asarray(s, dtype=float) % self.perimeter)

    def reach(self) -> float:
        kmax = max(self.curvature(tt) for tt in np.linspace(0, self.period, 720, endpoint=False))
        return 1.0 / kmax if kmax > 0 else math.inf

    # --- arclength travel ---------------------------------------------------

    def arclength_from(self, param) -> float:
        return float(self._s_of_t(param % self.period))

    def param_at_arclength(self, s) -> float:
        return float(self._t_of_s(s % self.perimeter))

    def arclength_between(self, t0, t1) -> float:
        """Signed arclength from t0 to t1 along increasing parameter."""
        val, _ = quad(lambda tt: np.hypot(*self.dgamma(tt)), t0, t1, limit=200)
        return val

    def exp(self, param, y):
        """Travel signed arclength y (scalar or length-1 vector) along the boundary."""
        y = float(np.asarray(y).reshape(-1)[0]) if np.ndim(y) else float(y)
        s = self.arclength_from(param) + self.orientation * y
        return self.param_at_arclength(s)

    def log(self, base_param, target_param):
        """Signed arclength coordinate of the target in the frame at the base."""
        ds = self._s_of_t(target_param % self.period) - self._s_of_t(base_param % self.period)
        half = 0.5 * self.perimeter
        ds = (ds + half) % self.perimeter - half
        return np.array([self.orientation * float(ds)])

    # --- ambient queries ------------------------------------------------------

    def closest_boundary_param(self, x):
        """Parameter of the closest boundary point, via dense seed + Newton."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        d2 = ((pts[:, None, :] - self._dense_pts[None, :-1, :]) ** 2).sum(axis=2)
        t = self._dense_t[np.argmin(d2, axis=1)].astype(float)
        for _ in range(6):
            g = np.array([self.gamma(tt) for tt in t])
            dg = np.array([self.dgamma(tt) for tt in t])
            ddg = np.array([self.d2gamma(tt) for tt in t])
            diff = pts - g
            num = (diff * dg).sum(axis=1)
            den = (diff * ddg).sum(axis=1) - (dg * dg).sum(axis=1)
            step = num / den
            t = t - np.clip(step, -0.1, 0.1)
        t = t % self.period
        return float(t[0]) if single else t

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        t = self.closest_boundary_param(x)
        nu = self.inward_normal(t)
        return float(nu @ (x - self.boundary_point(t))) > 0.0


class SurfaceOfRevolution(BoundaryManifold):
    """Boundary surface of a solid of revolution about the z-axis.

    The profile curve t -> (rho(t), zeta(t)), rho > 0, is revolved; boundary
    parameters are (t, phi).  Geodesics of the induced metric are integrated
    with a fixed-step classical Runge-Kutta scheme, together with parallel
    transport of the reference frame.
    """

    ndim = 3

    def __init__(self, rho, drho, d2rho, zeta, dzeta, d2zeta, t_range, name="revolved"):
        self.rho, self.drho, self.d2rho = rho, drho, d2rho
        self.zeta, self.dzeta, self.d2zeta = zeta, dzeta, d2zeta
        self.t_min, self.t_max = map(float, t_range)
        self.name = name

    # --- embedding ----------------------------------------------------------

    def boundary_point(self, param):
        t, phi = param
        return np.array([self.rho(t) * math.cos(phi), self.rho(t) * math.sin(phi), self.zeta(t)])

    def _jacobian(self, param):
        t, phi = param
        c, s = math.cos(phi), math.sin(phi)
        dr, dz = self.drho(t), self.dzeta(t)
        r = self.rho(t)
        d_t = np.array([dr * c, dr * s, dz])
        d_phi = np.array([-r * s, r * c, 0.0])
        return d_t, d_phi

    def inward_normal(self, param):
        d_t, d_phi = self._jacobian(param)
        nu = np.cross(d_t, d_phi)
        nu /= np.linalg.norm(nu)
        # orient into the solid: move slightly along nu and demand smaller radius
        # than the local profile (works for star-shaped solids about the axis)
        x = self.boundary_point(param)
        probe = x + 1e-6 * nu
        if np.linalg.norm(probe) > np.linalg.norm(x):
            nu = -nu
        return nu

    # --- induced metric helpers ----------------------------------------------

    def _metric_coeffs(self, t):
        e = self.drho(t) ** 2 + self.dzeta(t) ** 2
        g = self.rho(t) ** 2
        de = 2.0 * (self.drho(t) * self.d2rho(t) + self.dzeta(t) * self.d2zeta(t))
        dg = 2.0 * self.rho(t) * self.drho(t)
        return e, g, de, dg

    def _geodesic_rhs(self, state):
        t, phi, vt, vphi = state
        e, g, de, dg = self._metric_coeffs(t)
        at = -(0.5 * de / e) * vt * vt + (0.5 * dg / e) * vphi * vphi
        aphi = -(dg / g) * vt * vphi
        return np.array([vt, vphi, at, aphi])

    def _transport_rhs(self, state, w):
        t, phi, vt, vphi = state
        e, g, de, dg = self._metric_coeffs(t)
        wt, wphi = w
        # Christoffels of diag(E(t), G(t))
        dwt = -(0.5 * de / e) * vt * wt + (0.5 * dg / e) * vphi * wphi
        dwphi = -(0.5 * dg / g) * (vt * wphi + vphi * wt)
        return np.array([dwt, dwphi])

    def frame(self, param):
        """Orthonormal frame (e_meridian, e_parallel) of the tangent plane."""
        t, _ = param
        e, g, _, _ = self._metric_coeffs(t)
        d_t, d_phi = self._jacobian(param)
        return d_t / math.sqrt(e), d_phi / math.sqrt(g)

    def exp(self, param, y, return_frame=False):
        """Geodesic travel by the tangent vector y (components in the orthonormal frame)."""
        y = np.asarray(y, dtype=float)
        length = float(np.hypot(y[0], y[1]))
        t0, phi0 = param
        e, g, _, _ = self._metric_coeffs(t0)
        state = np.array([t0, phi0, y[0] / math.sqrt(e), y[1] / math.sqrt(g)])
        # frame vectors carried along by parallel transport (coordinates basis)
        w1 = np.array([1.0 / math.sqrt(e), 0.0])
        w2 = np.array([0.0, 1.0 / math.sqrt(g)])
        if length == 0.0:
            if return_frame:
                return (t0, phi0), (w1, w2)
            return (t0, phi0)
        nsteps = max(64, int(math.ceil(length * 2000.0)))
        h = 1.0 / nsteps
        for _ in range(nsteps):
            k1 = self._geodesic_rhs(state)
            l1a = self._transport_rhs(state, w1)
            l1b = self._transport_rhs(state, w2)
            k2 = self._geodesic_rhs(state + 0.5 * h * k1)
            l2a = self._transport_rhs(state + 0.5 * h * k1, w1 + 0.5 * h * l1a)
            l2b = self._transport_rhs(state + 0.5 * h * k1, w2 + 0.5 * h * l1b)
            k3 = self._geodesic_rhs(state + 0.5 * h * k2)
            l3a = self._transport_rhs(state + 0.5 * h * k2, w1 + 0.5 * h * l2a)
            l3b = self._transport_rhs(state + 0.5 * h * k2, w2 + 0.5 * h * l2b)
            k4 = self._geodesic_rhs(state + h * k3)
            l4a = self._transport_rhs(state + h * k3, w1 + h * l3a)
            l4b = self._transport_rhs(state + h * k3, w2 + h * l3b)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            w1 = w1 + (h / 6.0) * (l1a + 2 * l2a + 2 * l3a + l4a)
            w2 = w2 + (h / 6.0) * (l1b + 2 * l2b + 2 * l3b + l4b)
        out = (float(state[0]), float(state[1]))
        if return_frame:
            return out, (w1, w2)
        return out

    def log(self, base_param, target_param, tol=1e-11):
        """Tangent vector y with exp(base, y) = target, by Gauss-Newton shooting."""
        target = self.boundary_point(target_param)
        base = self.boundary_point(base_param)
        e1, e2 = self.frame(base_param)
        chord = target - base
        y = np.array([chord @ e1, chord @ e2])
        for _ in range(40):
            here = self.boundary_point(self.exp(base_param, y))
            res = here - target
            if np.linalg.norm(res) < tol:
                break
            h = 1e-6 * (1.0 + np.linalg.norm(y))
            jac = np.empty((3, 2))
            for j in range(2):
                dy = y.copy()
                dy[j] += h
                jac[:, j] = (self.boundary_point(self.exp(base_param, dy)) - here) / h
            step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
            y = y + step
        else:
            raise OutOfChart("geodesic shooting for the boundary log map did not converge")
        return y

    def closest_boundary_param(self, x):
        x = np.asarray(x, dtype=float)
        phi = math.atan2(x[1], x[0])
        rad = math.hypot(x[0], x[1])
        # 1-D problem along the meridian
        ts = np.linspace(self.t_min, self.t_max, 2049)
        d2 = (np.array([self.rho(t) for t in ts]) - rad) ** 2 + (
            np.array([self.zeta(t) for t in ts]) - x[2]
        ) ** 2
        t = float(ts[np.argmin(d2)])
        for _ in range(60):
            dr, dz = self.drho(t), self.dzeta(t)
            ddr, ddz = self.d2rho(t), self.d2zeta(t)
            fr, fz = self.rho(t) - rad, self.zeta(t) - x[2]
            g1 = fr * dr + fz * dz
            g2 = dr * dr + dz * dz + fr * ddr + fz * ddz
            step = g1 / g2
            t_new = min(max(t - step, self.t_min), self.t_max)
            if abs(t_new - t) < 1e-14:
                t = t_new
                break
            t = t_new
        return (t, phi)

    def contains(self, x) -> bool:
        param = self.closest_boundary_param(x)
        nu = self.inward_normal(param)
        return float(nu @ (np.asarray(x, dtype=float) - self.boundary_point(param))) > 0.0

    def mean_curvature(self, param) -> float:
        return second_fundamental_form(self, param).H

    def reach(self) -> float:
        ts = np.linspace(self.t_min + 1e-3, self.t_max - 1e-3, 256)
        kmax = 0.0
        for t in ts:
            rep = second_fundamental_form(self, (t, 0.0), want_gradient=False)
            kmax = max(kmax, float(np.max(np.linalg.eigvalsh(rep.h))))
        return 1.0 / kmax if kmax > 0 else math.inf


# --- constructors -------------------------------------------------------------


def ellipse(a: float, b: float) -> PlanarCurve:
    return PlanarCurve(
        lambda t: np.array([a * math.cos(t), b * math.sin(t)]),
        lambda t: np.array([-a * math.sin(t), b * math.cos(t)]),
        lambda t: np.array([-a * math.cos(t), -b * math.sin(t)]),
        name=f"ellipse:{a},{b}",
    )


def disk(radius: float = 1.0) -> PlanarCurve:
    return ellipse(radius, radius)


def ball(radius: float = 1.0) -> SurfaceOfRevolution:
    return SurfaceOfRevolution(
        rho=lambda t: radius * math.sin(t),
        drho=lambda t: radius * math.cos(t),
        d2rho=lambda t: -radius * math.sin(t),
        zeta=lambda t: radius * math.cos(t),
        dzeta=lambda t: -radius * math.sin(t),
        d2zeta=lambda t: -radius * math.cos(t),
        t_range=(0.0, math.pi),
        name=f"ball:{radius}",
    )


def manifold_from_spec(spec) -> BoundaryManifold:
    """Build a manifold from 'ellipse:a,b' / 'disk:r' / 'ball:r' or a JSON dict.

    The optional JSON field ``orientation`` (+1 default, -1 reversed) flips
    the inward-normal convention of planar curves.
    """
    if isinstance(spec, str):
        kind, _, rest = spec.partition(":")
        params = [float(x) for x in rest.split(",")] if rest else []
        spec = {"kind": kind, "params": params}
    kind = spec["kind"]
    params = spec.get("params", [])
    orientation = int(spec.get("orientation", 1))
    m = None
    if kind == "ellipse":
        m = ellipse(*params)
    elif kind == "disk":
        m = disk(*(params or [1.0]))
    elif kind == "ball":
        m = ball(*(params or [1.0]))
    else:
        raise ValueError(f"unknown manifold kind {kind!r}")
    if orientation == -1 and isinstance(m, PlanarCurve):
        m = PlanarCurve(
            m.gamma, m.dgamma, m.d2gamma, period=m.period, name=m.name, orientation=-1
        )
    return m


# --- Fermi charts ---------------------------------------------------------------


@dataclass
class FermiChart:
    """Boundary-adapted chart at xi: tangential geodesic travel plus normal offset."""

    manifold: BoundaryManifold
    xi: object  # boundary parameter
    R_chart: float = None

    def __post_init__(self):
        if self.R_chart is None:
            m = self.manifold
            scale = m.perimeter / 4.0 if isinstance(m, PlanarCurve) else 1.0
            self.R_chart = min(0.9 * m.reach(), scale)

    def _map(self, ybar, y_n):
        """Chart map, defined for |y_n| < R_chart (negative offsets extend outward)."""
        ybar = np.atleast_1d(np.asarray(ybar, dtype=float))
        foot = self.manifold.exp(self.xi, ybar)
        nu = self.manifold.inward_normal(foot)
        return self.manifold.boundary_point(foot) + float(y_n) * nu

    def map(self, ybar, y_n):
        ybar = np.atleast_1d(np.asarray(ybar, dtype=float))
        if y_n < 0.0:
            raise OutOfChart("normal coordinate must be nonnegative")
        if math.hypot(np.linalg.norm(ybar), y_n) >= self.R_chart:
            raise OutOfChart(
                f"point at radius {math.hypot(np.linalg.norm(ybar), y_n):.3f} "
                f"outside chart radius {self.R_chart:.3f}"
            )
        return self._map(ybar, y_n)

    def metric(self, ybar, y_n):
        """Pullback metric and sqrt(det) by central differences of the chart map."""
        n = self.manifold.ndim
        y = np.concatenate([np.atleast_1d(np.asarray(ybar, dtype=float)), [float(y_n)]])
        if np.linalg.norm(y) >= self.R_chart:
            raise OutOfChart("metric requested outside the chart")
        # geodesic-flow evaluations carry ~1e-14 roundoff, so flow-based charts
        # take a larger step; Richardson removes the h^2 truncation either way
        base_step = FD_STEP if isinstance(self.manifold, PlanarCurve) else 1e-3
        h = base_step * (1.0 + np.linalg.norm(y))

        def jacobian(hh):
            cols = []
            for i in range(n):
                e = np.zeros(n)
                e[i] = hh
                yp, ym = y + e, y - e
                cols.append(
                    (self._map(yp[:-1], yp[-1]) - self._map(ym[:-1], ym[-1])) / (2.0 * hh)
                )
            return np.column_stack(cols)

        # Richardson step-halving cancels the leading h^2 truncation
        jac = (4.0 * jacobian(0.5 * h) - jacobian(h)) / 3.0
        g = jac.T @ jac
        det = float(np.linalg.det(g))
        if det <= 0.0:
            raise SingularMetric(f"metric determinant {det:.3e} at y={y}")
        return g, math.sqrt(det)


@dataclass(frozen=True)
class CurvatureReport:
    h: np.ndarray          # second fundamental form, orthonormal frame, inward normal
    H: float               # mean curvature, trace(h)/(n-1)
    dH: np.ndarray         # tangential gradient of H along boundary geodesics


@dataclass(frozen=True)
class CriticalPoint:
    param: object
    location: np.ndarray
    value: float
    classification: str    # 'max' | 'min' | 'saddle' | 'degenerate'
    stable: bool

    def to_json_dict(self) -> dict:
        return {
            "param": list(np.atleast_1d(self.param).astype(float)),
            "location": [float(v) for v in self.location],
            "H": self.value,
            "classification": self.classification,
            "stable": self.stable,
        }


# --- module-level operations -------------------------------------------------


def boundary_exponential(m: BoundaryManifold, q, y):
    """Geodesic travel on the boundary from q by the tangent vector y."""
    inj = m.perimeter / 2.0 if isinstance(m, PlanarCurve) else math.pi
    if np.linalg.norm(np.atleast_1d(y)) >= inj:
        raise OutOfChart("tangent vector exceeds the injectivity estimate")
    if isinstance(m, PlanarCurve):
        return m.exp(q, np.atleast_1d(np.asarray(y, dtype=float))[0])
    return m.exp(q, y)


def fermi_map(chart: FermiChart, ybar, y_n):
    return chart.map(ybar, y_n)


def metric_in_fermi(chart: FermiChart, ybar, y_n):
    return chart.metric(ybar, y_n)


def second_fundamental_form(m: BoundaryManifold, xi, want_gradient: bool = True) -> CurvatureReport:
    """h in an orthonormal tangent frame, H = trace/(n-1), dH by centered differences."""
    if isinstance(m, PlanarCurve):
        kappa = float(m.curvature(xi))
        h = np.array([[kappa]])
        if want_gradient:
            ds = 1e-4
            dH = np.array(
                [(m.curvature(m.exp(xi, ds)) - m.curvature(m.exp(xi, -ds))) / (2.0 * ds)]
            )
        else:
            dH = np.array([0.0])
        return CurvatureReport(h=h, H=kappa, dH=dH)

    t, phi = xi
    nu = m.inward_normal(xi)
    d_t, d_phi = m._jacobian(xi)
    jac = np.column_stack([d_t, d_phi])
    gram = jac.T @ jac
    c, s = math.cos(phi), math.sin(phi)
    r, dr, ddr = m.rho(t), m.drho(t), m.d2rho(t)
    ddz = m.d2zeta(t)
    hess_tt = np.array([ddr * c, ddr * s, ddz])
    hess_tp = np.array([-dr * s, dr * c, 0.0])
    hess_pp = np.array([-r * c, -r * s, 0.0])
    h_coord = np.array(
        [[nu @ hess_tt, nu @ hess_tp], [nu @ hess_tp, nu @ hess_pp]]
    )
    # push to the orthonormal frame: h_frame = G^{-1/2} h_coord G^{-1/2}
    w, vecs = np.linalg.eigh(gram)
    g_inv_sqrt = vecs @ np.diag(w**-0.5) @ vecs.T
    h_frame = g_inv_sqrt @ h_coord @ g_inv_sqrt
    H = float(np.trace(h_frame)) / (m.ndim - 1)
    if want_gradient:
        ds = 1e-4
        dH = np.empty(2)
        for j, e in enumerate(np.eye(2)):
            Hp = second_fundamental_form(m, m.exp(xi, ds * e), want_gradient=False).H
            Hm = second_fundamental_form(m, m.exp(xi, -ds * e), want_gradient=False).H
            dH[j] = (Hp - Hm) / (2.0 * ds)
    else:
        dH = np.zeros(2)
    return CurvatureReport(h=h_frame, H=H, dH=dH)


def verify_metric_expansion(chart: FermiChart, scale: float = None) -> dict:
    """Residuals of the leading metric expansions at the chart origin.

    Checks: g(0) = Id; vanishing tangential-normal components at sampled
    points; first-order laws for g^{ij} and sqrt(g) with Richardson slopes;
    and the mixed derivative of sqrt(g) against -(n-1) dH.
    """
    m = chart.manifold
    n = m.ndim
    rep = second_fundamental_form(m, chart.xi)
    if scale is None:
        scale = 0.05 * chart.R_chart

    g0, _ = chart.metric(np.zeros(n - 1), 0.0)
    g0_res = float(np.max(np.abs(g0 - np.eye(n))))

    # sample points with positive normal coordinate
    rng_dirs = []
    base = np.ones(n) / math.sqrt(n)
    rng_dirs.append(base)
    if n == 3:
        rng_dirs.append(np.array([0.6, -0.4, 0.69282032]) / 1.0)

    g_in_res = 0.0
    ss = scale * 0.5 ** np.arange(4)
    g1_res = []
    g3_res = []
    for s in ss:
        worst1 = worst3 = 0.0
        for d in rng_dirs:
            y = s * d
            g, sqrtg = chart.metric(y[:-1], y[-1])
            ginv = np.linalg.inv(g)
            for i in range(n):
                g_in_res = max(g_in_res, abs(ginv[i, n - 1] - (1.0 if i == n - 1 else 0.0)))
            pred = np.eye(n - 1) + 2.0 * rep.h * y[-1]
            worst1 = max(worst1, float(np.max(np.abs(ginv[: n - 1, : n - 1] - pred))))
            pred3 = 1.0 - (n - 1) * rep.H * y[-1]
            worst3 = max(worst3, abs(sqrtg - pred3))
        g1_res.append(worst1)
        g3_res.append(worst3)

    # mixed derivative d^2 sqrt(g) / dy_n dy_i at 0 via the smooth extension,
    # Richardson-extrapolated to cancel the leading h^2 truncation
    h0 = 2e-3 * (1.0 + scale)
    mixed = np.empty(n - 1)
    for i in range(n - 1):
        def sqrtg_at(si, sn):
            y = np.zeros(n)
            y[i] = si
            y[-1] = sn
            jac_cols = []
            hh = FD_STEP
            for k in range(n):
                e = np.zeros(n)
                e[k] = hh
                yp, ym = y + e, y - e
                jac_cols.append(
                    (chart._map(yp[:-1], yp[-1]) - chart._map(ym[:-1], ym[-1])) / (2 * hh)
                )
            jac = np.column_stack(jac_cols)
            return math.sqrt(np.linalg.det(jac.T @ jac))

        def mixed_at(h):
            return (
                sqrtg_at(h, h) - sqrtg_at(-h, h) - sqrtg_at(h, -h) + sqrtg_at(-h, -h)
            ) / (4.0 * h * h)

        mixed[i] = (4.0 * mixed_at(0.5 * h0) - mixed_at(h0)) / 3.0

    eqG_res = float(np.max(np.abs(mixed + (n - 1) * rep.dH)))
    return {
        "g0_residual": g0_res,
        "g_in_max": float(g_in_res),
        "g1_residuals": g1_res,
        "g3_residuals": g3_res,
        "g1_slope": fitted_slope(ss, np.maximum(g1_res, 1e-16)),
        "g3_slope": fitted_slope(ss, np.maximum(g3_res, 1e-16)),
        "mixed_derivative": mixed.tolist(),
        "eqG_residual": eqG_res,
        "scales": ss.tolist(),
    }


def _chart_transition(m: BoundaryManifold, xi0, y, eta_bar):
    """Coordinates of exp_{xi0}(eta_bar) in the frame moved to exp_{xi0}(y)."""
    if isinstance(m, PlanarCurve):
        base = m.exp(xi0, float(np.atleast_1d(y)[0]))
        target = m.exp(xi0, float(np.atleast_1d(eta_bar)[0]))
        return m.log(base, target)
    base = m.exp(xi0, np.asarray(y, dtype=float))
    target = m.exp(xi0, np.asarray(eta_bar, dtype=float))
    v = m.log(base, target)
    # express in the frame parallel-transported from xi0 along the connecting geodesic
    _, (w1, w2) = m.exp(xi0, np.asarray(y, dtype=float), return_frame=True)
    e, g, _, _ = m._metric_coeffs(base[0])
    G = np.diag([e, g])
    frame = np.column_stack([w1, w2])
    coords = np.linalg.solve(frame.T @ G @ frame, frame.T @ G @ _coord_vector(m, base, v))
    return coords


def _coord_vector(m: SurfaceOfRevolution, param, y_frame):
    """Tangent vector in coordinate basis from orthonormal-frame components."""
    e, g, _, _ = m._metric_coeffs(param[0])
    return np.array([y_frame[0] / math.sqrt(e), y_frame[1] / math.sqrt(g)])


def transition_derivatives(m: BoundaryManifold, xi0, step: float = 1e-4) -> dict:
    """Finite-difference checks of the chart-transition identities at xi0.

    Verifies that the transition map reduces to the identity at zero shift,
    that its eta-derivative is the identity, its y-derivative at the origin is
    minus the identity, the mixed second derivative vanishes, and that the
    normal component of a Fermi-coordinate transition is shift-invariant.
    """
    k = m.ndim - 1
    ebar_samples = [0.3 * np.ones(k), -0.2 * np.ones(k), 0.05 * np.ones(k)]

    ident_res = 0.0
    deta_res = 0.0
    for eb in ebar_samples:
        val = _chart_transition(m, xi0, np.zeros(k), eb)
        ident_res = max(ident_res, float(np.max(np.abs(val - eb))))
        for j in range(k):
            e = np.zeros(k)
            e[j] = step
            dplus = _chart_transition(m, xi0, np.zeros(k), eb + e)
            dminus = _chart_transition(m, xi0, np.zeros(k), eb - e)
            d = (dplus - dminus) / (2.0 * step)
            target = np.zeros(k)
            target[j] = 1.0
            deta_res = max(deta_res, float(np.max(np.abs(d - target))))

    dy0 = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = step
        dplus = _chart_transition(m, xi0, e, np.zeros(k))
        dminus = _chart_transition(m, xi0, -e, np.zeros(k))
        dy0[:, j] = (dplus - dminus) / (2.0 * step)
    dy0_res = float(np.max(np.abs(dy0 + np.eye(k))))

    def mixed(hs):
        worst = 0.0
        for j in range(k):
            for hh in range(k):
                ey = np.zeros(k)
                ey[j] = hs
                ee = np.zeros(k)
                ee[hh] = hs
                val = (
                    _chart_transition(m, xi0, ey, ee)
                    - _chart_transition(m, xi0, ey, -ee)
                    - _chart_transition(m, xi0, -ey, ee)
                    + _chart_transition(m, xi0, -ey, -ee)
                ) / (4.0 * hs * hs)
                worst = max(worst, float(np.max(np.abs(val))))
        return worst

    mixed_vals = [mixed(s) for s in (8.0 * step, 4.0 * step)]

    # normal-coordinate invariance of the Fermi transition, via independent
    # closest-point projection
    chart0 = FermiChart(m, xi0)
    eta_n_res = 0.0
    eb = 0.2 * np.ones(k)
    yshift = 0.15 * np.ones(k)
    vals = []
    for eta_n in (0.05, 0.15):
        x = chart0._map(eb, eta_n)
        foot = m.closest_boundary_param(x)
        dist = float(np.linalg.norm(x - m.boundary_point(foot)))
        eta_n_res = max(eta_n_res, abs(dist - eta_n))
        if isinstance(m, PlanarCurve):
            base = m.exp(xi0, float(yshift[0]))
            vals.append(m.log(base, foot))
        else:
            vals.append(_chart_transition_log(m, xi0, yshift, foot))
    h_tangential_res = float(np.max(np.abs(vals[0] - vals[1])))

    return {
        "identity_residual": ident_res,
        "deta_residual": deta_res,
        "dy0_matrix": dy0,
        "dy0_residual": dy0_res,
        "mixed_values": mixed_vals,
        "normal_distance_residual": eta_n_res,
        "normal_invariance_residual": h_tangential_res,
    }


def _chart_transition_log(m: SurfaceOfRevolution, xi0, y, target_param):
    base = m.exp(xi0, np.asarray(y, dtype=float))
    v = m.log(base, target_param)
    _, (w1, w2) = m.exp(xi0, np.asarray(y, dtype=float), return_frame=True)
    e, g, _, _ = m._metric_coeffs(base[0])
    G = np.diag([e, g])
    frame = np.column_stack([w1, w2])
    return np.linalg.solve(frame.T @ G @ frame, frame.T @ G @ _coord_vector(m, base, v))


def find_critical_points(
    m: BoundaryManifold,
    grid: int = 720,
    flat_tol: float = 1e-8,
) -> list[CriticalPoint]:
    """Scan H along the boundary, refine sign changes of dH, classify by H''.

    Raises DegenerateLandscape when the curvature range is below tolerance
    (constant-curvature boundaries have no isolated critical points).
    """
    if isinstance(m, PlanarCurve):
        ts = np.linspace(0.0, m.period, grid, endpoint=False)
        hvals = np.array([m.curvature(t) for t in ts])
        param_of = lambda t: t
        h_of = lambda t: float(m.curvature(t))
        period = m.period
    else:
        pad = 1e-2 * (m.t_max - m.t_min)
        ts = np.linspace(m.t_min + pad, m.t_max - pad, grid)
        hvals = np.array([second_fundamental_form(m, (t, 0.0), want_gradient=False).H for t in ts])
        param_of = lambda t: (t, 0.0)
        h_of = lambda t: second_fundamental_form(m, (t, 0.0), want_gradient=False).H
        period = None

    h_range = float(hvals.max() - hvals.min())
    if h_range <= flat_tol * (1.0 + float(np.max(np.abs(hvals)))):
        raise DegenerateLandscape(
            f"mean curvature spans only {h_range:.2e}; critical points are not isolated"
        )

    crit_tol = 1e-8 * (h_range + 1.0)
    ds = 1e-6

    def dh(t):
        if period is not None:
            return (h_of((t + ds) % period) - h_of((t - ds) % period)) / (2.0 * ds)
        return (h_of(t + ds) - h_of(t - ds)) / (2.0 * ds)

    found = []
    dh_grid = np.array([dh(t) for t in ts])
    m_count = grid if period is not None else grid - 1
    for i in range(m_count):
        j = (i + 1) % grid
        a, b = dh_grid[i], dh_grid[j]
        if a == 0.0 or a * b < 0.0:
            ta = ts[i]
            tb = ts[j] if j != 0 else (ts[0] + period)
            fa = a
            for _ in range(80):
                tm = 0.5 * (ta + tb)
                fm = dh(tm)
                if fa * fm <= 0.0:
                    tb = tm
                else:
                    ta, fa = tm, fm
            t_star = 0.5 * (ta + tb)
            if period is not None:
                t_star %= period
            if abs(dh(t_star)) > crit_tol * 1e3:
                continue
            dd = (h_of(t_star + 1e-4) - 2.0 * h_of(t_star) + h_of(t_star - 1e-4)) / 1e-8
            degenerate_tol = 1e-4 * (h_range + 1.0)
            if dd > degenerate_tol:
                cls = "min"
            elif dd < -degenerate_tol:
                cls = "max"
            else:
                cls = "degenerate"
            found.append(
                CriticalPoint(
                    param=param_of(t_star),
                    location=m.boundary_point(param_of(t_star)),
                    value=h_of(t_star),
                    classification=cls,
                    stable=cls in ("max", "min"),
                )
            )

    # de-duplicate near-coincident roots
    unique = []
    for cp in found:
        tval = cp.param if period is not None else cp.param[0]
        dup = False
        for other in unique:
            oval = other.param if period is not None else other.param[0]
            diff = abs(tval - oval)
            if period is not None:
                diff = min(diff, period - diff)
            if diff < 1e-6:
                dup = True
        if not dup:
            unique.append(cp)
    return unique
