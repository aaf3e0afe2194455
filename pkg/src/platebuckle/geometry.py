"""Star-shaped boundary curves, boundary quadrature, and perturbation fields.

Curves are smooth closed parameterizations p(theta), theta in [0, 2pi),
oriented counterclockwise, with the outward normal (y', -x')/|p'| and
curvature (x'y'' - y'x'')/|p'|^3.  Perturbation velocity fields v (and
their second-order correction w) are defined on the whole closure; only
their boundary traces enter the variational formulas, the interior values
matter when a perturbed domain is remeshed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

TAU = 2.0 * math.pi

__all__ = [
    "CurveError",
    "Curve",
    "make_disc",
    "make_ellipse",
    "make_fourier_domain",
    "make_normal_field",
    "make_translation_field",
    "PerturbationField",
    "project_volume_preserving",
    "map_domain",
    "volume",
    "interior_integral",
    "normal_derivative_check",
    "save_curve",
    "load_curve",
]


class CurveError(ValueError):
    """Invalid curve data (nonpositive radius, self-intersection, ...)."""


def _gauss_panels(n_panels, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, TAU, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    theta = (mid[:, None] + half * nodes[None, :]).ravel()
    w = np.tile(half * weights, n_panels)
    return theta, w


class Curve:
    """Base closed curve; subclasses supply point/d1/d2 in vectorized form."""

    kind = "base"

    def __init__(self):
        self._cache = {}

    # -- parameterization -------------------------------------------------

    def point(self, theta):
        raise NotImplementedError

    def d1(self, theta):
        raise NotImplementedError

    def d2(self, theta):
        raise NotImplementedError

    # -- derived quantities -----------------------------------------------

    def speed(self, theta):
        d = self.d1(theta)
        return np.hypot(d[..., 0], d[..., 1])

    def normal(self, theta):
        d = self.d1(theta)
        s = np.hypot(d[..., 0], d[..., 1])
        return np.stack([d[..., 1] / s, -d[..., 0] / s], axis=-1)

    def tangent(self, theta):
        d = self.d1(theta)
        s = np.hypot(d[..., 0], d[..., 1])
        return d / s[..., None]

    def curvature(self, theta):
        d1 = self.d1(theta)
        d2 = self.d2(theta)
        s = np.hypot(d1[..., 0], d1[..., 1])
        return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / s**3

    def quadrature(self, n_panels=256, order=8):
        """(theta, dS-weights): composite Gauss rule against arclength."""
        key = ("quad", n_panels, order)
        if key not in self._cache:
            theta, w = _gauss_panels(n_panels, order)
            self._cache[key] = (theta, w * self.speed(theta))
        return self._cache[key]

    def perimeter(self):
        if "perimeter" not in self._cache:
            _, ws = self.quadrature()
            self._cache["perimeter"] = float(ws.sum())
        return self._cache["perimeter"]

    def area(self):
        if "area" not in self._cache:
            theta, w = _gauss_panels(256, 8)
            p = self.point(theta)
            d = self.d1(theta)
            self._cache["area"] = float(
                0.5 * np.sum(w * (p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]))
            )
        return self._cache["area"]

    def max_curvature(self):
        if "max_curvature" not in self._cache:
            grid = np.linspace(0.0, TAU, 4096, endpoint=False)
            self._cache["max_curvature"] = float(np.abs(self.curvature(grid)).max())
        return self._cache["max_curvature"]

    def arclength_param(self, fractions):
        """Parameters theta at given fractions of total arclength from theta=0."""
        key = "arctable"
        if key not in self._cache:
            n = 4096
            nodes, weights = np.polynomial.legendre.leggauss(4)
            edges = np.linspace(0.0, TAU, n + 1)
            half = 0.5 * (edges[1] - edges[0])
            mids = 0.5 * (edges[:-1] + edges[1:])
            th = (mids[:, None] + half * nodes[None, :]).ravel()
            sp = self.speed(th).reshape(n, 4)
            seg = (half * weights[None, :] * sp).sum(axis=1)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            self._cache[key] = (edges, cum)
        edges, cum = self._cache[key]
        targets = np.asarray(fractions, dtype=float) * cum[-1]
        return np.interp(targets, cum, edges)

    def ray(self, phi):
        """Boundary hit of the ray from the origin at polar angle phi.

        Returns (rho, theta): distance to the boundary and the curve
        parameter of the hit point.  Needed by the star-shaped interior
        extension of normal perturbation fields.
        """
        raise CurveError(f"ray lookup is not available for kind={self.kind!r}")


class DiscCurve(Curve):
    kind = "disc"

    def __init__(self, radius):
        super().__init__()
        if radius <= 0.0:
            raise CurveError("disc radius must be positive")
        self.radius = float(radius)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([-np.cos(theta), -np.sin(theta)], axis=-1)

    def max_curvature(self):
        return 1.0 / self.radius

    def ray(self, phi):
        phi = np.mod(np.asarray(phi, dtype=float), TAU)
        return np.full_like(phi, self.radius), phi


class EllipseCurve(Curve):
    kind = "ellipse"

    def __init__(self, a, b):
        super().__init__()
        if a <= 0.0 or b <= 0.0:
            raise CurveError("ellipse semi-axes must be positive")
        self.a = float(a)
        self.b = float(b)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([self.a * np.cos(theta), self.b * np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.sin(theta), self.b * np.cos(theta)], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.cos(theta), -self.b * np.sin(theta)], axis=-1)

    def max_curvature(self):
        return max(self.a / self.b**2, self.b / self.a**2)

    def ray(self, phi):
        phi = np.asarray(phi, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        rho = 1.0 / np.sqrt((c / self.a) ** 2 + (s / self.b) ** 2)
        theta = np.mod(np.arctan2(s / self.b, c / self.a), TAU)
        return rho, theta


class FourierCurve(Curve):
    """r(theta) = r0 * (1 + sum a_k cos(k theta) + sum b_k sin(k theta))."""

    kind = "fourier"

    def __init__(self, cos_coeffs=(), sin_coeffs=(), r0=1.0):
        super().__init__()
        self.r0 = float(r0)
        self.cos_coeffs = tuple(float(c) for c in cos_coeffs)
        self.sin_coeffs = tuple(float(c) for c in sin_coeffs)
        if self.r0 <= 0.0:
            raise CurveError("r0 must be positive")
        grid = np.linspace(0.0, TAU, 4096, endpoint=False)
        r = self._radius(grid)
        if r.min() <= 1e-3 * self.r0:
            bad = grid[int(np.argmin(r))]
            raise CurveError(f"radius nonpositive near theta={bad:.3f}")

    def _radius(self, theta, deriv=0):
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, 1.0 if deriv == 0 else 0.0)
        for k, a in enumerate(self.cos_coeffs, start=1):
            if a == 0.0:
                continue
            if deriv == 0:
                out = out + a * np.cos(k * theta)
            elif deriv == 1:
                out = out - a * k * np.sin(k * theta)
            else:
                out = out - a * k * k * np.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            if b == 0.0:
                continue
            if deriv == 0:
                out = out + b * np.sin(k * theta)
            elif deriv == 1:
                out = out + b * k * np.cos(k * theta)
            else:
                out = out - b * k * k * np.sin(k * theta)
        return self.r0 * out

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        dr = self._radius(theta, 1)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([dr * c - r * s, dr * s + r * c], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        dr = self._radius(theta, 1)
        ddr = self._radius(theta, 2)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack(
            [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s], axis=-1
        )

    def ray(self, phi):
        phi = np.mod(np.asarray(phi, dtype=float), TAU)
        return self._radius(phi), phi


class MappedCurve(Curve):
    """Image of a base curve under x + t v(x) + (t^2/2) w(x).

    Parameter derivatives are taken by fourth-order central differences in
    theta; the map itself is exact at every queried parameter.
    """

    kind = "mapped"
    _H = 1e-3

    def __init__(self, base, field, t):
        super().__init__()
        self.base = base
        self.field = field
        self.t = float(t)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.base.point(theta)
        flat = p.reshape(-1, 2)
        out = flat + self.t * self.field.v(flat)
        if self.field.w is not None:
            out = out + 0.5 * self.t * self.t * self.field.w(flat)
        return out.reshape(p.shape)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        h = self._H
        return (
            -self.point(theta + 2 * h)
            + 8.0 * self.point(theta + h)
            - 8.0 * self.point(theta - h)
            + self.point(theta - 2 * h)
        ) / (12.0 * h)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        h = self._H
        return (
            -self.point(theta + 2 * h)
            + 16.0 * self.point(theta + h)
            - 30.0 * self.point(theta)
            + 16.0 * self.point(theta - h)
            - self.point(theta - 2 * h)
        ) / (12.0 * h * h)


def make_disc(radius=1.0):
    return DiscCurve(radius)


def make_ellipse(a, b):
    return EllipseCurve(a, b)


def make_fourier_domain(cos_coeffs=(), sin_coeffs=(), r0=1.0):
    return FourierCurve(cos_coeffs, sin_coeffs, r0)


# ---------------------------------------------------------------------------
# perturbation fields


def _smoothstep(q):
    q = np.clip(q, 0.0, 1.0)
    return q * q * q * (10.0 + q * (-15.0 + 6.0 * q))


def _zero_field(pts):
    pts = np.asarray(pts, dtype=float)
    return np.zeros_like(pts)


@dataclass
class PerturbationField:
    """Velocity field v plus optional second-order correction w.

    `v` and `w` map an (N, 2) point array to an (N, 2) vector array and are
    defined on (a neighborhood of) the domain closure.
    """

    v: callable
    w: callable = None
    kind: str = "custom"
    volume_preserving: bool = False
    meta: dict = dc_field(default_factory=dict)

    def boundary_normal_component(self, curve, theta):
        p = curve.point(np.asarray(theta, dtype=float))
        return np.einsum("ij,ij->i", self.v(p), curve.normal(theta))


def _star_extension(curve, g):
    """v(x) = m(s) * s * g(theta) * nu(theta) along the ray through x.

    s is the relative radial position (1 on the boundary) and m a C^2
    cutoff that vanishes near the origin and is identically 1 for
    s >= 1/2, so the extension is smooth across the center.
    """

    def v(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        phi = np.arctan2(y, x)
        rho, theta = curve.ray(phi)
        s = np.hypot(x, y) / rho
        amp = _smoothstep(s / 0.5) * s
        gg = g(theta) if callable(g) else np.full_like(theta, float(g))
        return (amp * gg)[:, None] * curve.normal(theta)

    return v


def make_normal_field(curve, g, kind="normal"):
    """Field with boundary trace g(theta) * nu(theta), star-extended inside."""
    return PerturbationField(v=_star_extension(curve, g), w=_zero_field, kind=kind)


def make_translation_field(axis):
    """Constant unit translation; volume-preserving identically."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    e = np.zeros(2)
    e[axis] = 1.0

    def v(pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(e, pts.shape).copy()

    return PerturbationField(
        v=v, w=_zero_field, kind=f"translation{axis}", volume_preserving=True
    )


def _fd_jacobian(vfun, pts, h=1e-5):
    """D v at pts by central differences; J[n, i, j] = d v_j / d x_i."""
    pts = np.asarray(pts, dtype=float)
    out = np.empty((len(pts), 2, 2))
    for i in range(2):
        dp = np.zeros_like(pts)
        dp[:, i] = h
        out[:, i, :] = (vfun(pts + dp) - vfun(pts - dp)) / (2.0 * h)
    return out


def project_volume_preserving(curve, field):
    """Remove the mean normal flux from v and fit w so the enclosed area is
    stationary to second order.

    The first-order condition is mean(v . nu) = 0; the second-order one
    couples (v . nu) div v, v . Dv . nu and the flux of w, and is enforced
    by the mean of w . nu alone (w = const * nu).
    """
    theta, ws = curve.quadrature()
    surface = ws.sum()
    pts = curve.point(theta)
    nu = curve.normal(theta)
    vb = field.v(pts)
    cbar = float(np.sum(np.einsum("ij,ij->i", vb, nu) * ws) / surface)

    unit = _star_extension(curve, 1.0)
    if cbar == 0.0:
        v_new = field.v
    else:
        def v_new(p, _v=field.v, _u=unit, _c=cbar):
            return _v(p) - _c * _u(p)

    jac = _fd_jacobian(v_new, pts)
    vb2 = v_new(pts)
    vdotn = np.einsum("ij,ij->i", vb2, nu)
    div = jac[:, 0, 0] + jac[:, 1, 1]
    v_dv_n = np.einsum("ni,nij,nj->n", vb2, jac, nu)
    i1 = float(np.sum(vdotn * div * ws))
    i2 = float(np.sum(v_dv_n * ws))
    w_old = field.w if field.w is not None else _zero_field
    i3 = float(np.sum(np.einsum("ij,ij->i", w_old(pts), nu) * ws))
    cw = (-i1 + i2 - i3) / surface

    unit_w = _star_extension(curve, cw)

    def w_new(p, _w=w_old, _u=unit_w):
        return _w(p) + _u(p)

    return PerturbationField(
        v=v_new,
        w=w_new,
        kind=field.kind + "+volproj",
        volume_preserving=True,
        meta={"mean_removed": cbar, "w_normal_constant": cw},
    )


# ---------------------------------------------------------------------------
# domain mapping


def _polygon_self_intersects(pts):
    """True if the closed polyline pts self-intersects (O(N^2), vectorized)."""
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    d = b - a
    # segment i x segment j cross tests for all pairs
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    dx, dy = d[:, 0][:, None], d[:, 1][:, None]
    bx, by = a[:, 0][None, :], a[:, 1][None, :]
    ex, ey = d[:, 0][None, :], d[:, 1][None, :]
    denom = dx * ey - dy * ex
    rx, ry = bx - ax, by - ay
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (rx * ey - ry * ex) / denom
        t = (rx * dy - ry * dx) / denom
    hit = (denom != 0.0) & (s > 1e-12) & (s < 1 - 1e-12) & (t > 1e-12) & (t < 1 - 1e-12)
    idx = np.arange(n)
    adj = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (
        np.abs(idx[:, None] - idx[None, :]) == n - 1
    )
    return bool(np.any(hit & ~adj))


def map_domain(curve, field, t, validate=True):
    """Curve of the perturbed domain Omega_t under x + t v + (t^2/2) w."""
    if t == 0.0:
        return curve
    mapped = MappedCurve(curve, field, t)
    if validate:
        grid = np.linspace(0.0, TAU, 256, endpoint=False)
        sp = mapped.speed(grid)
        if sp.min() <= 1e-3 * np.median(sp):
            raise CurveError(f"mapped curve degenerates (cusp) at t={t}")
        if _polygon_self_intersects(mapped.point(grid)):
            raise CurveError(f"mapped curve self-intersects at t={t}")
    return mapped


def volume(curve):
    """Enclosed area (the 2D volume)."""
    return curve.area()


def interior_integral(curve, f, n_radial=48, n_angular=512):
    """int_Omega f dx for star-shaped curves, by Gauss in (s, phi).

    f maps an (N, 2) array to scalars.  Used for cross-checks such as the
    divergence theorem; production integrals go through mesh quadrature.
    """
    gs, gw = np.polynomial.legendre.leggauss(n_radial)
    s = 0.5 * (gs + 1.0)
    ws = 0.5 * gw
    phi = np.linspace(0.0, TAU, n_angular, endpoint=False)
    dphi = TAU / n_angular
    rho, _ = curve.ray(phi)
    # x = s*rho*phi_hat; dx = rho^2 s ds dphi
    pts = np.empty((n_radial * n_angular, 2))
    c, si = np.cos(phi), np.sin(phi)
    rr = s[:, None] * rho[None, :]
    pts[:, 0] = (rr * c[None, :]).ravel()
    pts[:, 1] = (rr * si[None, :]).ravel()
    vals = np.asarray(f(pts)).reshape(n_radial, n_angular)
    return float(np.sum(vals * (s * ws)[:, None] * (rho**2)[None, :] * dphi))


def _normal_on_normal_line(mapped, base, thetas):
    """Normal of the mapped curve where it crosses the base normal lines.

    The first variation of the normal is taken in the normal-graph
    parameterization of the perturbed boundary over the base boundary, so
    the mapped curve (materially parameterized) must be re-sampled at the
    parameter where it meets the line p(theta) + span{nu(theta)}.
    """
    p0 = base.point(thetas)
    tau = base.tangent(thetas)
    phi = thetas.copy()
    for _ in range(12):
        g = np.einsum("ij,ij->i", mapped.point(phi) - p0, tau)
        dg = np.einsum("ij,ij->i", mapped.d1(phi), tau)
        delta = g / dg
        phi = phi - delta
        if np.abs(delta).max() < 1e-13:
            break
    return mapped.normal(phi)


def normal_derivative_check(curve, field, thetas, step=1e-4):
    """Formula vs finite differences for the normal's first variation.

    Returns (formula, fd): the formula is -grad_tangential(v . nu); the
    finite difference samples the mapped curves' normals on the base normal
    lines, nu' ~ (nu_{+h} - nu_{-h}) / (2h).
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))

    def vdotn(th):
        p = curve.point(th)
        return np.einsum("ij,ij->i", field.v(p), curve.normal(th))

    h = 1e-3
    dfd = (
        -vdotn(thetas + 2 * h)
        + 8.0 * vdotn(thetas + h)
        - 8.0 * vdotn(thetas - h)
        + vdotn(thetas - 2 * h)
    ) / (12.0 * h)
    formula = -(dfd / curve.speed(thetas))[:, None] * curve.tangent(thetas)

    plus = _normal_on_normal_line(map_domain(curve, field, step, validate=False), curve, thetas)
    minus = _normal_on_normal_line(map_domain(curve, field, -step, validate=False), curve, thetas)
    fd = (plus - minus) / (2.0 * step)
    return formula, fd


# ---------------------------------------------------------------------------
# curve file format: one key per line


def save_curve(curve, path):
    lines = [f"kind={curve.kind}"]
    if curve.kind == "disc":
        lines.append(f"radius={curve.radius!r}")
    elif curve.kind == "ellipse":
        lines.append(f"a={curve.a!r}")
        lines.append(f"b={curve.b!r}")
    elif curve.kind == "fourier":
        lines.append(f"r0={curve.r0!r}")
        lines.append("cos=" + ",".join(repr(c) for c in curve.cos_coeffs))
        lines.append("sin=" + ",".join(repr(c) for c in curve.sin_coeffs))
    else:
        raise CurveError(f"kind {curve.kind!r} has no file representation")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def curve_from_dict(data):
    kind = data.get("kind")
    if kind == "disc":
        return make_disc(float(data.get("radius", 1.0)))
    if kind == "ellipse":
        return make_ellipse(float(data["a"]), float(data["b"]))
    if kind == "fourier":
        def parse(v):
            if isinstance(v, (list, tuple)):
                return tuple(float(c) for c in v)
            v = v.strip()
            return tuple(float(c) for c in v.split(",")) if v else ()
        return make_fourier_domain(
            parse(data.get("cos", "")), parse(data.get("sin", "")),
            float(data.get("r0", 1.0)),
        )
    raise CurveError(f"unknown curve kind {kind!r}")


def curve_to_dict(curve):
    if curve.kind == "disc":
        return {"kind": "disc", "radius": curve.radius}
    if curve.kind == "ellipse":
        return {"kind": "ellipse", "a": curve.a, "b": curve.b}
    if curve.kind == "fourier":
        return {
            "kind": "fourier",
            "r0": curve.r0,
            "cos": list(curve.cos_coeffs),
            "sin": list(curve.sin_coeffs),
        }
    raise CurveError(f"kind {curve.kind!r} has no dict representation")


def load_curve(path):
    data = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CurveError(f"malformed curve line: {line!r}")
            key, val = line.split("=", 1)
            data[key.strip()] = val.strip()
    return curve_from_dict(data)
