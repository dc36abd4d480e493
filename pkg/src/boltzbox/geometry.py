"""Bounded convex level-set domains, specular reflection, and back-time
bounce cycles.

A domain is Omega = { x : xi(x) < 0 } for a smooth strictly convex xi with
nonvanishing boundary gradient; the outward normal is grad xi / |grad xi|.
Backward exit times along straight rays are found by marching to bracket the
single interior-to-exterior crossing (convexity guarantees uniqueness), then
bisection plus a Newton polish.  Back-time specular cycles follow the
recursion

    t_{k+1} = t_k - t_b(x_k, v_k),  x_{k+1} = x_b(x_k, v_k),
    v_{k+1} = R_{x_{k+1}} v_k,

terminated at the first m with t_{m+1} <= 0 < t_m.  Near-tangential bounces
(|n . v| / |v| below eps_graze) are flagged rather than traced: transport
excludes those phase nodes, the numerical counterpart of dropping the
grazing set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TOL = 1e-10
EPS_GRAZE = 1e-8
BOUNCE_CAP = 10_000


class DegenerateBoundaryError(ValueError):
    """|grad xi| vanishes (below threshold) at a boundary query point."""


class GeometryInconsistencyError(RuntimeError):
    """A ray failed to exit the bounding box — impossible for a bounded
    domain, so it indicates a broken level-set evaluator."""


class BounceCapError(RuntimeError):
    """Cycle construction exceeded the hard bounce cap."""


@dataclass
class Domain:
    """Level-set domain with evaluator callbacks.

    xi, grad, hess evaluate the level set and its derivatives at (..., 3)
    point arrays.  bbox is ((xmin, ymin, zmin), (xmax, ymax, zmax)); axis,
    when present, is (x0, varpi) for a certified rotational symmetry.
    """

    name: str
    xi: object
    grad: object
    hess: object
    bbox: tuple
    c_xi: float = 0.0
    axis: tuple | None = None
    spatial_nodes: np.ndarray | None = None  # attached by the phase grid

    @property
    def diameter(self) -> float:
        lo, hi = np.asarray(self.bbox[0]), np.asarray(self.bbox[1])
        return float(np.linalg.norm(hi - lo))

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.xi(np.asarray(x, float)) < 0.0


def ball(radius: float = 1.0) -> Domain:
    r2 = radius * radius

    def xi(x):
        x = np.asarray(x, float)
        return np.sum(x * x, axis=-1) - r2

    def grad(x):
        return 2.0 * np.asarray(x, float)

    def hess(x):
        x = np.asarray(x, float)
        return np.broadcast_to(2.0 * np.eye(3), x.shape[:-1] + (3, 3)).copy()

    return Domain("ball", xi, grad, hess,
                  ((-radius,) * 3, (radius,) * 3), c_xi=2.0,
                  axis=(np.zeros(3), np.array([0.0, 0.0, 1.0])))


def ellipsoid(a: float, b: float, c: float) -> Domain:
    """xi = x1^2/a^2 + x2^2/b^2 + x3^2/c^2 - 1."""
    inv2 = np.array([1.0 / a ** 2, 1.0 / b ** 2, 1.0 / c ** 2])

    def xi(x):
        x = np.asarray(x, float)
        return np.sum(x * x * inv2, axis=-1) - 1.0

    def grad(x):
        return 2.0 * np.asarray(x, float) * inv2

    def hess(x):
        x = np.asarray(x, float)
        return np.broadcast_to(2.0 * np.diag(inv2),
                               x.shape[:-1] + (3, 3)).copy()

    # spheroids get the matching rotation axis
    axis = None
    if abs(b - c) < 1e-14:
        axis = (np.zeros(3), np.array([1.0, 0.0, 0.0]))
    elif abs(a - b) < 1e-14:
        axis = (np.zeros(3), np.array([0.0, 0.0, 1.0]))
    elif abs(a - c) < 1e-14:
        axis = (np.zeros(3), np.array([0.0, 1.0, 0.0]))
    return Domain("ellipsoid", xi, grad, hess,
                  ((-a, -b, -c), (a, b, c)), c_xi=float(2.0 * inv2.min()),
                  axis=axis)


def superquadric(p: int = 4, radius: float = 1.0) -> Domain:
    """xi = sum x_i^p - radius^p (even p).  Not strictly convex at the
    origin for p > 2 — the standard negative test for certify_convexity."""
    if p < 2 or p % 2 != 0:
        raise ValueError("superquadric exponent must be even and >= 2")
    rp = radius ** p

    def xi(x):
        x = np.asarray(x, float)
        return np.sum(x ** p, axis=-1) - rp

    def grad(x):
        return p * np.asarray(x, float) ** (p - 1)

    def hess(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        d = p * (p - 1) * x ** (p - 2)
        for i in range(3):
            out[..., i, i] = d[..., i]
        return out

    return Domain("superquadric", xi, grad, hess,
                  ((-radius,) * 3, (radius,) * 3), c_xi=0.0)


_SHAPES = {"ball": ball, "ellipsoid": ellipsoid, "superquadric": superquadric}


def make_domain(shape: str, **params) -> Domain:
    if shape not in _SHAPES:
        raise ValueError(f"unknown shape {shape!r}; have {sorted(_SHAPES)}")
    return _SHAPES[shape](**params)


def normal(domain: Domain, x: np.ndarray) -> np.ndarray:
    """Outward unit normal grad xi / |grad xi| at boundary points."""
    g = np.asarray(domain.grad(x), float)
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(nrm < 1e-12):
        raise DegenerateBoundaryError("vanishing level-set gradient")
    return g / nrm


def certify_convexity(domain: Domain, samples: int = 1000,
                      seed: int = 0) -> float:
    """Min over sampled closure points of the smallest Hessian eigenvalue;
    a positive value certifies strict convexity at sample resolution."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.asarray(domain.bbox[0])
    hi = np.asarray(domain.bbox[1])
    pts = [np.zeros(3)]
    while len(pts) < samples:
        cand = rng.uniform(lo, hi, size=(4 * samples, 3))
        inside = cand[domain.xi(cand) <= 0.0]
        pts.extend(inside[: samples - len(pts)])
    pts = np.asarray(pts)
    h = domain.hess(pts)
    eig = np.linalg.eigvalsh(h)
    return float(eig[..., 0].min())


def boundary_samples(domain: Domain, count: int, seed: int = 0) -> np.ndarray:
    """Boundary points found by shooting rays from the origin-side interior
    outward in random directions (convexity: exactly one crossing)."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # interior anchor: the bbox center must be inside a convex domain built
    # here; fall back to origin
    anchor = 0.5 * (np.asarray(domain.bbox[0]) + np.asarray(domain.bbox[1]))
    if not domain.contains(anchor):
        anchor = np.zeros(3)
    out = np.empty((count, 3))
    for i, d in enumerate(dirs):
        _, xb = backward_exit(domain, anchor, -d)
        out[i] = xb
    return out


def certify_axis(domain: Domain, x0: np.ndarray, varpi: np.ndarray,
                 samples: int = 200, seed: int = 0,
                 tol: float = 1e-9) -> tuple[bool, float]:
    """max over boundary samples of |((x - x0) x varpi) . n(x)|; certified
    True iff below tol."""
    varpi = np.asarray(varpi, float)
    if np.linalg.norm(varpi) == 0:
        raise ValueError("axis direction must be nonzero")
    pts = boundary_samples(domain, samples, seed)
    n = normal(domain, pts)
    lever = np.cross(pts - np.asarray(x0, float), varpi)
    resid = float(np.max(np.abs(np.sum(lever * n, axis=1))))
    return resid <= tol, resid


def backward_exit(domain: Domain, x: np.ndarray, v: np.ndarray,
                  tol: float = BOUNDARY_TOL) -> tuple[float, np.ndarray]:
    """Smallest t_b > 0 with x - t_b v on the boundary, plus the exit point.

    March with step diameter/(256 |v|) to bracket the sign change of
    s -> xi(x - s v), then bisect and Newton-polish.  Convexity means there
    is exactly one crossing, so the first bracket is the right one.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    speed = np.linalg.norm(v)
    if speed == 0:
        raise ValueError("zero velocity has no exit time")
    xi0 = float(domain.xi(x))
    if xi0 >= 0 and abs(xi0) > tol:
        raise ValueError("backward_exit needs an interior or boundary point")

    step = domain.diameter / (256.0 * speed)
    s_max = 1.5 * domain.diameter / speed

    def phi(s):
        return float(domain.xi(x - s * v))

    lo = 0.0
    if xi0 >= 0.0:
        # boundary start (a bounce point): the backward ray dips inside
        # immediately; find a strictly interior foothold before bracketing
        lo = step / 1024.0
        while phi(lo) >= 0.0:
            lo *= 2.0
            if lo > step:
                raise GeometryInconsistencyError(
                    "tangential boundary start: backward ray never interior")
    hi = lo + step
    while phi(hi) < 0.0:
        lo = hi
        hi += step
        if hi > s_max:
            raise GeometryInconsistencyError(
                "ray failed to exit the domain within the bounding diameter")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if phi(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    s = 0.5 * (lo + hi)
    for _ in range(3):  # Newton polish on the level set along the ray
        p = x - s * v
        dphi = -float(np.dot(domain.grad(p), v))
        if dphi == 0.0:
            break
        s -= float(domain.xi(p)) / dphi
    xb = x - s * v
    if abs(float(domain.xi(xb))) > tol:
        raise GeometryInconsistencyError(
            f"exit point off the boundary: xi = {float(domain.xi(xb)):.2e}")
    return float(s), xb


def specular_reflect(n: np.ndarray, v: np.ndarray) -> np.ndarray:
    """R v = v - 2 (v . n) n; an isometry and involution."""
    n = np.asarray(n, float)
    v = np.asarray(v, float)
    dot = np.sum(v * n, axis=-1, keepdims=True)
    return v - 2.0 * dot * n


@dataclass
class SpecularCycle:
    """Back-time bounce history of one phase point.

    entries[k] = (t_k, x_k, v_k) for k = 0..m+1, t_k strictly decreasing,
    with t_{m+1} clamped to the cycle start (<= 0 means the trajectory
    started inside the current segment).  grazing marks cycles that hit a
    near-tangential bounce and must be excluded by callers.
    """

    entries: list
    m: int
    grazing: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries])

    def position_velocity(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        """(X_cl, V_cl) at back-time tau in (t_{m+1}, t_0]."""
        for k in range(len(self.entries) - 1):
            t_k, x_k, v_k = self.entries[k]
            t_next = self.entries[k + 1][0]
            if tau > t_next or k == len(self.entries) - 2:
                return x_k - (t_k - tau) * v_k, v_k
        raise ValueError("tau outside the cycle range")

    def to_csv(self) -> str:
        lines = ["k,t,x1,x2,x3,v1,v2,v3"]
        for k, (t, x, v) in enumerate(self.entries):
            lines.append(",".join(
                [str(k)] + [repr(float(c)) for c in (t, *x, *v)]))
        return "\n".join(lines) + "\n"


def build_cycle(domain: Domain, t: float, x: np.ndarray, v: np.ndarray,
                eps_graze: float = EPS_GRAZE,
                bounce_cap: int = BOUNCE_CAP) -> SpecularCycle:
    """Trace the specular back-time cycle from (t, x, v) down to time 0.

    Returns a grazing-flagged (possibly truncated) cycle on a
    near-tangential bounce instead of raising; exceeding bounce_cap raises.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    speed = np.linalg.norm(v)
    entries = [(float(t), x.copy(), v.copy())]
    t_k, x_k, v_k = float(t), x, v
    m = 0
    if speed == 0.0:
        entries.append((0.0, x.copy(), v.copy()))
        return SpecularCycle(entries, m=0)
    for k in range(bounce_cap):
        tb, xb = backward_exit(domain, x_k, v_k)
        t_next = t_k - tb
        nrm = normal(domain, xb)
        if t_next > 0.0 and \
                abs(float(np.dot(nrm, v_k))) / speed < eps_graze:
            entries.append((t_next, xb, v_k.copy()))
            return SpecularCycle(entries, m=k, grazing=True)
        v_next = specular_reflect(nrm, v_k)
        entries.append((t_next, xb, v_next))
        if t_next <= 0.0:
            m = k
            break
        t_k, x_k, v_k = t_next, xb, v_next
    else:
        raise BounceCapError(f"exceeded {bounce_cap} bounces")
    return SpecularCycle(entries, m=m)
