"""Projective plane, dual plane and flag space geometry.

Points of RP^2 are stored as unit representatives, lines of RP^2* as unit
normals (the line is the projectivized orthogonal complement), flags as a
point/line pair with exact incidence, and oriented flags as a direction on
S^2 together with the unit conormal of the oriented plane.

Besides the value types, the module exposes vectorized helpers working on
arrays: a batch of flags is an ``(N, 6)`` array ``[point | normal]`` and a
batch of oriented flags is ``(N, 6)`` ``[dir | conormal]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

TIE_TOL = 1e-13
DEGENERATE_TOL = 1e-10
FLAG_TOL = 1e-8


class GeometryError(ValueError):
    """Numerical data that does not describe the requested object."""


class DegenerateJoin(GeometryError):
    pass


class DegenerateMeet(GeometryError):
    pass


class SingularInput(GeometryError):
    pass


# ---------------------------------------------------------------------------
# array helpers


def canonical(v: np.ndarray) -> np.ndarray:
    """Unit representative whose largest-magnitude coordinate is positive.

    Works on a single vector or on the last axis of an array. Ties (within
    ``TIE_TOL``) go to the lowest index.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise GeometryError("zero vector has no projective class")
    # unit vectors are left unscaled so canonicalization is bitwise idempotent
    u = np.where(np.abs(n - 1) <= 4 * np.finfo(float).eps, v, v / n)
    a = np.abs(u)
    top = a.max(axis=-1, keepdims=True)
    idx = np.argmax(a >= top - TIE_TOL, axis=-1)
    lead = np.take_along_axis(u, idx[..., None], axis=-1)
    return np.where(lead < 0, -u, u) + 0.0  # no negative zeros


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def proj_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle in [0, pi/2] between the lines spanned by unit vectors."""
    c = np.abs(np.sum(u * v, axis=-1))
    s = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(s, c)


def sphere_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle in [0, pi] between unit vectors."""
    c = np.sum(u * v, axis=-1)
    s = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(s, c)


def complement_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis (u, w) of v^perp with v x u = w."""
    v = normalize(v)
    k = int(np.argmin(np.abs(v)))
    e = np.zeros(3)
    e[k] = 1.0
    u = normalize(e - v[k] * v)
    return u, np.cross(v, u)


def incident_project(p: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Project point representatives onto the planes with normals n."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    return canonical(p - np.sum(p * n, axis=-1, keepdims=True) * n)


def make_flags(p: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Batch of flags with canonical normals and re-projected points."""
    n = canonical(n)
    return np.concatenate([incident_project(p, n), n], axis=-1)


def flag_dist_array(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Flag metric (max of point and line angles) on broadcast arrays."""
    return np.maximum(proj_angle(f[..., :3], g[..., :3]),
                      proj_angle(f[..., 3:], g[..., 3:]))


def oriented_dist_array(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.maximum(sphere_angle(f[..., :3], g[..., :3]),
                      sphere_angle(f[..., 3:], g[..., 3:]))


def act_points_array(m: np.ndarray, p: np.ndarray) -> np.ndarray:
    return canonical(p @ m.T)


def act_normals_array(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    return canonical(n @ np.linalg.inv(m))


def act_flags_array(m: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply a matrix to a batch of flags (points by m, normals by m^-T)."""
    p = f[..., :3] @ m.T
    n = f[..., 3:] @ np.linalg.inv(m)
    return make_flags(p, n)


def act_oriented_array(m: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply a matrix of positive determinant to a batch of oriented flags."""
    d = normalize(f[..., :3] @ m.T)
    c = f[..., 3:] @ np.linalg.inv(m)
    c = c - np.sum(c * d, axis=-1, keepdims=True) * d
    return np.concatenate([d, normalize(c)], axis=-1)


def alpha_circle_distance(f: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distance from flags to the circle of flags with point p."""
    a = proj_angle(f[..., :3], p)
    b = np.arcsin(np.clip(np.abs(f[..., 3:] @ p), 0.0, 1.0))
    return np.maximum(a, b)


def beta_circle_distance(f: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Distance from flags to the circle of flags with line of normal n."""
    a = np.arcsin(np.clip(np.abs(f[..., :3] @ n), 0.0, 1.0))
    b = proj_angle(f[..., 3:], n)
    return np.maximum(a, b)


def bouquet_distance(f: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Distance from flags to the wedge of the two circles through center."""
    return np.minimum(alpha_circle_distance(f, center[:3]),
                      beta_circle_distance(f, center[3:]))


def surface_ba_distance(f: np.ndarray, n: np.ndarray, grid: int = 720) -> np.ndarray:
    """Distance from flags to the surface of flags whose point lies on the line n.

    Minimizes over the point q of the line the distance to the
    alpha-circle of q: coarse grid, then a few rounds of local refinement.
    """
    f = np.atleast_2d(f)
    u, w = complement_basis(n)
    lo, hi = 0.0, np.pi
    theta = np.linspace(lo, hi, grid, endpoint=False)
    step = (hi - lo) / grid

    def cost(th):
        q = np.cos(th)[..., None] * u + np.sin(th)[..., None] * w
        a = np.arccos(np.clip(np.abs(np.einsum("ij,ikj->ik", f[:, :3], q)), 0, 1))
        b = np.arcsin(np.clip(np.abs(np.einsum("ij,ikj->ik", f[:, 3:], q)), 0, 1))
        return np.maximum(a, b)

    th = np.broadcast_to(theta, (len(f), grid))
    c = cost(th)
    best = th[np.arange(len(f)), np.argmin(c, axis=1)]
    for _ in range(6):
        th = best[:, None] + np.linspace(-step, step, 41)[None, :]
        c = cost(th)
        best = th[np.arange(len(f)), np.argmin(c, axis=1)]
        step /= 20.0
    # exact refinement with the stable angle formula at the final point
    q = np.cos(best)[:, None] * u + np.sin(best)[:, None] * w
    a = proj_angle(f[:, :3], q)
    b = np.arcsin(np.clip(np.abs(np.sum(f[:, 3:] * q, axis=1)), 0, 1))
    return np.maximum(a, b)


def surface_ab_distance(f: np.ndarray, p: np.ndarray, grid: int = 720) -> np.ndarray:
    """Distance to the surface of flags whose line passes through p.

    The duality involution is an isometry exchanging the two surface kinds.
    """
    f = np.atleast_2d(f)
    return surface_ba_distance(np.concatenate([f[:, 3:], f[:, :3]], axis=1), p, grid)


# ---------------------------------------------------------------------------
# value types


class ProjPoint:
    """A point of RP^2, stored as a canonical unit representative."""

    __slots__ = ("rep",)

    def __init__(self, *coords):
        v = np.asarray(coords[0] if len(coords) == 1 else coords, dtype=float).reshape(3)
        rep = canonical(v)
        rep.setflags(write=False)
        object.__setattr__(self, "rep", rep)

    def __setattr__(self, name, value):
        raise AttributeError("ProjPoint is immutable")

    def __repr__(self):
        return "ProjPoint[%s]" % ":".join("%.6g" % c for c in self.rep)

    def isclose(self, other: "ProjPoint", tol: float = 1e-10) -> bool:
        return float(proj_angle(self.rep, other.rep)) <= tol


class ProjLine:
    """A line of RP^2 (point of RP^2*), stored by its canonical unit normal."""

    __slots__ = ("normal",)

    def __init__(self, *coords):
        v = np.asarray(coords[0] if len(coords) == 1 else coords, dtype=float).reshape(3)
        nrm = canonical(v)
        nrm.setflags(write=False)
        object.__setattr__(self, "normal", nrm)

    def __setattr__(self, name, value):
        raise AttributeError("ProjLine is immutable")

    def __repr__(self):
        return "ProjLine(normal=[%s])" % ":".join("%.6g" % c for c in self.normal)

    def contains(self, p: ProjPoint, tol: float = FLAG_TOL) -> bool:
        return abs(float(self.normal @ p.rep)) <= tol

    def isclose(self, other: "ProjLine", tol: float = 1e-10) -> bool:
        return float(proj_angle(self.normal, other.normal)) <= tol


@dataclass(frozen=True, eq=False)
class Flag:
    """A pointed line (p, D) with p on D.

    Construction re-projects ``point`` onto the plane of ``line`` so the
    stored incidence is exact up to rounding.
    """

    point: ProjPoint
    line: ProjLine

    def __post_init__(self):
        off = abs(float(self.point.rep @ self.line.normal))
        if off > FLAG_TOL:
            raise GeometryError("point is not on the line (offset %.3g)" % off)
        object.__setattr__(self, "point", ProjPoint(incident_project(self.point.rep, self.line.normal)))

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Flag":
        a = np.asarray(a, dtype=float)
        return cls(ProjPoint(a[:3]), ProjLine(a[3:]))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.point.rep, self.line.normal])

    def isclose(self, other: "Flag", tol: float = 1e-10) -> bool:
        return dist(self, other) <= tol


@dataclass(frozen=True, eq=False)
class OrientedFlag:
    """A tangent half-line of S^2: a direction and an oriented plane through it.

    ``conormal`` is the unit normal of the plane, oriented so that
    (dir, w, conormal) is right-handed for w the second vector of a positive
    basis (dir, w) of the plane.
    """

    dir: np.ndarray
    conormal: np.ndarray

    def __post_init__(self):
        d = normalize(np.asarray(self.dir, dtype=float).reshape(3))
        c = np.asarray(self.conormal, dtype=float).reshape(3)
        c = c - (c @ d) * d
        if np.linalg.norm(c) < DEGENERATE_TOL:
            raise GeometryError("conormal parallel to direction")
        c = normalize(c)
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "dir", d)
        object.__setattr__(self, "conormal", c)

    @classmethod
    def from_basis(cls, d: Sequence[float], w: Sequence[float]) -> "OrientedFlag":
        """Oriented flag with direction d and plane oriented by the basis (d, w)."""
        d = np.asarray(d, dtype=float)
        return cls(d, np.cross(d, np.asarray(w, dtype=float)))

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "OrientedFlag":
        a = np.asarray(a, dtype=float)
        return cls(a[:3], a[3:])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.dir, self.conormal])


class GroupElement:
    """An element of PGL(3), stored with |det| = 1."""

    __slots__ = ("mat",)

    def __init__(self, mat):
        m = np.asarray(mat, dtype=float).reshape(3, 3)
        sign, logdet = np.linalg.slogdet(m)
        if sign == 0 or not np.isfinite(logdet):
            raise SingularInput("matrix is not invertible")
        m = m / np.exp(logdet / 3.0)
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    def __setattr__(self, name, value):
        raise AttributeError("GroupElement is immutable")

    def __repr__(self):
        return "GroupElement(%s)" % np.array2string(self.mat, precision=6)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.mat @ other.mat)

    def inv(self) -> "GroupElement":
        return GroupElement(np.linalg.inv(self.mat))

    def __pow__(self, k: int) -> "GroupElement":
        if k < 0:
            return GroupElement(np.linalg.matrix_power(np.linalg.inv(self.mat), -k))
        return GroupElement(np.linalg.matrix_power(self.mat, k))

    def theta(self) -> "GroupElement":
        """Inverse transpose, the automorphism intertwined by duality."""
        return GroupElement(np.linalg.inv(self.mat).T)

    def sl3(self) -> np.ndarray:
        """The determinant +1 representative."""
        return self.mat * np.sign(np.linalg.det(self.mat))

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(np.eye(3))

    @classmethod
    def diag(cls, *entries) -> "GroupElement":
        return cls(np.diag(np.asarray(entries, dtype=float)))


Element = Union[ProjPoint, ProjLine, Flag]


# ---------------------------------------------------------------------------
# incidence and duality


def join(p: ProjPoint, q: ProjPoint) -> ProjLine:
    """The line through two distinct points."""
    c = np.cross(p.rep, q.rep)
    if np.linalg.norm(c) <= DEGENERATE_TOL:
        raise DegenerateJoin("points coincide")
    return ProjLine(c)


def meet(d: ProjLine, e: ProjLine) -> ProjPoint:
    """The intersection point of two distinct lines."""
    c = np.cross(d.normal, e.normal)
    if np.linalg.norm(c) <= DEGENERATE_TOL:
        raise DegenerateMeet("lines coincide")
    return ProjPoint(c)


def tau(p: ProjPoint) -> ProjLine:
    """The orthogonal line m -> [m^perp]."""
    return ProjLine(p.rep)


def tau_inv(d: ProjLine) -> ProjPoint:
    return ProjPoint(d.normal)


def kappa(x: Flag) -> Flag:
    """Duality involution (m, D) -> (D^perp, m^perp)."""
    return Flag(ProjPoint(x.line.normal), ProjLine(x.point.rep))


def kappa_array(f: np.ndarray) -> np.ndarray:
    return np.concatenate([f[..., 3:], f[..., :3]], axis=-1)


def flag_through(p: ProjPoint, q: ProjPoint) -> Flag:
    """The flag (p, [p, q])."""
    return Flag(p, join(p, q))


# ---------------------------------------------------------------------------
# actions


def act(g: GroupElement, x):
    """Action on points, lines (inverse transpose on normals) and flags."""
    if isinstance(x, ProjPoint):
        return ProjPoint(g.mat @ x.rep)
    if isinstance(x, ProjLine):
        return ProjLine(np.linalg.inv(g.mat).T @ x.normal)
    if isinstance(x, Flag):
        return Flag.from_array(act_flags_array(g.mat, x.to_array()))
    if isinstance(x, OrientedFlag):
        return act_oriented(g, x)
    raise TypeError("cannot act on %r" % type(x).__name__)


def act_oriented(g: GroupElement, x: OrientedFlag) -> OrientedFlag:
    """Action on oriented flags through the determinant +1 representative."""
    return OrientedFlag.from_array(act_oriented_array(g.sl3(), x.to_array()))


def project_pi(x: OrientedFlag) -> Flag:
    """Forget the orientations: (d, P) -> ([d], [P])."""
    return Flag(ProjPoint(x.dir), ProjLine(x.conormal))


def embed_j(h) -> GroupElement:
    """Block embedding of GL(2) into PGL(3) fixing the third basis vector."""
    h = np.asarray(h, dtype=float).reshape(2, 2)
    if abs(np.linalg.det(h)) <= 1e-14 * max(1.0, np.abs(h).max() ** 2):
        raise SingularInput("h is not invertible")
    m = np.eye(3)
    m[:2, :2] = h
    return GroupElement(m)


# ---------------------------------------------------------------------------
# metric


def dist(a, b) -> float:
    """Angular metric on RP^2, RP^2*, X (max of parts) and the oriented cover."""
    if isinstance(a, ProjPoint) and isinstance(b, ProjPoint):
        return float(proj_angle(a.rep, b.rep))
    if isinstance(a, ProjLine) and isinstance(b, ProjLine):
        return float(proj_angle(a.normal, b.normal))
    if isinstance(a, Flag) and isinstance(b, Flag):
        return float(flag_dist_array(a.to_array(), b.to_array()))
    if isinstance(a, OrientedFlag) and isinstance(b, OrientedFlag):
        return float(oriented_dist_array(a.to_array(), b.to_array()))
    raise TypeError("dist needs two elements of the same kind")


# ---------------------------------------------------------------------------
# circles, surfaces and samplers


@dataclass(frozen=True)
class AlphaOf:
    """The alpha-circle of a point: all flags with that point."""

    point: ProjPoint


@dataclass(frozen=True)
class BetaOf:
    """The beta-circle of a line: all flags with that line."""

    line: ProjLine


@dataclass(frozen=True)
class ABOf:
    """The alpha-beta surface of a point: flags whose line passes through it."""

    point: ProjPoint


@dataclass(frozen=True)
class BAOf:
    """The beta-alpha surface of a line: flags whose point lies on it."""

    line: ProjLine


def pencil_array(v: np.ndarray, m: int, offset: float = 0.0) -> np.ndarray:
    """m unit vectors evenly spread over the great circle orthogonal to v."""
    u, w = complement_basis(v)
    th = (np.arange(m) + offset) * np.pi / m
    return np.cos(th)[:, None] * u + np.sin(th)[:, None] * w


def circle_array(spec: AlphaOf | BetaOf, m: int) -> np.ndarray:
    if m < 3:
        raise ValueError("need at least 3 samples")
    if isinstance(spec, AlphaOf):
        p = spec.point.rep
        n = pencil_array(p, m)
        return make_flags(np.broadcast_to(p, n.shape), n)
    if isinstance(spec, BetaOf):
        n = spec.line.normal
        p = pencil_array(n, m)
        return make_flags(p, np.broadcast_to(n, p.shape))
    raise TypeError("circle spec must be AlphaOf or BetaOf")


def sample_circle(spec: AlphaOf | BetaOf, m: int) -> list[Flag]:
    """m flags equally spaced in the circle parameter."""
    return [Flag.from_array(r) for r in circle_array(spec, m)]


def surface_array(spec: ABOf | BAOf, m: int) -> np.ndarray:
    if m < 3:
        raise ValueError("need at least 3 samples")
    if isinstance(spec, BAOf):
        pts = pencil_array(spec.line.normal, m)
        return np.concatenate([circle_array(AlphaOf(ProjPoint(q)), m) for q in pts])
    if isinstance(spec, ABOf):
        lines = pencil_array(spec.point.rep, m)
        return np.concatenate([circle_array(BetaOf(ProjLine(n)), m) for n in lines])
    raise TypeError("surface spec must be ABOf or BAOf")


def sample_surface(spec: ABOf | BAOf, m: int) -> list[Flag]:
    """m x m flags: m circles of m samples each."""
    return [Flag.from_array(r) for r in surface_array(spec, m)]


def point_net(spacing: float) -> np.ndarray:
    """Latitude-longitude net of RP^2 (upper hemisphere, pole and equator included)."""
    rings = max(1, int(np.ceil((np.pi / 2) / spacing)))
    pts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, rings + 1):
        colat = i * (np.pi / 2) / rings
        circ = 2 * np.pi * np.sin(colat)
        k = max(3, int(np.ceil(circ / spacing)))
        if i == rings:
            k = max(3, int(np.ceil(np.pi / spacing)))
            lon = np.arange(k) * np.pi / k
        else:
            lon = np.arange(k) * 2 * np.pi / k
        ring = np.stack([np.sin(colat) * np.cos(lon), np.sin(colat) * np.sin(lon),
                         np.full(k, np.cos(colat))], axis=1)
        if i == rings:
            ring[:, 2] = 0.0
        pts.append(ring)
    return canonical(np.vstack(pts))


def flag_net(spacing: float) -> np.ndarray:
    """Structured net of X with point and line spacing about ``spacing``.

    Built on the latitude-longitude point net; at each point the pencil of
    lines is sampled at angles k*pi/m measured from the meridian, so the
    pole, the equator, lines through the pole and the equator itself all
    occur exactly.
    """
    pts = point_net(spacing)
    m = max(3, int(np.ceil(np.pi / spacing)))
    om = np.arange(m) * np.pi / m
    out = []
    for p in pts:
        if abs(p[2]) > 1 - 1e-15:
            e_a, e_b = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
        else:
            e_b = normalize(np.array([-p[1], p[0], 0.0]))  # along the latitude
            e_a = np.cross(e_b, p)  # along the meridian
        c, s = np.cos(om), np.sin(om)
        c[np.abs(c) < 1e-15] = 0.0
        tdir = c[:, None] * e_a + s[:, None] * e_b
        n = np.cross(p, tdir)
        out.append(np.concatenate([np.broadcast_to(p, n.shape), canonical(n)], axis=1))
    return np.vstack(out)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-random rotation matrices, shape (n, 3, 3)."""
    a = rng.standard_normal((n, 3, 3))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    q[np.linalg.det(q) < 0, :, 0] *= -1
    return q


def random_flags(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniformly distributed flags, shape (n, 6)."""
    q = random_rotations(rng, n)
    return make_flags(q[:, :, 0], q[:, :, 2])


def random_oriented_flags(rng: np.random.Generator, n: int) -> np.ndarray:
    q = random_rotations(rng, n)
    return np.concatenate([q[:, :, 0], q[:, :, 2]], axis=1)


def random_group_elements(rng: np.random.Generator, n: int, scale: float = 1.0) -> list[GroupElement]:
    out = []
    while len(out) < n:
        m = np.eye(3) + scale * rng.standard_normal((3, 3))
        if abs(np.linalg.det(m)) > 1e-3:
            out.append(GroupElement(m))
    return out


def flags_to_list(f: np.ndarray) -> list[Flag]:
    return [Flag.from_array(r) for r in np.atleast_2d(f)]


def flags_from_list(xs: Iterable[Flag]) -> np.ndarray:
    return np.array([x.to_array() for x in xs]).reshape(-1, 6)


# ---------------------------------------------------------------------------
# JSON matrices


def matrix_from_json(obj) -> GroupElement:
    """Read ``{"pgl3": [9 numbers]}``, ``{"sl2": [[a,b],[c,d]]}`` or a flat list.

    Lists of 9 numbers are row-major 3x3 matrices; lists of 4 are row-major
    SL(2) matrices embedded block-diagonally.
    """
    if isinstance(obj, dict):
        if "pgl3" in obj:
            vals = np.asarray(obj["pgl3"], dtype=float).ravel()
            if vals.size != 9:
                raise ValueError("pgl3 entry needs 9 numbers, got %d" % vals.size)
            return GroupElement(vals.reshape(3, 3))
        if "sl2" in obj:
            vals = np.asarray(obj["sl2"], dtype=float).ravel()
            if vals.size != 4:
                raise ValueError("sl2 entry needs 4 numbers, got %d" % vals.size)
            return embed_j(vals.reshape(2, 2))
        raise ValueError("matrix object needs a 'pgl3' or 'sl2' key")
    vals = np.asarray(obj, dtype=float).ravel()
    if vals.size == 9:
        return GroupElement(vals.reshape(3, 3))
    if vals.size == 4:
        return embed_j(vals.reshape(2, 2))
    raise ValueError("matrix needs 9 or 4 numbers, got %d" % vals.size)


def matrix_to_json(g: GroupElement) -> list[float]:
    return [float(v) for v in g.mat.ravel()]
