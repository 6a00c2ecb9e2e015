"""The flow psi^t = j(e^t id) on X and on the oriented cover Xhat: fixed sets,
forward/backward limit maps, charts, growth rates and the fate of geodesics
of a j(SL2) Schottky group."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import projgeo as pg
from .asymptotics import UNDETERMINED, Undetermined
from .limit_objects import UnbalancedAlphaObjects, UnbalancedBetaObjects, phi_fibration
from .projgeo import Flag, GroupElement, OrientedFlag, ProjLine, ProjPoint
from .serialize import dumps, fmt
from .schottky import (InOmega, NearLimitSet, SchottkyGroup, Word, limit_entries, omega_membership,
                       reduce_to_fundamental_domain)

FIXED_TOL = 1e-9
ON_FIXED_TOL = 0.01
CHART_TOL = 1e-12
Y_TOL = 1e-9
FD_STEP = 1e-6

E1, E2, E3 = np.eye(3)
G0 = GroupElement(np.diag([-1.0, -1.0, 1.0]))  # j(-id)


class OnFixedSet(ValueError):
    pass


class OutOfChartDomain(ValueError):
    pass


class NotInDomain(ValueError):
    pass


# ---------------------------------------------------------------------------
# flow


@dataclass(frozen=True, eq=False)
class FlowPoint:
    ambient: str  # "X" or "Xhat"
    value: Flag | OrientedFlag

    def __post_init__(self):
        want = Flag if self.ambient == "X" else OrientedFlag if self.ambient == "Xhat" else None
        if want is None or not isinstance(self.value, want):
            raise TypeError("value does not match ambient %r" % self.ambient)

    def to_array(self) -> np.ndarray:
        return self.value.to_array()


def _as_flow_point(p) -> FlowPoint:
    if isinstance(p, FlowPoint):
        return p
    if isinstance(p, Flag):
        return FlowPoint("X", p)
    if isinstance(p, OrientedFlag):
        return FlowPoint("Xhat", p)
    raise TypeError("expected a Flag, OrientedFlag or FlowPoint")


def psi(t: float) -> GroupElement:
    return GroupElement(np.diag([np.exp(t), np.exp(t), 1.0]))


def flow_array(t: float, f: np.ndarray, oriented: bool = False) -> np.ndarray:
    """psi^t on rows of flags (or oriented flags), without matrix inversion."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    s = np.array([np.exp(t), np.exp(t), 1.0])
    p = f[:, :3] * s
    n = f[:, 3:] / s
    if not oriented:
        return pg.make_flags(p, n)
    d = pg.normalize(p)
    n = n - np.sum(n * d, axis=1, keepdims=True) * d
    return np.concatenate([d, pg.normalize(n)], axis=1)


def flow(t: float, p):
    """psi^t applied to a FlowPoint, Flag or OrientedFlag (same kind returned)."""
    fp = _as_flow_point(p)
    out = flow_array(t, fp.to_array(), fp.ambient == "Xhat")[0]
    val = Flag.from_array(out) if fp.ambient == "X" else OrientedFlag.from_array(out)
    return val if not isinstance(p, FlowPoint) else FlowPoint(fp.ambient, val)


# ---------------------------------------------------------------------------
# fixed sets


@dataclass(frozen=True)
class DeltaCircle:
    """Flags (p, [p, e3]) with p on [e1, e2]."""

    def sample(self, m: int) -> np.ndarray:
        th = np.arange(m) * np.pi / m
        p = np.stack([np.cos(th), np.sin(th), np.zeros(m)], axis=1)
        n = np.stack([-np.sin(th), np.cos(th), np.zeros(m)], axis=1)
        return pg.make_flags(p, n)

    def distance(self, f: np.ndarray, grid: int = 720, chunk: int = 2048,
                 cutoff: float | None = None) -> np.ndarray:
        """Minimum over the circle parameter: grid, then local refinement.

        With ``cutoff``, rows whose lower bound (angles of the point to
        [e1, e2] and of the line to [e3]) exceeds it get that bound instead.
        """
        f = np.atleast_2d(f)
        if cutoff is not None:
            lb = np.arcsin(np.minimum(1.0, np.maximum(np.abs(f[:, 2]), np.abs(f[:, 5]))))
            near = lb <= cutoff
            if near.any():
                lb[near] = self.distance(f[near], grid, chunk)
            return lb
        if len(f) > chunk:
            return np.concatenate([self.distance(f[i:i + chunk], grid, chunk)
                                   for i in range(0, len(f), chunk)])

        def cost(th):
            p = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1)
            n = np.stack([-np.sin(th), np.cos(th), np.zeros_like(th)], axis=-1)
            return np.maximum(pg.proj_angle(f[:, None, :3], p), pg.proj_angle(f[:, None, 3:], n))

        step = np.pi / grid
        th = np.broadcast_to(np.arange(grid) * step, (len(f), grid))
        best = th[np.arange(len(f)), np.argmin(cost(th), axis=1)]
        for _ in range(6):
            th = best[:, None] + np.linspace(-step, step, 41)[None, :]
            best = th[np.arange(len(f)), np.argmin(cost(th), axis=1)]
            step /= 20.0
        return cost(best[:, None])[:, 0]


def fixed_circles():
    """C_alpha[e3], C_beta[e1, e2] and the circle Delta of flags (p, [p, e3])."""
    return pg.AlphaOf(ProjPoint(E3)), pg.BetaOf(ProjLine(E3)), DeltaCircle()


def fixed_set_distance(f: np.ndarray, cutoff: float | None = None) -> np.ndarray:
    """Distance on X to the union of the three fixed circles.

    With ``cutoff`` the value is exact below it and a lower bound above it.
    """
    f = np.atleast_2d(f)
    return np.minimum.reduce([pg.alpha_circle_distance(f, E3), pg.beta_circle_distance(f, E3),
                              DeltaCircle().distance(f, cutoff=cutoff)])


def is_fixed(p, t: float = 1.0) -> bool:
    if t == 0:
        raise ValueError("t must be non-zero")
    fp = _as_flow_point(p)
    a = fp.to_array()
    b = flow_array(t, a, fp.ambient == "Xhat")[0]
    d = pg.oriented_dist_array(a, b) if fp.ambient == "Xhat" else pg.flag_dist_array(a, b)
    return bool(d < FIXED_TOL)


def is_fixed_array(f: np.ndarray, t: float = 1.0) -> np.ndarray:
    f = np.atleast_2d(f)
    return pg.flag_dist_array(f, flow_array(t, f)) < FIXED_TOL


# ---------------------------------------------------------------------------
# limit fibrations

_SWAP = np.array([[0.0, 0, 1], [0, 1, 0], [1, 0, 0]])
FORWARD_OBJECTS = UnbalancedBetaObjects(ProjPoint(E3), ProjLine(E3), 1.0, GroupElement.identity(),
                                        np.eye(3), np.eye(3))
BACKWARD_OBJECTS = UnbalancedAlphaObjects(ProjLine(E3), ProjPoint(E3), 1.0, GroupElement.identity(),
                                          _SWAP, _SWAP)


def phi_plus(x: Flag) -> Flag:
    """Forward limit of psi^t on X, a flag of C_beta[e1, e2]."""
    return phi_fibration(FORWARD_OBJECTS, x)


def phi_minus(x: Flag) -> Flag:
    """Backward limit of psi^t on X, a flag of C_alpha[e3]."""
    return phi_fibration(BACKWARD_OBJECTS, x)


# ---------------------------------------------------------------------------
# charts of Xhat


def chart1(coords: Sequence[float]) -> OrientedFlag:
    x, y, z = (float(c) for c in coords)
    return OrientedFlag.from_basis([1.0, x, y], [0.0, 1.0, z])


def chart2(coords: Sequence[float]) -> OrientedFlag:
    x, y, z = (float(c) for c in coords)
    return OrientedFlag.from_basis([x, y, 1.0], [z, 1.0, 0.0])


def _sheet_check(f: OrientedFlag, coords, chart) -> None:
    g = chart(coords)
    if pg.oriented_dist_array(f.to_array(), g.to_array()) > 1e-6:
        raise OutOfChartDomain("oriented flag lies on another sheet over the chart image")


def chart1_inv(f: OrientedFlag | Flag, strict: bool = False) -> np.ndarray:
    """Chart-1 coordinates of the projected flag.

    With ``strict`` the oriented flag itself must lie in the chart image;
    otherwise only its projection to X is used.
    """
    d, c = _parts(f)
    if abs(d[0]) < CHART_TOL or abs(c[2]) < CHART_TOL:
        raise OutOfChartDomain("flag outside the chart-1 domain")
    out = np.array([d[1] / d[0], d[2] / d[0], -c[1] / c[2]])
    if strict:
        _sheet_check(f, out, chart1)
    return out


def chart2_inv(f: OrientedFlag | Flag, strict: bool = False) -> np.ndarray:
    d, c = _parts(f)
    if abs(d[2]) < CHART_TOL or abs(c[0]) < CHART_TOL:
        raise OutOfChartDomain("flag outside the chart-2 domain")
    out = np.array([d[0] / d[2], d[1] / d[2], -c[1] / c[0]])
    if strict:
        _sheet_check(f, out, chart2)
    return out


def _parts(f) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(f, OrientedFlag):
        return f.dir, f.conormal
    if isinstance(f, Flag):
        return f.point.rep, f.line.normal
    raise TypeError("expected a flag")


def chart2_inv_of_chart1(coords: Sequence[float]) -> np.ndarray:
    """Closed form of phi2^-1 o phi1 on V = {y != 0, z x / y != 1}."""
    x, y, z = (float(c) for c in coords)
    if abs(y) < CHART_TOL or abs(z * x / y - 1) < CHART_TOL:
        raise OutOfChartDomain("outside V")
    return np.array([1 / y, x / y, (z / y) / (z * x / y - 1)])


def chart1_inv_of_chart2(coords: Sequence[float]) -> np.ndarray:
    """Closed form of phi1^-1 o phi2 on U = {x != 0, z y / x != 1}."""
    x, y, z = (float(c) for c in coords)
    if abs(x) < CHART_TOL or abs(z * y / x - 1) < CHART_TOL:
        raise OutOfChartDomain("outside U")
    return np.array([y / x, 1 / x, (z / x) / (z * y / x - 1)])


def conjugated_flow_in_chart(chart: int, t: float) -> np.ndarray:
    """psi^t read in a chart: exact diagonal linear map."""
    if chart == 1:
        return np.diag([1.0, np.exp(-t), np.exp(-t)])
    if chart == 2:
        return np.diag([np.exp(t), np.exp(t), 1.0])
    raise ValueError("chart must be 1 or 2")


def chart_flow(chart: int, t: float, coords: Sequence[float]) -> np.ndarray:
    """chart^-1 o psi^t o chart evaluated through the flag space."""
    phi, inv = (chart1, chart1_inv) if chart == 1 else (chart2, chart2_inv)
    f = flow(t, phi(coords))
    return inv(f, strict=True)


# ---------------------------------------------------------------------------
# growth rates


@dataclass(frozen=True)
class ExponentTriple:
    lambda_c: float
    lambda_alpha: float
    lambda_beta: float


def _frame(f: np.ndarray) -> np.ndarray:
    """Rotation with columns (dir, conormal x dir, conormal)."""
    d, c = f[:3], f[3:]
    return np.stack([d, np.cross(c, d), c], axis=1)


def _unframe(r: np.ndarray) -> np.ndarray:
    return np.concatenate([r[:, 0], r[:, 2]])


def _rot(axis: int, s: float) -> np.ndarray:
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    m = np.eye(3)
    m[i, i] = m[j, j] = np.cos(s)
    m[i, j], m[j, i] = -np.sin(s), np.sin(s)
    return m


def _body_component(r0: np.ndarray, r1: np.ndarray, axis: int) -> float:
    """Component along a body axis of the small rotation r0^T r1."""
    q = r0.T @ r1
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    return 0.5 * (q[j, i] - q[i, j])


def flow_velocity(f: np.ndarray) -> np.ndarray:
    """d/dt psi^t at an oriented flag, as a body angular velocity.

    The direction moves by d3 (d3 d1, d3 d2, -(d1^2 + d2^2)) and the conormal
    by -c3 (c3 c1, c3 c2, -(c1^2 + c2^2)); written this way there is no
    cancellation near the fixed sets.
    """
    d, c = f[:3], f[3:]
    dd = d[2] * np.array([d[2] * d[0], d[2] * d[1], -(d[0] ** 2 + d[1] ** 2)])
    dc = -c[2] * np.array([c[2] * c[0], c[2] * c[1], -(c[0] ** 2 + c[1] ** 2)])
    r = _frame(f)
    w = r[:, 1]
    dw = np.cross(dc, d) + np.cross(c, dd)
    # body angular velocity of a frame moving by (dd, dw, dc)
    return np.array([dw @ c, dc @ d, dd @ w])


def _check_off_fixed(f: np.ndarray) -> None:
    x = pg.make_flags(f[:3], f[3:])
    if fixed_set_distance(x, cutoff=ON_FIXED_TOL)[0] <= ON_FIXED_TOL:
        raise OnFixedSet("point within %.2g of the fixed circles" % ON_FIXED_TOL)


def lyapunov(p, direction: str | None = None, T: float = 40.0, dt: float = 0.05,
             backward: bool = False, h: float = FD_STEP):
    """Growth rates of psi^t (or psi^-t) along E^alpha, E^beta and the flow.

    E^alpha (fixed point, moving line) and E^beta (fixed line, moving point)
    are invariant line fields, realized as body rotations about the direction
    and the conormal axis of the frame. Each step of length dt measures the
    stretch of the unit vector by a central finite difference and transports
    a fresh unit vector from the exactly computed next base point. The flow
    direction uses the analytic velocity field. The rate is the slope of the
    accumulated log-stretch over [T/2, T].

    Backward rates follow the sign convention ln|D psi^-t| / (-t).
    Returns one rate if ``direction`` is given, else an ExponentTriple.
    """
    fp = _as_flow_point(p)
    if fp.ambient != "Xhat":
        raise TypeError("growth rates are computed on Xhat")
    if T < 20 or dt > 0.1:
        raise ValueError("need T >= 20 and dt <= 0.1")
    f0 = fp.to_array()
    _check_off_fixed(f0)
    sgn = -1.0 if backward else 1.0
    n = int(round(T / dt))
    times = sgn * dt * np.arange(n + 1)
    base = flow_array(0.0, f0, True)
    path = np.vstack([flow_array(t, base, True) for t in times])
    logs = {"alpha": np.zeros(n + 1), "beta": np.zeros(n + 1)}
    for k in range(n):
        r0, r1 = _frame(path[k]), _frame(path[k + 1])
        for name, axis in (("alpha", 0), ("beta", 2)):
            out = []
            for s in (h, -h):
                moved = flow_array(sgn * dt, _unframe(r0 @ _rot(axis, s)), True)[0]
                out.append(_body_component(r1, _frame(moved), axis))
            logs[name][k + 1] = logs[name][k] + np.log(abs(out[0] - out[1]) / (2 * h))
    logs["c"] = np.log([np.linalg.norm(flow_velocity(f)) for f in path])
    # rate over the second half: the transient toward the limit circle
    # otherwise biases a finite-time estimate by O(1/T)
    k0 = n // 2
    span = sgn * (n - k0) * dt
    rate = {name: float((v[n] - v[k0]) / span) for name, v in logs.items()}
    res = ExponentTriple(rate["c"], rate["alpha"], rate["beta"])
    if direction is None:
        return res
    key = {"c": "lambda_c", "alpha": "lambda_alpha", "beta": "lambda_beta"}
    if direction not in key:
        raise ValueError("direction must be c, alpha or beta")
    return getattr(res, key[direction])


def write_exponent_json(path, p, direction: str, T: float, dt: float, estimate) -> None:
    fp = _as_flow_point(p)
    est = estimate if isinstance(estimate, ExponentTriple) else float(estimate)
    obj = {"point": [float(v) for v in fp.to_array()], "direction": direction, "T": T, "dt": dt,
           "estimate": est}
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# geodesic fate


@dataclass(frozen=True)
class Escapes:
    limit: Flag


@dataclass(frozen=True)
class Recurrent:
    pass


def in_Y(x: Flag, tol: float = Y_TOL) -> bool:
    """Y: the point is off [e1, e2] and the line misses [e3]."""
    return abs(float(x.point.rep[2])) > tol and abs(float(x.line.normal[2])) > tol


def limit_points(group: SchottkyGroup, depth: int) -> np.ndarray:
    """Attractive points of all depth-n words, as unit vectors."""
    return np.array([e.p_plus.rep for e in limit_entries(group, depth)])


def geodesic_fate(group: SchottkyGroup, x: Flag, depth: int = 4, eps: float = 1e-3,
                  backward: bool = False, cloud: np.ndarray | None = None):
    """Escapes(limit) | Recurrent() | UNDETERMINED from the limit fibration.

    q is the point of [e1, e2] read off phi_plus(x) (phi_minus for
    ``backward``); its distance to the depth-n attractive points decides the
    fate, with an explicit undetermined band between eps/4 and eps.
    """
    if not in_Y(x):
        raise NotInDomain("flag is not in the open orbit Y")
    if not isinstance(omega_membership(group, x), InOmega):
        raise NotInDomain("flag not certified in the domain of discontinuity")
    if backward:
        lim = phi_minus(x)
        q = pg.meet(lim.line, ProjLine(E3)).rep
    else:
        lim = phi_plus(x)
        q = lim.point.rep
    pts = limit_points(group, depth) if cloud is None else cloud
    d = float(pg.proj_angle(q[None], pts).min())
    if d > eps:
        return Escapes(lim)
    if d < eps / 4:
        return Recurrent()
    return UNDETERMINED


@dataclass(frozen=True)
class OrbitStep:
    t: float
    flag: Flag
    word: Word


def quotient_orbit(group: SchottkyGroup, x: Flag, t_max: float, dt: float, max_steps: int = 100) -> list[OrbitStep]:
    """Flow by dt, reduce to the fundamental domain, accumulate the word.

    Each entry satisfies evaluate(word) psi^t(x) = flag. NearLimitSet
    propagates from the reduction.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    w, u = reduce_to_fundamental_domain(group, x, max_steps)
    out = [OrbitStep(0.0, u, w)]
    n = int(round(t_max / dt))
    for k in range(1, n + 1):
        moved = Flag.from_array(flow_array(dt, u.to_array())[0])
        v, u = reduce_to_fundamental_domain(group, moved, max_steps)
        w = v * w
        out.append(OrbitStep(k * dt, u, w))
    return out


def fate_by_orbit(group: SchottkyGroup, x: Flag, T: float = 60.0, dt: float = 0.5,
                  settle: float = 0.25, tol: float = 1e-6):
    """Fate from the simulated quotient orbit.

    Escapes when the word is constant over the final ``settle`` fraction of
    the run and the representative has stopped moving; Recurrent when the
    word still changes; UNDETERMINED when the reduction loses accuracy or
    the word is constant but the representative has not settled.
    """
    try:
        traj = quotient_orbit(group, x, T, dt)
    except NearLimitSet:
        return UNDETERMINED
    tail = traj[int(len(traj) * (1 - settle)):]
    words = {str(s.word) for s in tail}
    if len(words) > 1:
        return Recurrent()
    if pg.dist(tail[0].flag, tail[-1].flag) > tol:
        return UNDETERMINED
    return Escapes(traj[-1].flag)


def same_fate(a, b) -> bool:
    return type(a) is type(b)


def write_trajectory_csv(path, traj: Sequence[OrbitStep]) -> None:
    own = isinstance(path, (str, os.PathLike))
    fh = open(path, "w", newline="") if own else path
    try:
        w = csv.writer(fh, lineterminator="\n")
        for s in traj:
            w.writerow([fmt(s.t)] + [fmt(v) for v in s.flag.to_array()] + [str(s.word)])
    finally:
        if own:
            fh.close()


__all__ = [
    "FlowPoint", "psi", "flow", "flow_array", "fixed_circles", "DeltaCircle", "fixed_set_distance",
    "is_fixed", "is_fixed_array", "phi_plus", "phi_minus", "chart1", "chart2", "chart1_inv",
    "chart2_inv", "chart2_inv_of_chart1", "chart1_inv_of_chart2", "conjugated_flow_in_chart",
    "chart_flow", "ExponentTriple", "lyapunov", "flow_velocity", "Escapes", "Recurrent", "in_Y",
    "geodesic_fate", "quotient_orbit", "fate_by_orbit", "OrbitStep", "write_trajectory_csv",
    "write_exponent_json", "OnFixedSet", "OutOfChartDomain", "NotInDomain", "G0", "Undetermined",
]
