"""Finite samples of compact sets: Hausdorff distance, net coverage, clustering."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.spatial import cKDTree

from . import projgeo as pg
from .serialize import fmt


class SpaceMismatch(ValueError):
    pass


class Space(enum.Enum):
    RP2 = "RP2"
    RP2_DUAL = "RP2*"
    X = "X"
    XHAT = "Xhat"
    S2 = "S2"


_WIDTH = {Space.RP2: 3, Space.RP2_DUAL: 3, Space.S2: 3, Space.X: 6, Space.XHAT: 6}


@dataclass(frozen=True, eq=False)
class SampledCompact:
    """A non-empty finite sample of a compact subset of one of the spaces.

    ``points`` is an array of shape (N, 3) for RP2, RP2* and S2 (unit
    representatives or normals) and (N, 6) for X and Xhat.
    """

    space: Space
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("a sampled compact needs at least one point")
        if pts.shape[1] != _WIDTH[self.space]:
            raise ValueError("expected %d coordinates for %s" % (_WIDTH[self.space], self.space.value))
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def union(self, other: "SampledCompact") -> "SampledCompact":
        _check(self, other)
        return SampledCompact(self.space, np.vstack([self.points, other.points]))


def _check(a: SampledCompact, b: SampledCompact):
    if a.space is not b.space:
        raise SpaceMismatch("%s vs %s" % (a.space.value, b.space.value))


def pair_dist(space: Space, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Metric of the space between broadcast arrays of coordinates."""
    if space in (Space.RP2, Space.RP2_DUAL):
        return pg.proj_angle(a, b)
    if space is Space.S2:
        return pg.sphere_angle(a, b)
    if space is Space.X:
        return pg.flag_dist_array(a, b)
    return pg.oriented_dist_array(a, b)


def _embed(space: Space, pts: np.ndarray) -> np.ndarray:
    if space in (Space.RP2, Space.RP2_DUAL):
        return np.einsum("ni,nj->nij", pts, pts).reshape(len(pts), 9)
    if space is Space.X:
        return np.hstack([_embed(Space.RP2, pts[:, :3]), _embed(Space.RP2, pts[:, 3:])])
    return pts


def _ball(space: Space, r: np.ndarray) -> np.ndarray:
    """Embedded radius containing every sample within metric distance r."""
    r = np.minimum(r, np.pi)
    if space in (Space.RP2, Space.RP2_DUAL):
        return np.sqrt(2) * np.sin(np.minimum(r, np.pi / 2)) * (1 + 1e-9) + 1e-12
    if space is Space.X:
        return 2.0 * np.sin(np.minimum(r, np.pi / 2)) * (1 + 1e-9) + 1e-12
    if space is Space.S2:
        return 2.0 * np.sin(r / 2) * (1 + 1e-9) + 1e-12
    return 2.0 * np.sqrt(2) * np.sin(r / 2) * (1 + 1e-9) + 1e-12


_BALL_CHUNK = 64
_PAIR_BUDGET = 1_000_000


def nearest_distances(space: Space, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact metric distance from each row of a to the set of rows of b.

    A k-d tree on an isometric-up-to-constants embedding proposes a
    candidate; every sample that could beat it lies in an embedded ball of
    known radius, so the refinement is exact.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if len(b) * len(a) <= 4_000_000:
        out = np.empty(len(a))
        step = max(1, 2_000_000 // max(1, len(b)))
        for i in range(0, len(a), step):
            out[i:i + step] = pair_dist(space, a[i:i + step, None, :], b[None, :, :]).min(axis=1)
        return out
    tree = cKDTree(_embed(space, b))
    ea = _embed(space, a)
    _, idx = tree.query(ea, k=1)
    out = pair_dist(space, a, b[idx])
    radii = _ball(space, out)
    for i in range(0, len(a), _BALL_CHUNK):
        rows = slice(i, i + _BALL_CHUNK)
        cands = tree.query_ball_point(ea[rows], radii[rows])
        sizes = np.fromiter((len(c) for c in cands), dtype=np.intp, count=len(cands))
        # batches of rows with a bounded number of candidate pairs
        start = 0
        while start < len(cands):
            stop = start + 1
            total = sizes[start]
            while stop < len(cands) and total + sizes[stop] <= _PAIR_BUDGET:
                total += sizes[stop]
                stop += 1
            if total:
                owner = np.repeat(np.arange(i + start, i + stop), sizes[start:stop])
                idx_b = np.concatenate([np.asarray(c, dtype=np.intp) for c in cands[start:stop]])
                for k in range(0, len(owner), _PAIR_BUDGET):
                    o = owner[k:k + _PAIR_BUDGET]
                    np.minimum.at(out, o, pair_dist(space, a[o], b[idx_b[k:k + _PAIR_BUDGET]]))
            start = stop
    return out


def hausdorff(a: SampledCompact, b: SampledCompact) -> float:
    """Symmetrized max-min distance between the two samples."""
    _check(a, b)
    return float(max(nearest_distances(a.space, a.points, b.points).max(),
                     nearest_distances(a.space, b.points, a.points).max()))


def one_sided(a: SampledCompact, b: SampledCompact) -> float:
    """max over a of the distance to b."""
    _check(a, b)
    return float(nearest_distances(a.space, a.points, b.points).max())


def covers_net(a: SampledCompact, target: SampledCompact | Callable[[float], SampledCompact], delta: float) -> bool:
    """True iff every point of the target net is within delta of a."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    net = target(delta) if callable(target) else target
    _check(a, net)
    return bool(nearest_distances(a.space, net.points, a.points).max() <= delta)


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving; roots are minimal indices."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        # keep the smaller index as root so labels do not depend on merge order
        if ri < rj:
            self.parent[rj] = ri
        else:
            self.parent[ri] = rj


def close_pairs(space: Space, pts: np.ndarray, delta: float) -> np.ndarray:
    """All index pairs (i < j) at metric distance <= delta."""
    tree = cKDTree(_embed(space, pts))
    pairs = tree.query_pairs(float(_ball(space, np.array(delta))), output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    d = pair_dist(space, pts[pairs[:, 0]], pts[pairs[:, 1]])
    return pairs[d <= delta]


def components(a: SampledCompact, delta: float) -> tuple[np.ndarray, int]:
    """Single-linkage clusters at scale delta.

    Labels are 0..count-1, numbered by the smallest sample index of each
    cluster.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    uf = UnionFind(len(a))
    pairs = close_pairs(a.space, a.points, delta)
    for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else []:
        uf.union(int(i), int(j))
    roots = np.array([uf.find(i) for i in range(len(a))])
    uniq = np.unique(roots)  # sorted, and every root is its cluster's minimum
    labels = np.searchsorted(uniq, roots)
    return labels, len(uniq)


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, a: SampledCompact) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in a.points:
            w.writerow([a.space.value] + [fmt(v) for v in row])


_SPACE_TAGS = {s.value for s in Space}


def read_csv(path) -> SampledCompact:
    """Space-tagged rows, or limit-set rows (word, 6 coordinates, tag, parameter)."""
    rows = []
    space = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if row[0] not in _SPACE_TAGS:
                if len(row) != 9 or row[7] not in ("alpha", "beta"):
                    raise ValueError("line %d: unknown space tag %r" % (lineno, row[0]))
                row = [Space.X.value] + row[1:7]
            tag = Space(row[0])
            if space is None:
                space = tag
            elif tag is not space:
                raise SpaceMismatch("line %d: mixed space tags" % lineno)
            rows.append([float(v) for v in row[1:]])
    if space is None:
        raise ValueError("empty file")
    return SampledCompact(space, np.array(rows))


def from_elements(space: Space, items: Iterable) -> SampledCompact:
    """Build a sample from ProjPoint / ProjLine / Flag / OrientedFlag values."""
    rows = []
    for x in items:
        if isinstance(x, pg.ProjPoint):
            rows.append(x.rep)
        elif isinstance(x, pg.ProjLine):
            rows.append(x.normal)
        else:
            rows.append(x.to_array())
    return SampledCompact(space, np.array(rows))
