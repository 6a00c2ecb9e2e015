"""Schottky subgroups of PGL(3): ping-pong certificates on tube handlebodies,
reduced words, limit-set clouds and reduction to a fundamental domain.

Handlebodies are metric tubes of radius rho around the repulsive and
attractive bouquets of the generators. A certificate checks, on a sampled net
of X plus sampled tube boundaries, that g_i maps the complement of the open
tube around B_i^- into the tube around B_i^+, and symmetrically for g_i^-1.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import projgeo as pg
from .asymptotics import UNDETERMINED, NotRealDiagonalizable, NotSimple, Simple, classify_iterates
from .compactsets import SampledCompact, Space, components
from .limit_objects import Bouquet, NonConvergent, attractive_flag_of_sequence, lox_objects
from .projgeo import Flag, GroupElement, ProjPoint
from .serialize import fmt

GENERAL_POSITION_TOL = 1e-8
DEFAULT_RADIUS_GRID = tuple(np.round(np.arange(0.40, 0.0499, -0.025), 3))
BOUQUET_SAMPLES = 2000
BISECTION_STEPS = 40
REACH_TOL = 1e-6  # tolerated amplified rounding error in the reduction
RAY_PROBES = 3  # probes 4, 8, 16; longer rays underflow the determinant


class NotHyperbolic(ValueError):
    pass


class NegativeEigenvalues(ValueError):
    pass


class NotGeneralPosition(ValueError):
    def __init__(self, pair, detail):
        super().__init__("generators %d and %d: %s" % (pair[0], pair[1], detail))
        self.pair = pair


class NoCertificateFound(RuntimeError):
    def __init__(self, r_max):
        super().__init__("no certificate with uniform exponent r <= %d" % r_max)
        self.r_max = r_max


class NearLimitSet(RuntimeError):
    def __init__(self, max_steps, word=None, flag=None, reason="steps"):
        if reason == "steps":
            msg = "reduction did not terminate within %d steps" % max_steps
        else:
            msg = "reduction lost numerical accuracy after %d letters" % len(word or ())
        super().__init__(msg)
        self.max_steps = max_steps
        self.reason = reason
        self.word = word
        self.flag = flag


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class Generator:
    element: GroupElement
    from_sl2: bool
    objects: object  # BalancedObjects


def _sl2(h) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(2, 2)
    det = np.linalg.det(h)
    if det <= 0:
        raise pg.SingularInput("SL(2) input needs positive determinant")
    return h / np.sqrt(det)


def validate_generators(inputs: Sequence, kinds: Sequence[str] | None = None) -> list[Generator]:
    """Check hyperbolicity and pairwise general position of the attracting
    and repelling flags.

    ``inputs`` are 2x2 (SL(2), embedded by j) or 3x3 matrices, or
    GroupElements; ``kinds`` may force "sl2" / "pgl3" per entry.
    """
    gens = []
    for i, h in enumerate(inputs):
        kind = kinds[i] if kinds else None
        if isinstance(h, GroupElement):
            m, kind = h.mat, kind or "pgl3"
        else:
            m = np.asarray(h, dtype=float)
            kind = kind or ("sl2" if m.size == 4 else "pgl3")
        if kind == "sl2":
            h2 = _sl2(m)
            tr = float(np.trace(h2))
            if abs(tr) <= 2 + 1e-12:
                raise NotHyperbolic("generator %d: |trace| = %.6g <= 2" % (i + 1, abs(tr)))
            if tr < 0:
                raise NegativeEigenvalues("generator %d: negative eigenvalues" % (i + 1))
            g = pg.embed_j(h2)
        else:
            g = GroupElement(m.reshape(3, 3))
            try:
                t = classify_iterates(g)
            except NotRealDiagonalizable as exc:
                raise NotHyperbolic("generator %d: %s" % (i + 1, exc)) from exc
            if not isinstance(t, Simple):
                if isinstance(t, NotSimple):
                    raise NegativeEigenvalues("generator %d: eigenvalues of mixed signs" % (i + 1))
                raise NotHyperbolic("generator %d is elliptic or trivial" % (i + 1))
            if not t.loxodromic:
                raise NotHyperbolic("generator %d is not loxodromic" % (i + 1))
        gens.append(Generator(g, kind == "sl2", lox_objects(g)))
    flags = []
    for i, gen in enumerate(gens):
        flags += [(i, gen.objects.x_minus), (i, gen.objects.x_plus)]
    for a in range(len(flags)):
        for b in range(a + 1, len(flags)):
            (i, x), (j, y) = flags[a], flags[b]
            if i == j:
                continue
            for p, d in ((x.point, y.line), (y.point, x.line)):
                off = float(np.arcsin(min(1.0, abs(float(p.rep @ d.normal)))))
                if off <= GENERAL_POSITION_TOL:
                    raise NotGeneralPosition((i + 1, j + 1), "a fixed point lies on a fixed line")
    return gens


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class PingPongCertificate:
    margin: float
    sample_density: float
    exponents: tuple[int, ...]
    checked_pairs: int
    tube_radius: float
    net_size: int
    boundary_size: int
    separation: float  # smallest distance between two different bouquets


@dataclass(frozen=True)
class FailureReport:
    check: str
    generator: int
    direction: int
    worst_sample: np.ndarray | None
    slack: float
    exponents: tuple[int, ...]
    tube_radius: float

    @property
    def margin(self) -> float:
        return self.slack


def _bouquets(gens: Sequence[Generator]) -> list[tuple[Bouquet, Bouquet]]:
    return [(g.objects.B_minus, g.objects.B_plus) for g in gens]


def bouquet_separation(a: Bouquet, b: Bouquet, m: int = BOUQUET_SAMPLES) -> float:
    """Distance between two bouquets: closed form to b over a dense sample of a."""
    d1 = float(b.distance(a.sample(m)).min())
    d2 = float(a.distance(b.sample(m)).min())
    return min(d1, d2)


def _interpolate(x: np.ndarray, c: np.ndarray, t: np.ndarray) -> np.ndarray:
    """A path of flags from rows of x (t=0) to the flag c (t=1)."""
    sp = np.where((x[:, :3] @ c[:3]) < 0, -1.0, 1.0)[:, None]
    sn = np.where((x[:, 3:] @ c[3:]) < 0, -1.0, 1.0)[:, None]
    p = (1 - t)[:, None] * x[:, :3] * sp + t[:, None] * c[:3]
    n = (1 - t)[:, None] * x[:, 3:] * sn + t[:, None] * c[3:]
    return pg.make_flags(p, n)


def tube_boundary(b: Bouquet, radius: float, candidates: np.ndarray) -> np.ndarray:
    """Points at distance exactly ``radius`` from b, by bisection from the
    candidates (outside the tube) toward the wedge point."""
    c = b.center.to_array()
    d = b.distance(candidates)
    x = candidates[d >= radius]
    if len(x) == 0:
        return np.empty((0, 6))
    lo = np.zeros(len(x))
    hi = np.ones(len(x))
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        inside = b.distance(_interpolate(x, c, mid)) < radius
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return _interpolate(x, c, lo)


class _Geometry:
    """Per-generator data shared by all (r, rho) checks of a sweep."""

    def __init__(self, gens: Sequence[Generator], density: float):
        self.gens = list(gens)
        self.density = density
        self.net = pg.flag_net(density)
        self.bouquets = _bouquets(gens)
        self.dist_to = [(bm.distance(self.net), bp.distance(self.net)) for bm, bp in self.bouquets]
        all_b = [b for pair in self.bouquets for b in pair]
        self.separation = min(bouquet_separation(all_b[i], all_b[j])
                              for i in range(len(all_b)) for j in range(i + 1, len(all_b)))
        self._boundary = {}

    def boundary(self, i: int, eps: int, radius: float) -> np.ndarray:
        key = (i, eps, radius)
        if key not in self._boundary:
            b = self.bouquets[i][0 if eps < 0 else 1]
            d = self.dist_to[i][0 if eps < 0 else 1]
            near = self.net[(d >= radius) & (d < radius + 3 * self.density)]
            self._boundary[key] = tube_boundary(b, radius, near)
        return self._boundary[key]


def _check(geo: _Geometry, exponents: Sequence[int], radius: float) -> PingPongCertificate | FailureReport:
    exps = tuple(int(r) for r in exponents)
    slack_sep = geo.separation - 2 * radius
    if slack_sep <= 0:
        return FailureReport("tubes_disjoint", 0, 0, None, slack_sep, exps, radius)
    worst = (slack_sep, None)
    pairs = 0
    n_boundary = 0
    for i, (gen, r) in enumerate(zip(geo.gens, exps)):
        gr = gen.element ** r
        for eps, g in ((1, gr), (-1, gr.inv())):
            # g^eps maps X minus Int H^{-eps} into H^{eps}
            src = -eps
            d_src = geo.dist_to[i][0 if src < 0 else 1]
            outside = geo.net[d_src >= radius]
            bnd = geo.boundary(i, src, radius)
            n_boundary += len(bnd)
            samples = np.vstack([outside, bnd])
            target = geo.bouquets[i][0 if eps < 0 else 1]
            img = pg.act_flags_array(g.mat, samples)
            dist = target.distance(img)
            k = int(np.argmax(dist))
            slack = radius - float(dist[k])
            pairs += len(samples)
            if slack <= 0:
                return FailureReport("maps_into_tube", i + 1, eps, samples[k], slack, exps, radius)
            if slack < worst[0]:
                worst = (slack, samples[k])
    return PingPongCertificate(float(worst[0]), geo.density, exps, pairs, float(radius),
                               len(geo.net), n_boundary, float(geo.separation))


def certify_pingpong(gens: Sequence[Generator], exponents: Sequence[int], tube_radius: float,
                     density: float = 0.05) -> PingPongCertificate | FailureReport:
    """Sampled ping-pong certificate for the given exponents and tube radius."""
    if len(exponents) != len(gens):
        raise ValueError("one exponent per generator")
    return _check(_Geometry(gens, density), exponents, tube_radius)


def search_exponents(gens: Sequence[Generator], r_max: int = 16,
                     radius_grid: Sequence[float] = DEFAULT_RADIUS_GRID,
                     density: float = 0.05) -> tuple[tuple[int, ...], float, PingPongCertificate]:
    """Smallest uniform exponent r <= r_max certifying with some grid radius.

    Scan order: r ascending, then radius in the given (descending) order.
    """
    geo = _Geometry(gens, density)
    for r in range(1, r_max + 1):
        for rho in radius_grid:
            res = _check(geo, [r] * len(gens), float(rho))
            if isinstance(res, PingPongCertificate):
                return res.exponents, float(rho), res
    raise NoCertificateFound(r_max)


# ---------------------------------------------------------------------------
# words


@dataclass(frozen=True)
class Word:
    """Letters (generator index starting at 1, sign +1/-1), read left to right."""

    letters: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple((int(i), int(s)) for i, s in self.letters))
        for i, s in self.letters:
            if i < 1 or s not in (1, -1):
                raise ValueError("bad letter (%d, %d)" % (i, s))

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return "".join("%d%s" % (i, "+" if s > 0 else "-") for i, s in self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return reduce(Word(self.letters + other.letters))

    def inverse(self) -> "Word":
        return Word(tuple((i, -s) for i, s in reversed(self.letters)))

    def is_reduced(self) -> bool:
        return all(not (a[0] == b[0] and a[1] == -b[1]) for a, b in zip(self.letters, self.letters[1:]))

    @staticmethod
    def parse(text: str) -> "Word":
        letters, num = [], ""
        for ch in text.strip():
            if ch.isdigit():
                num += ch
            elif ch in "+-" and num:
                letters.append((int(num), 1 if ch == "+" else -1))
                num = ""
            else:
                raise ValueError("cannot parse word %r" % text)
        if num:
            raise ValueError("cannot parse word %r" % text)
        return Word(tuple(letters))


def reduce(word: Word) -> Word:
    """Free reduction: cancel adjacent inverse pairs until none remain."""
    out: list[tuple[int, int]] = []
    for letter in word.letters:
        if out and out[-1][0] == letter[0] and out[-1][1] == -letter[1]:
            out.pop()
        else:
            out.append(letter)
    return Word(tuple(out))


def alphabet(d: int) -> list[tuple[int, int]]:
    """Letters in lexicographic order: 1+, 1-, 2+, 2-, ..."""
    return [(i, s) for i in range(1, d + 1) for s in (1, -1)]


def enumerate_reduced(d: int, n: int) -> Iterator[Word]:
    """All 2d(2d-1)^(n-1) reduced words of length n, lexicographically."""
    if n == 0:
        yield Word()
        return
    letters = alphabet(d)

    def rec(prefix):
        if len(prefix) == n:
            yield Word(tuple(prefix))
            return
        for a in letters:
            if prefix and prefix[-1][0] == a[0] and prefix[-1][1] == -a[1]:
                continue
            prefix.append(a)
            yield from rec(prefix)
            prefix.pop()

    yield from rec([])


def word_count(d: int, n: int) -> int:
    return 1 if n == 0 else 2 * d * (2 * d - 1) ** (n - 1)


# ---------------------------------------------------------------------------
# groups


@dataclass(frozen=True, eq=False)
class SchottkyGroup:
    """Generators already raised to their exponents, with their tubes."""

    generators: tuple[GroupElement, ...]
    base: tuple[Generator, ...]
    exponents: tuple[int, ...]
    bouquets: tuple[tuple[Bouquet, Bouquet], ...]
    tube_radius: float
    certificate: PingPongCertificate | None = None
    boundary_samples: tuple = field(default=(), repr=False)
    seed: int = 0

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def from_sl2(self) -> bool:
        return all(g.from_sl2 for g in self.base)

    def letter(self, a: tuple[int, int]) -> GroupElement:
        g = self.generators[a[0] - 1]
        return g if a[1] > 0 else g.inv()

    def bouquet_of(self, a: tuple[int, int]) -> Bouquet:
        """The attractive bouquet of the letter (B_i^+ for i+, B_i^- for i-)."""
        return self.bouquets[a[0] - 1][1 if a[1] > 0 else 0]


def build_group(gens: Sequence[Generator], exponents: Sequence[int], tube_radius: float,
                certificate: PingPongCertificate | None = None, density: float = 0.05,
                seed: int = 0, boundary: bool = False) -> SchottkyGroup:
    exps = tuple(int(r) for r in exponents)
    powered = tuple(g.element ** r for g, r in zip(gens, exps))
    bnd = ()
    if boundary:
        geo = _Geometry(gens, density)
        bnd = tuple((geo.boundary(i, -1, tube_radius), geo.boundary(i, 1, tube_radius))
                    for i in range(len(gens)))
    return SchottkyGroup(powered, tuple(gens), exps, tuple(_bouquets(gens)), float(tube_radius),
                         certificate, bnd, seed)


def certified_group(inputs: Sequence, exponents: Sequence[int] | None = None, tube_radius: float | None = None,
                    r_max: int = 16, density: float = 0.05, seed: int = 0) -> SchottkyGroup:
    """Validate, then certify (searching exponents and radius when not given)."""
    gens = validate_generators(inputs)
    if exponents is None or tube_radius is None:
        grid = DEFAULT_RADIUS_GRID if tube_radius is None else (tube_radius,)
        if exponents is None:
            exponents, tube_radius, cert = search_exponents(gens, r_max, grid, density)
        else:
            geo = _Geometry(gens, density)
            for rho in grid:
                cert = _check(geo, exponents, float(rho))
                if isinstance(cert, PingPongCertificate):
                    tube_radius = float(rho)
                    break
            else:
                raise NoCertificateFound(max(exponents))
    else:
        cert = certify_pingpong(gens, exponents, tube_radius, density)
        if isinstance(cert, FailureReport):
            cert = None
    return build_group(gens, exponents, tube_radius, cert, density, seed)


def _product(group: SchottkyGroup, word: Word) -> np.ndarray:
    m = np.eye(3)
    for a in word.letters:
        m = m @ group.letter(a).mat
        m /= np.abs(m).max()
    return m


def evaluate(group: SchottkyGroup, word: Word) -> GroupElement:
    """Product of the letters, left to right, renormalized after each step.

    Long words are numerically singular (SingularInput); act with
    ``act_word`` instead.
    """
    return GroupElement(_product(group, word))


def act_word(group: SchottkyGroup, word: Word, f: np.ndarray) -> np.ndarray:
    """evaluate(word) applied to flag rows, one letter at a time (right to left)."""
    out = np.atleast_2d(np.asarray(f, dtype=float))
    for a in reversed(word.letters):
        out = pg.act_flags_array(group.letter(a).mat, out)
    return out


# ---------------------------------------------------------------------------
# limit sets


@dataclass(frozen=True)
class LimitEntry:
    word: Word
    p_plus: ProjPoint
    bouquet: Bouquet
    line_parameter: float | None  # angle of p_plus on [e1, e2] for j(SL2) groups
    cauchy_error: float
    converged: bool


@dataclass(frozen=True, eq=False)
class LimitSetCloud:
    depth: int
    entries: tuple[LimitEntry, ...]
    cloud: SampledCompact
    owner: np.ndarray  # entry index of every cloud row
    tags: tuple[str, ...]  # "alpha" or "beta" per row
    params: np.ndarray  # circle parameter per row

    def component_count_at(self, delta: float) -> int:
        return components(self.cloud, delta)[1]


def _ray_objects(group: SchottkyGroup, word: Word, n_probe: int):
    """Attractive flag of the ray w l l l ... with l the last letter of w."""
    last = word.letters[-1]
    head = _product(group, word)
    head_inv = _product(group, word.inverse())
    g = group.letter(last).mat
    gi = group.letter((last[0], -last[1])).mat

    def power(m, k):
        out = np.eye(3)
        for _ in range(k):
            out = out @ m
            out /= np.abs(out).max()
        return out

    # raw arrays: the products are far too ill-conditioned for GroupElement
    seq = lambda k: head @ power(g, k)  # noqa: E731
    inv = lambda k: power(gi, k) @ head_inv  # noqa: E731
    return attractive_flag_of_sequence(seq, n_probe, inverse=inv)


def _entry(group: SchottkyGroup, word: Word, n_probe: int) -> LimitEntry:
    try:
        center, err = _ray_objects(group, word, n_probe)
        converged = True
    except NonConvergent:
        # fall back to the image of the letter's own attractive flag
        converged = False
        err = float("nan")
        x0 = group.bouquet_of(word.letters[-1]).center.to_array()
        center = Flag.from_array(act_word(group, word, x0)[0])
    param = None
    if group.from_sl2:
        p = center.point.rep
        param = float(np.arctan2(p[1], p[0]) % np.pi)
    return LimitEntry(word, center.point, Bouquet(center), param, err, converged)


def _threads(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("FLAGDYN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def default_circle_samples(tube_radius: float) -> int:
    """Circle sampling fine enough that one bouquet is connected at rho/4."""
    return max(32, int(np.ceil(2 * np.pi / (tube_radius / 4))))


def limit_entries(group: SchottkyGroup, depth: int, n_probe: int = RAY_PROBES,
                  workers: int | None = None) -> list[LimitEntry]:
    """Attractive flags of all reduced words of the given length, in word order."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    words = list(enumerate_reduced(group.rank, depth))
    nw = _threads(workers)
    if nw > 1 and len(words) > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            return list(ex.map(lambda w: _entry(group, w, n_probe), words))
    return [_entry(group, w, n_probe) for w in words]


def limit_set(group: SchottkyGroup, depth: int, samples_per_circle: int | None = None,
              n_probe: int = RAY_PROBES, workers: int | None = None) -> LimitSetCloud:
    """Attractive bouquets of all reduced words of the given length.

    Words are processed in parallel; the output order is the lexicographic
    word order whatever the number of workers.
    """
    m = samples_per_circle or default_circle_samples(group.tube_radius)
    entries = limit_entries(group, depth, n_probe, workers)
    rows, owner, tags, params = [], [], [], []
    theta = np.arange(m) * np.pi / m
    for k, e in enumerate(entries):
        rows.append(e.bouquet.sample(m))
        owner.append(np.full(2 * m, k))
        tags += ["alpha"] * m + ["beta"] * m
        params.append(np.concatenate([theta, theta]))
    cloud = SampledCompact(Space.X, np.vstack(rows))
    return LimitSetCloud(depth, tuple(entries), cloud, np.concatenate(owner), tuple(tags),
                         np.concatenate(params))


def write_limit_csv(ls: LimitSetCloud, out) -> None:
    """Rows: word, 6 flag coordinates, bouquet tag, circle parameter."""
    own = isinstance(out, (str, os.PathLike))
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        for row, k, tag, t in zip(ls.cloud.points, ls.owner, ls.tags, ls.params):
            w.writerow([str(ls.entries[k].word)] + [fmt(v) for v in row] + [tag, fmt(t)])
    finally:
        if own:
            fh.close()


def limit_csv_text(ls: LimitSetCloud) -> str:
    buf = io.StringIO()
    write_limit_csv(ls, buf)
    return buf.getvalue()


def prefix_contraction(group: SchottkyGroup, words: Sequence[Word], depth_max: int,
                       rng: np.random.Generator, extensions: int = 4,
                       n_probe: int = RAY_PROBES) -> tuple[float, float, np.ndarray]:
    """Fit |p_plus(w) - p_plus(w')| <= C lambda^n over prefixes.

    For each word and each length n <= depth_max, the largest distance between
    the attractive point of the length-n prefix and those of random
    one-letter extensions is recorded; returns (lambda, C, per-depth maxima).
    """
    letters = alphabet(group.rank)
    worst = np.zeros(depth_max)
    for w in words:
        for n in range(1, depth_max + 1):
            pre = Word(w.letters[:n])
            if len(pre) < n:
                break
            base = _entry(group, pre, n_probe).p_plus
            opts = [a for a in letters if not (a[0] == pre.letters[-1][0] and a[1] == -pre.letters[-1][1])]
            for j in rng.choice(len(opts), size=min(extensions, len(opts)), replace=False):
                ext = _entry(group, Word(pre.letters + (opts[j],)), n_probe).p_plus
                worst[n - 1] = max(worst[n - 1], pg.dist(base, ext))
    n = np.arange(1, depth_max + 1)
    ok = worst > 0
    slope, icpt = np.polyfit(n[ok], np.log(worst[ok]), 1)
    return float(np.exp(slope)), float(np.exp(icpt)), worst


# ---------------------------------------------------------------------------
# fundamental domain


def _penetrations(group: SchottkyGroup, f: np.ndarray) -> list[tuple[float, int, int]]:
    """(depth, index, eps) of every handlebody containing f in its interior.

    H_i^- is the open tube around B_i^-; the attracting side is the exact
    complement {x : g_i^-1 x not in H_i^-}, contained in the tube around B_i^+.
    """
    out = []
    rho = group.tube_radius
    for i, (bm, bp) in enumerate(group.bouquets):
        d_minus = float(bm.distance(f)[0])
        if d_minus < rho:
            out.append((rho - d_minus, i + 1, -1))
        back = pg.act_flags_array(group.generators[i].inv().mat, f[None])
        d_back = float(bm.distance(back)[0])
        if d_back > rho:
            out.append((rho - float(bp.distance(f)[0]), i + 1, 1))
    return out


def _expansion(m: np.ndarray, v: np.ndarray) -> float:
    """Lipschitz constant at v of the induced map v -> m v / |m v| on the sphere."""
    w = m @ v
    nw = np.linalg.norm(w)
    q = w / nw
    j = (np.eye(3) - np.outer(q, q)) @ m @ (np.eye(3) - np.outer(v, v)) / nw
    return float(np.linalg.norm(j, 2))


def reduce_to_fundamental_domain(group: SchottkyGroup, x: Flag, max_steps: int = 100) -> tuple[Word, Flag]:
    """Greedy descent into the closed fundamental domain.

    Returns (w, u) with evaluate(w) x = u. Raises NearLimitSet when the
    descent does not terminate within max_steps, or when the accumulated
    expansion along the descent amplifies rounding error beyond
    REACH_TOL: the outcome is then numerical noise near the limit set.
    """
    f = x.to_array()
    applied: list[tuple[int, int]] = []  # letters in the order applied
    growth = 0.0  # log of the accumulated Lipschitz constant
    budget = np.log(REACH_TOL / np.finfo(float).eps)
    for _ in range(max_steps + 1):
        hits = _penetrations(group, f)
        if not hits:
            w = Word(tuple(reversed(applied)))
            return w, Flag.from_array(f)
        hits.sort(key=lambda h: (-h[0], h[1], h[2]))
        _, i, eps = hits[0]
        # near the repeller apply g_i, near the attractor apply g_i^-1
        letter = (i, 1 if eps < 0 else -1)
        m = group.letter(letter).mat
        growth += np.log(max(_expansion(m, f[:3]), _expansion(np.linalg.inv(m).T, f[3:]), 1.0))
        if growth > budget:
            raise NearLimitSet(max_steps, Word(tuple(reversed(applied))), Flag.from_array(f), "accuracy")
        f = pg.act_flags_array(m, f[None])[0]
        if applied and applied[-1][0] == letter[0] and applied[-1][1] == -letter[1]:
            applied.pop()
        else:
            applied.append(letter)
    raise NearLimitSet(max_steps, Word(tuple(reversed(applied))), Flag.from_array(f))


@dataclass(frozen=True)
class InOmega:
    word: Word


def omega_membership(group: SchottkyGroup, x: Flag, max_steps: int = 100):
    """InOmega(word) when the descent terminates, else UNDETERMINED."""
    try:
        w, _ = reduce_to_fundamental_domain(group, x, max_steps)
    except NearLimitSet:
        return UNDETERMINED
    return InOmega(w)


def in_fundamental_domain(group: SchottkyGroup, f: np.ndarray) -> np.ndarray:
    """Vectorized membership in the closed fundamental domain."""
    f = np.atleast_2d(f)
    ok = np.ones(len(f), dtype=bool)
    rho = group.tube_radius
    for i, (bm, _) in enumerate(group.bouquets):
        ok &= bm.distance(f) >= rho
        back = pg.act_flags_array(group.generators[i].inv().mat, f)
        ok &= bm.distance(back) <= rho
    return ok


def in_letter_tube(group: SchottkyGroup, letter: tuple[int, int], f: np.ndarray) -> np.ndarray:
    return group.bouquet_of(letter).distance(np.atleast_2d(f)) <= group.tube_radius


# ---------------------------------------------------------------------------
# config


def load_config(source) -> dict:
    """Parse a group config (path, JSON text or dict) into validated fields."""
    if isinstance(source, dict):
        obj = source
    else:
        text = source
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source) as fh:
                text = fh.read()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("line %d column %d: %s" % (exc.lineno, exc.colno, exc.msg)) from exc
    if not isinstance(obj, dict) or "generators" not in obj:
        raise ConfigError("field 'generators': missing")
    mats, kinds = [], []
    for k, g in enumerate(obj["generators"]):
        where = "generators[%d]" % k
        if not isinstance(g, dict) or len(g) != 1 or next(iter(g)) not in ("sl2", "pgl3"):
            raise ConfigError("field '%s': expected {\"sl2\": ...} or {\"pgl3\": ...}" % where)
        kind, val = next(iter(g.items()))
        try:
            m = np.asarray(val, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError("field '%s.%s': not numeric" % (where, kind)) from exc
        if m.size != (4 if kind == "sl2" else 9):
            raise ConfigError("field '%s.%s': expected %d numbers" % (where, kind, 4 if kind == "sl2" else 9))
        mats.append(m.reshape(2, 2) if kind == "sl2" else m.reshape(3, 3))
        kinds.append(kind)
    out = {"matrices": mats, "kinds": kinds, "seed": int(obj.get("seed", 0))}
    if "exponents" in obj:
        ex = obj["exponents"]
        if not isinstance(ex, list) or len(ex) != len(mats) or not all(isinstance(r, int) and r > 0 for r in ex):
            raise ConfigError("field 'exponents': expected %d positive integers" % len(mats))
        out["exponents"] = ex
    if "tube_radius" in obj:
        try:
            out["tube_radius"] = float(obj["tube_radius"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("field 'tube_radius': not a number") from exc
    return out


def group_from_config(source, r_max: int = 16, density: float = 0.05,
                      radius: float | None = None) -> SchottkyGroup:
    cfg = load_config(source)
    gens = validate_generators(cfg["matrices"], cfg["kinds"])
    exps = cfg.get("exponents")
    rho = radius if radius is not None else cfg.get("tube_radius")
    if exps is None:
        grid = DEFAULT_RADIUS_GRID if rho is None else (rho,)
        exps, rho, cert = search_exponents(gens, r_max, grid, density)
    elif rho is None:
        geo = _Geometry(gens, density)
        for cand in DEFAULT_RADIUS_GRID:
            cert = _check(geo, exps, float(cand))
            if isinstance(cert, PingPongCertificate):
                rho = float(cand)
                break
        else:
            raise NoCertificateFound(max(exps))
    else:
        cert = certify_pingpong(gens, exps, rho, density)
        if isinstance(cert, FailureReport):
            cert = None
    return build_group(gens, exps, rho, cert, density, cfg["seed"])
