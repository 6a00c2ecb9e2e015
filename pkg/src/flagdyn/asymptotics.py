"""Cartan decomposition and the asymptotic types of divergent sequences."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .projgeo import GroupElement

RHO_EIG = 1e-8
RATIO_INFINITE = 1e6
STABLE_REL = 0.01
DEFAULT_N_PROBE = 5
DEFECT_CLUSTER = 1e-6
DEFECT_RANK = 1e-7

Sequence_ = Callable[[int], Union[GroupElement, np.ndarray]]


class NotRealDiagonalizable(ValueError):
    """Complex or defective spectrum: the iterate classification does not apply."""


class AsymptoticType(enum.Enum):
    UNBALANCED_ALPHA = "unbalanced_alpha"
    UNBALANCED_BETA = "unbalanced_beta"
    BALANCED = "balanced"


class Undetermined(enum.Enum):
    UNDETERMINED = "undetermined"


UNDETERMINED = Undetermined.UNDETERMINED


@dataclass(frozen=True)
class CartanTriple:
    """g = k . Diag(a) . l with k, l orthogonal and a descending, product 1."""

    k: np.ndarray
    a: np.ndarray
    l: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.k @ np.diag(self.a) @ self.l


@dataclass(frozen=True)
class Bounded:
    pass


@dataclass(frozen=True)
class NotSimple:
    pass


@dataclass(frozen=True)
class Simple:
    type: AsymptoticType
    loxodromic: bool


def cartan(g: GroupElement | np.ndarray) -> CartanTriple:
    """KAK factors through the singular value decomposition.

    Plain arrays need not be normalized or well conditioned.
    """
    m = as_array(g)
    u, s, vt = np.linalg.svd(m)
    # |det|^(1/3) from the singular values; numerically singular arrays
    # (long products) keep their dominant directions
    with np.errstate(divide="ignore"):
        scale = np.exp(np.mean(np.log(s)))
    if not np.isfinite(scale) or scale == 0:
        scale = s[0]
    return CartanTriple(u, s / scale, vt)


def cartan_projection(g: GroupElement | np.ndarray) -> np.ndarray:
    return cartan(g).a


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= RHO_EIG * max(abs(a), abs(b))


def _defective(m: np.ndarray, w: np.ndarray) -> bool:
    """Some eigenvalue cluster has fewer independent eigenvectors than members.

    A Jordan block splits its eigenvalue by about sqrt(eps) under rounding,
    so clusters are formed with a loose relative tolerance and the geometric
    multiplicity is read off the singular values of m - lambda.
    """
    scale = np.abs(w).max()
    norm = np.linalg.norm(m, 2)
    for lam in w:
        close = np.abs(w - lam) <= DEFECT_CLUSTER * scale
        mult = int(close.sum())
        if mult < 2:
            continue
        sv = np.linalg.svd(m - w[close].mean() * np.eye(3), compute_uv=False)
        if int((sv <= DEFECT_RANK * norm).sum()) < mult:
            return True
    return False


def classify_iterates(g: GroupElement) -> Bounded | NotSimple | Simple:
    """Asymptotic behaviour of the iterates of g from its eigenvalues."""
    m = g.mat
    w = np.linalg.eigvals(m)
    scale = np.abs(w).max()
    if np.any(np.abs(w.imag) > RHO_EIG * scale):
        raise NotRealDiagonalizable("complex eigenvalues")
    w = w.real
    if _defective(m, w):
        raise NotRealDiagonalizable("defective matrix")
    order = np.argsort(-np.abs(w))
    w = w[order]
    a, b, c = np.abs(w)
    if _same(a, b) and _same(b, c):
        return Bounded()
    if not np.all(np.sign(w) == np.sign(w[0])):
        return NotSimple()
    if _same(b, c):
        return Simple(AsymptoticType.UNBALANCED_ALPHA, False)
    if _same(a, b):
        return Simple(AsymptoticType.UNBALANCED_BETA, False)
    return Simple(AsymptoticType.BALANCED, True)


def is_loxodromic(g: GroupElement) -> bool:
    try:
        r = classify_iterates(g)
    except NotRealDiagonalizable:
        return False
    return isinstance(r, Simple) and r.loxodromic


def _ratio_kind(values: Sequence[float]) -> str:
    last = list(values[-3:])
    if last[-1] > RATIO_INFINITE and last[0] < last[1] < last[2]:
        return "inf"
    ref = last[-1]
    if all(abs(x - ref) <= STABLE_REL * ref for x in last):
        return "bounded"
    return "unknown"


def probe_indices(n_probe: int = DEFAULT_N_PROBE) -> list[int]:
    """Geometric probe schedule 4, 8, 16, ... with n_probe entries."""
    if n_probe < 3:
        raise ValueError("need at least 3 probes")
    return [4 * 2 ** k for k in range(n_probe)]


def ratio_profile(seq: Sequence_, n_probe: int = DEFAULT_N_PROBE,
                  inverse: Sequence_ | None = None) -> tuple[list[float], list[float]]:
    """Singular value ratios a1/a2 and a2/a3 at the probe indices.

    a2/a3 is the top ratio of the inverse; when ``inverse`` (computed
    independently) is given it is read there, which stays accurate after a3
    has dropped below the rounding level of the product.
    """
    r1, r2 = [], []
    for n in probe_indices(n_probe):
        a = cartan(seq(n)).a
        r1.append(a[0] / a[1])
        if inverse is None:
            r2.append(a[1] / a[2])
        else:
            b = cartan(inverse(n)).a
            r2.append(b[0] / b[1])
    return r1, r2


def classify_sequence(seq: Sequence_, n_probe: int = DEFAULT_N_PROBE,
                      inverse: Sequence_ | None = None) -> AsymptoticType | Undetermined:
    """Heuristic limit test on the singular value ratios at geometric probes.

    A ratio counts as divergent once it exceeds ``RATIO_INFINITE`` while
    increasing over the last three probes, and as bounded when the last
    three values agree within 1%. Polynomially diverging ratios need a
    longer schedule (larger ``n_probe``) to be decided. See ratio_profile
    for ``inverse``.
    """
    r1, r2 = ratio_profile(seq, n_probe, inverse)
    k1, k2 = _ratio_kind(r1), _ratio_kind(r2)
    if k1 == "inf" and k2 == "inf":
        return AsymptoticType.BALANCED
    if k1 == "inf" and k2 == "bounded":
        return AsymptoticType.UNBALANCED_ALPHA
    if k1 == "bounded" and k2 == "inf":
        return AsymptoticType.UNBALANCED_BETA
    return UNDETERMINED


def invert_type(t: AsymptoticType) -> AsymptoticType:
    if t is AsymptoticType.UNBALANCED_ALPHA:
        return AsymptoticType.UNBALANCED_BETA
    if t is AsymptoticType.UNBALANCED_BETA:
        return AsymptoticType.UNBALANCED_ALPHA
    return t


def as_array(g: GroupElement | np.ndarray) -> np.ndarray:
    return g.mat if isinstance(g, GroupElement) else np.asarray(g, dtype=float)


def inverse_sequence(seq: Sequence_) -> Sequence_:
    def inv(n: int):
        g = seq(n)
        return g.inv() if isinstance(g, GroupElement) else np.linalg.inv(g)
    return inv


def power_sequence(g: GroupElement) -> Sequence_:
    """n -> g^n by repeated squaring, as an array scaled to max entry 1.

    Arrays rather than GroupElements: high powers have determinants below
    the double range while their dominant directions stay accurate.
    """
    def seq(n: int) -> np.ndarray:
        if n < 0:
            return power_sequence(g.inv())(-n)
        result = np.eye(3)
        base = g.mat.copy()
        while n:
            if n & 1:
                result = result @ base
                result /= np.abs(result).max()
            base = base @ base
            base /= np.abs(base).max()
            n >>= 1
        return result
    return seq
