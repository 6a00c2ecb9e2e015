import numpy as np
import pytest
from hypothesis import given

from flagdyn import projgeo as pg
from flagdyn.asymptotics import (UNDETERMINED, AsymptoticType, Bounded, NotRealDiagonalizable, NotSimple, Simple,
                                 cartan, classify_iterates, classify_sequence, invert_type, inverse_sequence,
                                 is_loxodromic, power_sequence)
from flagdyn.limit_objects import MODEL_PROBES, model_sequence
from flagdyn.projgeo import GroupElement

from conftest import rng_of, seeds

BAL, ALPHA, BETA = AsymptoticType.BALANCED, AsymptoticType.UNBALANCED_ALPHA, AsymptoticType.UNBALANCED_BETA


def rotation(rng):
    return pg.random_rotations(rng, 1)[0]


# --- Cartan decomposition


def test_cartan_diagonal():
    assert np.allclose(cartan(GroupElement.diag(4, 2, 1)).a, [2, 1, 0.5], atol=1e-15)


def test_cartan_rotation():
    assert np.allclose(cartan(GroupElement(rotation(np.random.default_rng(0)))).a, 1, atol=1e-14)


@given(seeds)
def test_cartan_invariants(seed):
    g = pg.random_group_elements(rng_of(seed), 1, scale=2.0)[0]
    c = cartan(g)
    err = min(np.abs(c.reconstruct() - s * g.mat).max() for s in (1, -1))
    assert err < 1e-10
    assert c.a[0] >= c.a[1] >= c.a[2] > 0
    assert abs(np.prod(c.a) - 1) < 1e-10
    assert np.abs(c.k.T @ c.k - np.eye(3)).max() < 1e-10
    assert np.abs(c.l.T @ c.l - np.eye(3)).max() < 1e-10


@given(seeds)
def test_cartan_inverse_reverses(seed):
    g = pg.random_group_elements(rng_of(seed), 1, scale=2.0)[0]
    a = cartan(g).a
    assert np.allclose(cartan(g.inv()).a, 1 / a[::-1], rtol=0, atol=1e-9 * a[0])


@given(seeds)
def test_cartan_bi_invariant(seed):
    rng = rng_of(seed)
    g = pg.random_group_elements(rng, 1, scale=2.0)[0]
    k, l = rotation(rng), rotation(rng)
    assert np.abs(cartan(GroupElement(k @ g.mat @ l)).a - cartan(g).a).max() < 1e-9


def test_cartan_of_long_product_keeps_directions():
    # numerically singular arrays still give a usable top direction
    m = np.diag([1e200, 1e-200, 1e-300])
    c = cartan(m)
    assert np.allclose(np.abs(c.k[:, 0]), [1, 0, 0])


# --- iterates


def test_classify_iterates_examples():
    assert classify_iterates(GroupElement.diag(4, 2, 1)) == Simple(BAL, True)
    assert classify_iterates(GroupElement.diag(2, 1, 1)) == Simple(ALPHA, False)
    assert classify_iterates(GroupElement.diag(2, 2, 1)) == Simple(BETA, False)
    assert classify_iterates(GroupElement.diag(-4, 2, 1)) == NotSimple()
    assert classify_iterates(GroupElement.diag(1, 1, 1)) == Bounded()
    assert is_loxodromic(GroupElement.diag(4, 2, 1))


def test_classify_iterates_rejects_outside_hypotheses():
    with pytest.raises(NotRealDiagonalizable):
        classify_iterates(GroupElement([[1, 1, 0], [0, 1, 0], [0, 0, 1]]))
    c, s = np.cos(1.0), np.sin(1.0)
    with pytest.raises(NotRealDiagonalizable):
        classify_iterates(GroupElement([[c, -s, 0], [s, c, 0], [0, 0, 2]]))


@given(seeds)
def test_classify_iterates_conjugation_invariant(seed):
    rng = rng_of(seed)
    h = pg.random_group_elements(rng, 1)[0]
    signs = rng.choice([-1.0, 1.0], size=3)
    mags = rng.permutation([4.0, 2.0, 1.0]) if rng.random() < 0.5 else rng.permutation([3.0, 3.0, 1.0])
    g = GroupElement(np.diag(signs * mags))
    conj = h @ g @ h.inv()
    assert classify_iterates(conj) == classify_iterates(g)


# --- sequences


def test_classify_sequence_models():
    assert classify_sequence(model_sequence("balanced")) is BAL
    assert classify_sequence(model_sequence("alpha"), MODEL_PROBES["alpha"]) is ALPHA
    assert classify_sequence(model_sequence("beta")) is BETA


def test_alpha_model_undetermined_on_short_schedule():
    # ratio n reaches the divergence threshold only for n > 1e6
    assert classify_sequence(model_sequence("alpha")) is UNDETERMINED


def test_invert_type():
    assert invert_type(ALPHA) is BETA
    assert invert_type(BETA) is ALPHA
    assert invert_type(BAL) is BAL


@pytest.mark.parametrize("model", ["balanced", "alpha", "beta"])
def test_inverse_sequence_type(model):
    seq, n = model_sequence(model), MODEL_PROBES[model]
    assert classify_sequence(inverse_sequence(seq), n) is invert_type(classify_sequence(seq, n))


# The balanced and beta models reach condition numbers 2^128 and e^64 at the
# last probe, so rotated copies are not representable in double precision;
# those cases use rate n/4, which stays below condition 1e14.
BI_INVARIANT_FAMILIES = {
    "balanced": (lambda n: GroupElement.diag(np.exp(n / 4), 1.0, np.exp(-n / 4)), 5),
    "alpha": (model_sequence("alpha"), MODEL_PROBES["alpha"]),
    "beta": (lambda n: GroupElement.diag(np.exp(n / 4), np.exp(n / 4), 1.0), 5),
}


@pytest.mark.parametrize("family", sorted(BI_INVARIANT_FAMILIES))
@given(seeds)
def test_classify_sequence_bi_invariant(family, seed):
    rng = rng_of(seed)
    k, l = GroupElement(rotation(rng)), GroupElement(rotation(rng))
    seq, n = BI_INVARIANT_FAMILIES[family]
    t = classify_sequence(seq, n)
    assert t is not UNDETERMINED
    assert classify_sequence(lambda i: k @ seq(i) @ l, n) is t


def test_power_sequence():
    g = GroupElement.diag(4, 2, 1)
    assert np.allclose(GroupElement(power_sequence(g)(10)).mat, (g ** 10).mat)
    assert np.allclose(GroupElement(power_sequence(g)(-3)).mat, (g ** -3).mat)
    assert classify_sequence(power_sequence(g)) is BAL
    assert classify_sequence(lambda n: GroupElement.identity()) is UNDETERMINED


@pytest.mark.parametrize("model", ["balanced", "alpha", "beta"])
@given(seeds)
def test_classify_rotated_models_with_inverse(model, seed):
    # the model rates themselves, with a2/a3 read from the inverse sequence
    rng = rng_of(seed)
    k, l = rotation(rng), rotation(rng)
    a, n = model_sequence(model), MODEL_PROBES[model]
    seq = lambda i: k @ a(i).mat @ l  # noqa: E731
    inv = lambda i: l.T @ np.linalg.inv(a(i).mat) @ k.T  # noqa: E731
    assert classify_sequence(seq, n, inverse=inv) is classify_sequence(a, n)
