import numpy as np
import pytest
from hypothesis import given

from flagdyn import limit_objects as lo
from flagdyn import projgeo as pg
from flagdyn.asymptotics import AsymptoticType, inverse_sequence, power_sequence
from flagdyn.compactsets import Space
from flagdyn.projgeo import Flag, GroupElement, ProjLine, ProjPoint

from conftest import rng_of, seeds

E1, E2, E3 = np.eye(3)
P = ProjPoint
L = ProjLine


def close(a, b, tol=1e-10):
    return pg.dist(a, b) <= tol


def same_descriptor(a, b, tol=1e-8):
    if type(a) is not type(b):
        return False
    if isinstance(a, lo.WholeSpace):
        return a.space is b.space
    (fa,), (fb,) = [[getattr(d, f) for f in d.__dataclass_fields__] for d in (a, b)]
    return pg.dist(fa, fb) <= tol


def rot(rng):
    return pg.random_rotations(rng, 1)[0]


# --- loxodromic elements


def test_lox_objects_diagonal():
    o = lo.lox_objects(GroupElement.diag(4, 2, 1))
    assert close(o.p_plus, P(*E1)) and close(o.p_saddle, P(*E2)) and close(o.p_minus, P(*E3))
    assert close(o.D_minus, L(*E1)) and close(o.D_plus, L(*E3))
    assert close(o.x_plus, Flag(P(*E1), L(*E3))) and o.B_plus.alpha_circle is o.x_plus.point


def test_lox_objects_symmetric_pair_generator():
    h = np.array([[1.25, 0.75], [0.75, 1.25]])
    o = lo.lox_objects(pg.embed_j(h))
    # oracle: orthonormal eigenvectors of the symmetric block, ascending eigenvalues
    w, v = np.linalg.eigh(h)
    assert np.allclose(w, [0.5, 2.0])
    assert close(o.p_minus, P(*v[:, 0], 0)) and close(o.p_plus, P(*v[:, 1], 0))
    assert close(o.p_plus, P(1, 1, 0)) and close(o.p_minus, P(1, -1, 0)) and close(o.p_saddle, P(*E3))


@given(seeds)
def test_lox_objects_of_inverse_swap(seed):
    rng = rng_of(seed)
    h = pg.random_group_elements(rng, 1)[0]
    g = h @ GroupElement.diag(4, 2, 1) @ h.inv()
    a, b = lo.lox_objects(g), lo.lox_objects(g.inv())
    assert close(a.p_plus, b.p_minus, 1e-8) and close(a.p_minus, b.p_plus, 1e-8)
    assert close(a.D_plus, b.D_minus, 1e-8) and close(a.D_minus, b.D_plus, 1e-8)
    assert close(a.p_saddle, b.p_saddle, 1e-8)


def test_lox_objects_rejects_non_loxodromic():
    with pytest.raises(lo.NotLoxodromic):
        lo.lox_objects(GroupElement.diag(2, 1, 1))
    with pytest.raises(lo.NotLoxodromic):
        lo.lox_objects(GroupElement([[1, 1, 0], [0, 1, 0], [0, 0, 1]]))


# --- balanced sequences


def test_balanced_model_objects_exact():
    o = lo.balanced_objects_of_sequence(lo.model_sequence("balanced"))
    assert np.array_equal(np.abs(o.p_plus.rep), E1)
    assert close(o.D_plus, L(*E3), 0) and close(o.p_minus, P(*E3), 0) and close(o.D_minus, L(*E1), 0)


@given(seeds)
def test_power_sequence_matches_lox_objects(seed):
    rng = rng_of(seed)
    h = pg.random_group_elements(rng, 1)[0]
    g = h @ GroupElement.diag(4, 2, 1) @ h.inv()
    ref = lo.lox_objects(g)
    est = lo.balanced_objects_of_sequence(power_sequence(g), inverse=power_sequence(g.inv()))
    for name in ("p_plus", "p_minus", "p_saddle", "D_plus", "D_minus"):
        assert close(getattr(est, name), getattr(ref, name), 1e-6), name


@given(seeds)
def test_balanced_perturbation_covariance(seed):
    # g_n = k a_n l: objects are k- and l^-1-translates of the diagonal ones
    rng = rng_of(seed)
    k, l = rot(rng), rot(rng)
    a = lo.model_sequence("balanced")
    # raw arrays: the rotated products are numerically singular
    seq = lambda n: k @ a(n).mat @ l  # noqa: E731
    inv = lambda n: l.T @ np.diag(1 / np.diag(a(n).mat)) @ k.T  # noqa: E731
    o = lo.balanced_objects_of_sequence(seq, inverse=inv)
    assert close(o.p_plus, P(*k @ E1), 1e-9) and close(o.D_plus, L(*k @ E3), 1e-9)
    assert close(o.p_minus, P(*l.T @ E3), 1e-9) and close(o.D_minus, L(*l.T @ E1), 1e-9)


def test_left_translate_of_power_sequence():
    rng = np.random.default_rng(3)
    k0 = GroupElement(rot(rng))
    g = GroupElement.diag(4, 2, 1)
    ref = lo.lox_objects(g)
    o = lo.balanced_objects_of_sequence(lambda n: k0 @ g ** n)
    assert close(o.p_plus, pg.act(k0, ref.p_plus), 1e-9) and close(o.D_plus, pg.act(k0, ref.D_plus), 1e-9)
    assert close(o.p_minus, ref.p_minus, 1e-9) and close(o.D_minus, ref.D_minus, 1e-9)


def test_balanced_errors():
    with pytest.raises(lo.NotBalanced):
        lo.balanced_objects_of_sequence(lo.model_sequence("beta"))

    def spinning(n):
        c, s = np.cos(n), np.sin(n)
        return GroupElement(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]) @ np.diag([1, 2.0 ** -n, 4.0 ** -n]))
    with pytest.raises(lo.NonConvergent):
        lo.balanced_objects_of_sequence(spinning)


# --- unbalanced sequences


def test_unbalanced_beta_flow():
    o = lo.unbalanced_objects(lo.model_sequence("beta"), AsymptoticType.UNBALANCED_BETA)
    assert isinstance(o, lo.UnbalancedBetaObjects)
    assert close(o.p_minus, P(*E3), 0) and close(o.D_plus, L(*E3), 0)
    assert o.lambda_inf == pytest.approx(1.0, abs=1e-12)


def test_unbalanced_alpha_model():
    o = lo.model_objects("alpha")
    assert isinstance(o, lo.UnbalancedAlphaObjects)
    assert close(o.p_plus, P(*E1), 0) and close(o.D_minus, L(*E1), 0)
    assert o.lambda_inf == pytest.approx(0.5, abs=1e-6)
    assert 0 < o.lambda_inf <= 1
    # a_inf in frame position fixes p_plus and preserves D_minus
    m = lo._limit_map(o)
    assert close(P(*m @ o.p_plus.rep), o.p_plus)
    assert abs(np.linalg.solve(m.T, o.D_minus.normal) @ E1) > 0  # image normal still ~ e1
    assert close(L(*np.linalg.inv(m).T @ o.D_minus.normal), o.D_minus)


def test_unbalanced_type_mismatch():
    with pytest.raises(lo.TypeMismatch):
        lo.unbalanced_objects(lo.model_sequence("balanced"), AsymptoticType.UNBALANCED_ALPHA)
    with pytest.raises(lo.TypeMismatch):
        lo.unbalanced_objects(lo.model_sequence("beta"), AsymptoticType.BALANCED)


@given(seeds)
def test_inverse_duality_unbalanced(seed):
    rng = rng_of(seed)
    k, l = rot(rng), rot(rng)
    a = lo.model_sequence("alpha")
    seq = lambda n: GroupElement(k @ a(n).mat @ l)  # noqa: E731
    n = lo.MODEL_PROBES["alpha"]
    fwd = lo.objects_of_sequence(seq, n)
    bwd = lo.objects_of_sequence(inverse_sequence(seq), n)
    assert isinstance(fwd, lo.UnbalancedAlphaObjects) and isinstance(bwd, lo.UnbalancedBetaObjects)
    assert close(fwd.p_plus, bwd.p_minus, 1e-6) and close(fwd.D_minus, bwd.D_plus, 1e-6)
    assert fwd.lambda_inf == pytest.approx(bwd.lambda_inf, abs=1e-6)


@given(seeds)
def test_inverse_duality_balanced(seed):
    rng = rng_of(seed)
    k, l = rot(rng), rot(rng)
    a = lo.model_sequence("balanced")
    # raw arrays: the rotated products are numerically singular
    seq = lambda n: k @ a(n).mat @ l  # noqa: E731
    inv = lambda n: l.T @ np.diag(1 / np.diag(a(n).mat)) @ k.T  # noqa: E731
    fwd = lo.balanced_objects_of_sequence(seq, inverse=inv)
    bwd = lo.balanced_objects_of_sequence(inv, inverse=seq)
    for plus, minus in (("p_plus", "p_minus"), ("D_plus", "D_minus"), ("p_saddle", "p_saddle")):
        assert close(getattr(fwd, plus), getattr(bwd, minus), 1e-6)
        assert close(getattr(fwd, minus), getattr(bwd, plus), 1e-6)


# --- limit maps


def test_ghat_example():
    o = lo.model_objects("alpha")
    got = lo.ghat_infty(o, P(0, 1, 1))
    assert close(got, pg.join(P(*E1), P(0, 2, 1)), 1e-6)
    assert abs(got.normal @ o.p_plus.rep) < 1e-12
    with pytest.raises(lo.DomainViolation):
        lo.ghat_infty(o, P(1, 1, 1))


def test_ghat_equivariance():
    # rho_inf(h) = lim g_n h g_n^-1 for h preserving D_minus = [e2, e3]
    o = lo.model_objects("alpha")
    a = lo.model_sequence("alpha")
    rng = np.random.default_rng(8)
    for _ in range(20):
        h = np.eye(3) + 0.5 * rng.normal(size=(3, 3))
        h[0, 1:] = 0
        n = 10 ** 8
        an = np.diag(a(n).mat)
        rho = h * an[:, None] / an[None, :]
        p = P(0, *rng.normal(size=2))
        lhs = lo.ghat_infty(o, pg.act(GroupElement(h), p))
        rhs = pg.act(GroupElement(rho), lo.ghat_infty(o, p))
        assert close(lhs, rhs, 1e-6)


def test_gbar_example():
    o = lo.model_objects("beta")
    got = lo.gbar_infty(o, P(1, 0, 1))
    assert close(got, P(*E1), 1e-12)
    assert abs(got.rep @ o.D_plus.normal) < 1e-12
    with pytest.raises(lo.DomainViolation):
        lo.gbar_infty(o, P(*E3))


def test_phi_examples():
    o = lo.model_objects("beta")
    x = Flag(P(1, 0, 1), pg.join(P(1, 0, 1), P(*E2)))
    assert close(lo.phi_fibration(o, x), Flag(P(*E1), L(*E3)), 1e-12)
    # cross-check by flowing: Diag(e^40, e^40, 1) x
    flowed = pg.act(GroupElement.diag(np.exp(40), np.exp(40), 1), x)
    assert close(flowed, lo.phi_fibration(o, x), 1e-12)
    y = Flag(P(*E3), pg.join(P(*E3), P(1, 1, 0)))
    assert close(lo.phi_fibration(o, y), Flag(P(1, 1, 0), L(*E3)), 1e-12)


@given(seeds)
def test_phi_constant_on_fibers(seed):
    rng = rng_of(seed)
    o = lo.model_objects("beta")
    p = P(*rng.normal(size=3))
    fiber_line = pg.join(o.p_minus, p)
    targets = []
    for _ in range(3):
        q = P(*pg.pencil_array(fiber_line.normal, 1, offset=rng.random())[0])
        d = pg.join(q, P(*rng.normal(size=3)))
        targets.append(lo.phi_fibration(o, Flag(q, d)))
    assert max(pg.dist(t, targets[0]) for t in targets) < 1e-10


# --- symbolic prediction


def test_predict_balanced_examples():
    o = lo.model_objects("balanced")
    x = Flag(P(*E2), pg.join(P(*E2), P(*E3)))
    assert same_descriptor(lo.predict_dynamic_set(o, x), lo.SurfaceBA(L(*E3)))
    assert same_descriptor(lo.predict_dynamic_set(o, P(*E2)), lo.LineP(L(*E3)))
    assert same_descriptor(lo.predict_dynamic_set(o, o.x_minus), lo.WholeSpace(Space.X))


def test_predict_every_clause_reachable():
    kinds = set()
    for m in ("balanced", "alpha", "beta"):
        o = lo.model_objects(m)
        for _, x in lo.model_clauses(m):
            for y in x if isinstance(x, tuple) else (x,):
                kinds.add(type(lo.predict_dynamic_set(o, y)).__name__)
    assert kinds == {"PointX", "CircleAlpha", "CircleBeta", "SurfaceAB", "SurfaceBA", "PointP", "LineP",
                     "DualPencil", "PointDual", "WholeSpace"}


def test_predict_descriptor_matches_space():
    for m in ("balanced", "alpha", "beta"):
        o = lo.model_objects(m)
        for _, x in lo.model_clauses(m):
            x = x[0] if isinstance(x, tuple) else x
            want = Space.RP2 if isinstance(x, ProjPoint) else Space.RP2_DUAL if isinstance(x, ProjLine) else Space.X
            assert lo.descriptor_space(lo.predict_dynamic_set(o, x)) is want


def test_ambiguous_locus():
    o = lo.model_objects("balanced")
    near = P(1e-10, 0.6, 0.8)
    with pytest.raises(lo.AmbiguousLocus):
        lo.predict_dynamic_set(o, near)
    assert isinstance(lo.predict_dynamic_set(o, near, tol=1e-11), lo.PointP)


@pytest.mark.parametrize("model", ["balanced", "alpha", "beta"])
def test_tau_conjugation(model):
    seq, n = lo.model_sequence(model), lo.MODEL_PROBES[model]
    theta = lambda i: seq(i).theta()  # noqa: E731
    objs, objs_t = lo.objects_of_sequence(seq, n), lo.objects_of_sequence(theta, n)
    for label, x in lo.model_clauses(model):
        if not isinstance(x, ProjLine):
            continue
        lhs = lo.predict_dynamic_set(objs, x)
        rhs = lo.tau_descriptor(lo.predict_dynamic_set(objs_t, pg.tau_inv(x)))
        assert same_descriptor(lhs, rhs, 1e-6), label


# --- empirical oracle


@pytest.mark.parametrize("model,label", [
    ("balanced", "X generic"),
    ("balanced", "X at x-"),
    ("beta", "X off S_ab-"),
])
def test_empirical_examples(model, label):
    x = dict(lo.model_clauses(model))[label]
    r = lo.verify_model_clause(model, label, x, trials=200)
    assert r.passed, r


def test_empirical_cloud_respects_perturbation_bound():
    seq = lo.model_sequence("balanced")
    x = lo.model_clauses("balanced")[0][1]
    cloud = lo.empirical_dynamic_set(seq, x, trials=20, n_max=12, window=2, pullback=0,
                                     perturb_scales=(1e-3,))
    # pulled back to the source, every sample is within s/n of x
    for n, block in ((11, cloud.points[: len(cloud) // 2]), (12, cloud.points[len(cloud) // 2:])):
        g = seq(n).mat
        back = pg.act_flags_array(np.linalg.inv(g), block)
        assert pg.flag_dist_array(back, x.to_array()[None]).max() <= 1e-3 / n * (1 + 1e-6)
