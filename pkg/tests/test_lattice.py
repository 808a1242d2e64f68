import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magspec import (
    Lattice,
    ModuliPoint,
    RankError,
    DomainError,
    ShapeError,
    UnsupportedError,
    acute_dual_basis,
    circumcenter,
    closest_vectors,
    dual_lattice,
    inradius_sq,
    normalize_moduli,
)
from magspec.lattice import lattice_points_in_ball, lll_reduce, moduli_of, named_lattice

import oracles

SQ3 = math.sqrt(3)
HEX = ModuliPoint(0.5, SQ3 / 2)


def test_dual_of_unit_lattice():
    D = dual_lattice(Lattice(np.eye(2)))
    assert np.allclose(D.vectors, np.eye(2))


def test_dual_of_pq_lattice():
    p, q = 0.3, 1.2
    D = dual_lattice(Lattice([[1, 0], [p, q]]))
    assert np.allclose(D.vectors, [[1, -p / q], [0, 1 / q]], atol=1e-14)


def test_dual_of_diagonal():
    D = dual_lattice(Lattice([[2, 0], [0, 1]]))
    assert np.allclose(D.vectors, [[0.5, 0], [0, 1]])


def test_dual_pairing_is_identity():
    rng = np.random.default_rng(1)
    for d in (2, 3, 5):
        L = Lattice(oracles.random_lattice(rng, d))
        D = dual_lattice(L)
        assert np.allclose(D.matrix.T @ L.matrix, np.eye(d), atol=1e-12)


def test_double_dual():
    rng = np.random.default_rng(2)
    for _ in range(20):
        L = Lattice(oracles.random_lattice(rng, 3))
        assert np.allclose(dual_lattice(dual_lattice(L)).vectors, L.vectors, atol=1e-12)


def test_rank_error():
    with pytest.raises(RankError):
        Lattice([[1, 2], [2, 4]])
    with pytest.raises(ShapeError):
        Lattice([[1, 2, 3], [2, 4, 5]])


def test_acute_dual_basis_examples():
    v1, v2 = acute_dual_basis(ModuliPoint(0, 1))
    assert np.allclose(v1, [1, 1]) and np.allclose(v2, [0, 1])
    v1, v2 = acute_dual_basis(HEX)
    assert np.allclose(v1, [1, 1 / SQ3]) and np.allclose(v2, [0, 2 / SQ3])
    v1, v2 = acute_dual_basis(ModuliPoint(0.5, 1))
    assert np.allclose(v1, [1, 0.5]) and np.allclose(v2, [0, 1])


def _angles(a, b, c):
    out = []
    for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
        e1, e2 = v - u, w - u
        out.append(math.acos(e1 @ e2 / np.linalg.norm(e1) / np.linalg.norm(e2)))
    return out


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.5), st.floats(0.5, 4))
def test_acute_basis_spans_dual_and_is_acute(p, q):
    if q < p or p * p + q * q < 1:
        return
    m = ModuliPoint(p, q)
    v1, v2 = acute_dual_basis(m)
    assert max(_angles(np.zeros(2), v1, v2)) <= math.pi / 2 + 1e-12
    # same lattice: unimodular change of basis to the standard dual basis
    D = dual_lattice(m.lattice())
    T = np.array([v1, v2]) @ np.linalg.inv(D.vectors)
    assert np.allclose(T, np.rint(T), atol=1e-10)
    assert abs(abs(np.linalg.det(np.rint(T))) - 1) < 1e-12


def test_cvp_examples():
    Z2 = Lattice(np.eye(2))
    r = closest_vectors(Z2, [0.2, 0])
    assert r.distance == pytest.approx(0.2) and len(r.nearest) == 1
    assert np.allclose(r.nearest[0], 0)
    r = closest_vectors(Z2, [0.5, 0.5])
    assert r.distance == pytest.approx(math.sqrt(2) / 2) and len(r.nearest) == 4


def test_cvp_hex_circumcenter():
    D = dual_lattice(HEX.lattice())
    r = closest_vectors(D, circumcenter(HEX))
    d2, ties = oracles.brute_cvp(D.vectors, circumcenter(HEX), B=5)
    assert r.distance**2 == pytest.approx(4 / 9, abs=1e-14)
    assert r.distance == pytest.approx(d2, abs=1e-14)
    assert len(r.nearest) == len(ties) == 3


def test_cvp_agrees_with_brute_force():
    rng = np.random.default_rng(3)
    for d in (2, 3):
        for _ in range(50):
            W = oracles.random_lattice(rng, d, cond_max=6)
            L = Lattice(W)
            x = rng.normal(size=d) * 2
            r = closest_vectors(L, x)
            dist, ties = oracles.brute_cvp(W, x)
            assert r.distance == pytest.approx(dist, abs=1e-12)
            got = sorted(map(tuple, np.round(r.nearest, 9)))
            want = sorted(map(tuple, np.round(ties, 9)))
            assert got == want


def test_cvp_ties_exact_on_symmetric_points():
    L = Lattice(np.eye(3))
    r = closest_vectors(L, [0.5, 0.5, 0.5])
    assert len(r.nearest) == 8
    r = closest_vectors(L, [0.5, 0.5, 0.5], want_all_ties=False)
    assert len(r.nearest) == 1


def test_cvp_dimension_bound():
    with pytest.raises(UnsupportedError):
        closest_vectors(Lattice(np.eye(9)), np.zeros(9))
    with pytest.raises(ShapeError):
        closest_vectors(Lattice(np.eye(2)), [0, 0, 0])


def test_cvp_high_dimension_matches_brute_force():
    rng = np.random.default_rng(4)
    W = np.eye(5) + 0.3 * rng.normal(size=(5, 5))
    x = rng.normal(size=5)
    dist, _ = oracles.brute_cvp(W, x)
    assert closest_vectors(Lattice(W), x).distance == pytest.approx(dist, abs=1e-12)


def test_ball_points_match_box():
    rng = np.random.default_rng(5)
    W = oracles.random_lattice(rng, 3, cond_max=5)
    c = rng.normal(size=3)
    R = 0.5 * oracles.box_radius_for(W, 6) - np.linalg.norm(c)
    pts = lattice_points_in_ball(Lattice(W), c, R)
    box, _ = oracles.box_points(W, 6)
    want = box[np.linalg.norm(box - c, axis=1) <= R]
    assert len(pts) == len(want)


def test_lll_preserves_lattice():
    rng = np.random.default_rng(6)
    W = oracles.random_lattice(rng, 4)
    U = np.array([[1, 3, 0, 0], [0, 1, 5, 0], [0, 0, 1, 2], [0, 0, 0, 1]], dtype=float)
    skew = W @ U
    B = lll_reduce(skew)
    T = np.linalg.solve(W, B)
    assert np.allclose(T, np.rint(T), atol=1e-8)
    assert abs(abs(np.linalg.det(T)) - 1) < 1e-8
    assert np.linalg.norm(B, axis=0).max() <= np.linalg.norm(skew, axis=0).max()


def test_normalize_examples():
    m, s = normalize_moduli(Lattice(np.eye(2)))
    assert (m.p, m.q, s) == pytest.approx((0, 1, 1))
    m, s = normalize_moduli(Lattice([[1, 0], [0.5, SQ3 / 2]]))
    assert (m.p, m.q, s) == pytest.approx((0.5, SQ3 / 2, 1))
    m, s = normalize_moduli(Lattice([[2, 0], [1, 1]]))
    assert (m.p, m.q) == pytest.approx((0, 1), abs=1e-12)
    assert s == pytest.approx(math.sqrt(2))


def test_normalize_matches_brute_reduction():
    rng = np.random.default_rng(7)
    for _ in range(30):
        W = oracles.random_lattice(rng, 2, cond_max=4)
        b1, b2 = oracles.gauss_reduce_brute(W)
        n1 = b1 @ b1
        p = abs(b1 @ b2) / n1
        q = abs(b1[0] * b2[1] - b1[1] * b2[0]) / n1
        m, s = normalize_moduli(Lattice(W))
        assert s == pytest.approx(math.sqrt(n1), rel=1e-12)
        assert m.q == pytest.approx(q, rel=1e-9)
        # p is determined up to the fold p -> 1 - p on a boundary tie
        assert min(abs(m.p - p), abs(m.p - (1 - p))) < 1e-9


def _lattice_strategy():
    coord = st.floats(-3, 3, allow_nan=False)
    return st.lists(coord, min_size=4, max_size=4).filter(
        lambda v: abs(v[0] * v[3] - v[1] * v[2]) > 0.05 * max(1, max(abs(x) for x in v)) ** 2
    )


@settings(max_examples=200, deadline=None)
@given(_lattice_strategy())
def test_normalize_in_domain_and_idempotent(v):
    L = Lattice(np.reshape(v, (2, 2)))
    m, s = normalize_moduli(L)
    eps = 1e-9
    assert -eps <= m.p <= 0.5 + eps and m.q >= m.p - eps and m.p**2 + m.q**2 >= 1 - eps
    assert s**2 * m.q == pytest.approx(L.covolume(), rel=1e-9)
    m2, s2 = normalize_moduli(m.lattice())
    assert (m2.p, m2.q) == pytest.approx((m.p, m.q), abs=1e-10)
    assert s2 == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(_lattice_strategy())
def test_dual_is_homothetic_in_2d(v):
    L = Lattice(np.reshape(v, (2, 2)))
    m = normalize_moduli(L).moduli
    md = normalize_moduli(dual_lattice(L)).moduli
    assert (md.p, md.q) == pytest.approx((m.p, m.q), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(_lattice_strategy(), st.floats(0, 2 * math.pi), st.floats(0.1, 10))
def test_normalize_invariant_under_similarity(v, angle, t):
    L = Lattice(np.reshape(v, (2, 2)))
    c, s = math.cos(angle), math.sin(angle)
    L2 = L.transformed([[c, -s], [s, c]]).scaled(t)
    m1, s1 = normalize_moduli(L)
    m2, s2 = normalize_moduli(L2)
    assert (m2.p, m2.q) == pytest.approx((m1.p, m1.q), abs=1e-9)
    assert s2 == pytest.approx(t * s1, rel=1e-9)


def test_circumcenter_examples():
    assert np.allclose(circumcenter(ModuliPoint(0, 1)), [0.5, 0.5])
    assert np.allclose(circumcenter(HEX), [1 / 3, 1 / SQ3])
    assert np.allclose(circumcenter(ModuliPoint(0.5, 1)), [3 / 8, 0.5])


def test_circumcenter_matches_bisector_oracle():
    rng = np.random.default_rng(8)
    for _ in range(50):
        m = ModuliPoint(*oracles.random_moduli(rng))
        v1, v2 = acute_dual_basis(m)
        want = oracles.circumcenter_of([0, 0], v1, v2)
        assert np.allclose(circumcenter(m), want, atol=1e-12)


def test_inradius_examples():
    assert inradius_sq(ModuliPoint(0, 1)) == pytest.approx(0.5)
    assert inradius_sq(HEX) == pytest.approx(4 / 9)
    assert inradius_sq(ModuliPoint(0.5, 1)) == pytest.approx(25 / 64)


def test_inradius_is_distance_from_circumcenter():
    rng = np.random.default_rng(9)
    for _ in range(100):
        m = ModuliPoint(*oracles.random_moduli(rng))
        D = dual_lattice(m.lattice())
        d = closest_vectors(D, circumcenter(m)).distance
        assert d**2 == pytest.approx(inradius_sq(m), rel=1e-10)


def test_moduli_point_domain():
    with pytest.raises(DomainError):
        ModuliPoint(0.7, 1)
    with pytest.raises(DomainError):
        ModuliPoint(0.1, 0.5)
    with pytest.raises(DomainError):
        ModuliPoint(0, -1)
    m = moduli_of(0.7, 0.5).moduli
    assert 0 <= m.p <= 0.5 and m.p**2 + m.q**2 >= 1


def test_named_lattices():
    assert named_lattice("Z3").dim == 3
    assert named_lattice("hex").covolume() == pytest.approx(SQ3 / 2)
    assert np.allclose(named_lattice("rect:2,3").vectors, np.diag([2, 3]))
    with pytest.raises(DomainError):
        named_lattice("square")


def test_lattice_json_roundtrip():
    L = Lattice([[1, 0.2], [0.3, 2]])
    d = L.to_dict()
    assert d == {"dim": 2, "basis": [[1.0, 0.2], [0.3, 2.0]]}
    assert np.array_equal(Lattice.from_dict(d).vectors, L.vectors)
    with pytest.raises(ShapeError, match="basis"):
        Lattice.from_dict({"dim": 2})
    assert ModuliPoint.from_dict(HEX.to_dict()) == HEX
