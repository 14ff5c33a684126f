import numpy as np
import pytest

from cartanheis import heis, psh
from cartanheis.errors import InvalidFrame


def test_identity_and_frame_to_matrix():
    assert np.allclose(psh.frame_to_matrix(heis.standard_frame(heis.origin(2))).mat,
                       np.eye(6))


def test_frame_to_matrix_is_left_translation(rng):
    p = heis.HPoint(2, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), 0.4)
    g = psh.frame_to_matrix(heis.standard_frame(p))
    for _ in range(5):
        q = heis.HPoint(2, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), -0.2)
        assert np.allclose(psh.apply(g, q).coords, heis.group_mul(p, q).coords,
                           atol=1e-14)


def test_rotation_about_t_fixes_origin(rng):
    R = psh.random_rotation(2, rng)
    g = psh.rotation_about_t(2, R)
    assert np.allclose(psh.apply(g, heis.origin(2)).coords, 0.0)
    # rotated frame at the origin gives exactly this element
    cols = np.eye(5)
    cols[:4, :4] = R
    F = heis.FrameAtPoint(heis.origin(2), cols)
    assert np.allclose(psh.frame_to_matrix(F).mat, g.mat, atol=1e-14)


def test_action_is_homomorphism(rng):
    for _ in range(10):
        g = psh.random_element(2, rng)
        h = psh.random_element(2, rng)
        q = heis.HPoint(2, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), 0.1)
        assert np.allclose(psh.apply(g @ h, q).coords,
                           psh.apply(g, psh.apply(h, q)).coords, atol=1e-12)


def test_group_closure_and_inverse(rng):
    for _ in range(10):
        g = psh.random_element(3, rng)
        h = psh.random_element(3, rng)
        assert psh.psh_validate((g @ h).mat, 1e-10).ok
        assert psh.psh_validate(psh.inverse(g).mat, 1e-10).ok


def test_decompose_roundtrip(rng):
    for _ in range(10):
        g = psh.random_element(2, rng)
        p, R = psh.decompose(g)
        g2 = psh.recompose(p, R)
        assert np.max(np.abs(g2.mat - g.mat)) < 1e-12
    gid = psh.identity(2)
    p, R = psh.decompose(gid)
    assert np.allclose(p.coords, 0) and np.allclose(R, np.eye(4))
    L = psh.left_translation(heis.HPoint(2, [0.3, 0.1], [0.0, -0.2], 0.5))
    p, R = psh.decompose(L)
    assert np.allclose(R, np.eye(4), atol=1e-14)


def test_psh_validate_diagnostics():
    d = psh.psh_validate(np.eye(6))
    assert d.ok and d.worst == 0.0
    bad = np.eye(6)
    bad[0, 0] = 2.0
    d = psh.psh_validate(bad)
    assert not d.ok and np.isclose(d.residuals["first_row"], 1.0)


def test_matrix_to_frame_roundtrip(rng):
    g = psh.random_element(2, rng)
    F = psh.matrix_to_frame(g)
    F.validate(1e-10)
    assert np.allclose(psh.frame_to_matrix(F).mat, g.mat, atol=1e-12)


def _random_algebra(n, rng):
    m = np.zeros((2 * n + 2, 2 * n + 2))
    W1 = rng.standard_normal((n, n))
    W1 = W1 - W1.T
    W3 = rng.standard_normal((n, n))
    W3 = 0.5 * (W3 + W3.T)
    m[1:n + 1, 1:n + 1] = W1
    m[n + 1:2 * n + 1, 1:n + 1] = W3
    m[1:n + 1, n + 1:2 * n + 1] = -W3
    m[n + 1:2 * n + 1, n + 1:2 * n + 1] = W1
    m[1:, 0] = rng.standard_normal(2 * n + 1)
    m[2 * n + 1, 1:n + 1] = m[n + 1:2 * n + 1, 0]
    m[2 * n + 1, n + 1:2 * n + 1] = -m[1:n + 1, 0]
    return psh.AlgebraValue(n, m)


def test_algebra_validate():
    assert psh.algebra_validate(psh.zero_algebra(2)).ok
    v = _random_algebra(2, np.random.default_rng(5))
    assert psh.algebra_validate(v).ok
    bad = v.mat.copy()
    bad[1, 2] = bad[2, 1] = 1.0  # symmetric entry violates antisymmetry
    d = psh.algebra_validate(psh.AlgebraValue(2, bad))
    assert not d.ok and np.isclose(d.residuals["antisymmetric"], 2.0)


def test_complexify_realify_roundtrip(rng):
    v = _random_algebra(3, rng)
    s = psh.complexify(v)
    assert s.skew_hermitian_residual() < 1e-15
    v2 = psh.realify(s)
    assert np.max(np.abs(v2.mat - v.mat)) == 0.0
    # single nonzero translation maps to the right complex slot
    m = np.zeros((8, 8))
    m[1, 0] = 1.0
    m[7, 4] = -1.0
    s = psh.complexify(psh.AlgebraValue(3, m))
    assert s.vartheta[0] == 1.0 and s.theta == 0.0
    with pytest.raises(InvalidFrame):
        bad = np.zeros((6, 6))
        bad[1, 1] = 1.0  # diagonal rotation entry breaks antisymmetry
        psh.complexify(psh.AlgebraValue(2, bad))
