import numpy as np

from bspop.linop import kron, vec, vec_product


def test_kron_identity():
    np.testing.assert_array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_row_times_column():
    out = kron(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
    np.testing.assert_array_equal(out, [[3.0, 6.0], [4.0, 8.0]])


def test_kron_bilinear():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(2, 4))
    alpha = 2.75
    np.testing.assert_allclose(kron(alpha * a, b), alpha * kron(a, b),
                               rtol=0, atol=1e-13)


def test_vec_of_vector_is_unchanged():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(vec(v), v)


def test_vec_column_stacking():
    np.testing.assert_array_equal(vec(np.array([[1.0, 2.0], [3.0, 4.0]])),
                                  [1.0, 3.0, 2.0, 4.0])


def test_vec_triple_product_identity():
    # vec(ABC) = (C^T kron A) vec(B) on random conformable triples
    rng = np.random.default_rng(11)
    for _ in range(100):
        m, n, p, q = rng.integers(1, 6, size=4)
        a = rng.normal(size=(m, n))
        b = rng.normal(size=(n, p))
        c = rng.normal(size=(p, q))
        direct = vec(a @ b @ c)
        np.testing.assert_allclose(vec_product(a, b, c), direct,
                                   rtol=0, atol=1e-12)
        np.testing.assert_allclose(kron(c.T, a) @ vec(b), direct,
                                   rtol=0, atol=1e-12)
