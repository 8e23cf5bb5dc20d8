"""Graph topology, coupling matrices, and the spectral certificate."""

import numpy as np
import pytest

from rcbfsim.topology import (
    SpectralCertificate,
    Topology,
    TopologyError,
    check_observer_certificate,
    extreme_eigenvalues,
    h_matrix,
    laplacian,
)


# ---------------------------------------------------------------------------
# Independent eigenvalue oracle: characteristic polynomial via the
# Faddeev-LeVerrier recursion, roots by sign-change bracketing + bisection.
# Valid for symmetric matrices up to 4x4 with distinct eigenvalues.
# ---------------------------------------------------------------------------

def _char_poly_coeffs(m):
    # Returns c so that det(lam*I - M) = lam^n + c[0]*lam^(n-1) + ... + c[n-1].
    n = m.shape[0]
    coeffs = []
    mk = m.copy()
    for k in range(1, n + 1):
        ck = -np.trace(mk) / k
        coeffs.append(ck)
        if k < n:
            mk = m @ (mk + ck * np.eye(n))
    return np.array(coeffs)


def _poly_eval(coeffs, lam):
    val = 1.0
    for c in coeffs:
        val = val * lam + c
    return val


def _oracle_eigenvalues(m):
    n = m.shape[0]
    assert n <= 4, "oracle only supports n <= 4"
    coeffs = _char_poly_coeffs(m)
    # Gershgorin interval contains every eigenvalue.
    radii = np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))
    lo = float(np.min(np.diag(m) - radii)) - 1.0
    hi = float(np.max(np.diag(m) + radii)) + 1.0
    grid = np.linspace(lo, hi, 20001)
    vals = np.array([_poly_eval(coeffs, x) for x in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb < 0.0:
            left, right, fleft = a, b, fa
            for _ in range(200):
                mid = 0.5 * (left + right)
                fmid = _poly_eval(coeffs, mid)
                if fleft * fmid <= 0.0:
                    right = mid
                else:
                    left, fleft = mid, fmid
            roots.append(0.5 * (left + right))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    assert len(roots) == n, f"oracle found {len(roots)} roots, expected {n}"
    return np.sort(np.array(roots))


def test_oracle_self_check():
    # diag(1, 2, 3): char poly (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6
    m = np.diag([1.0, 2.0, 3.0])
    coeffs = _char_poly_coeffs(m)
    assert np.allclose(coeffs, [-6.0, 11.0, -6.0], atol=1e-12)
    roots = _oracle_eigenvalues(m)
    assert np.allclose(roots, [1.0, 2.0, 3.0], atol=1e-8)


# ---------------------------------------------------------------------------
# Topology construction and validation
# ---------------------------------------------------------------------------

def _path3(links=None, n_unc=0):
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    return Topology(3, n_unc, adj, links)


def test_topology_rejects_asymmetric():
    adj = np.array([[0, 1], [0, 0]], dtype=float)
    with pytest.raises(TopologyError, match="symmetric"):
        Topology(2, 0, adj)


def test_topology_rejects_self_edges():
    adj = np.array([[1, 1], [1, 0]], dtype=float)
    with pytest.raises(TopologyError, match="self edges"):
        Topology(2, 0, adj)


def test_topology_rejects_disconnected():
    adj = np.zeros((2, 2))
    with pytest.raises(TopologyError, match="connected"):
        Topology(2, 0, adj)


def test_topology_rejects_unobserved_uncontrollable():
    adj = np.array([[0, 1], [1, 0]], dtype=float)
    with pytest.raises(TopologyError, match="observer"):
        Topology(2, 1, adj, np.zeros((2, 1)))


def test_access_row():
    topo = _path3(links=np.array([[0.0], [0.0], [1.0]]), n_unc=1)
    assert np.array_equal(topo.access_row(0), [1, 1, 0, 0])
    assert np.array_equal(topo.access_row(2), [0, 1, 1, 1])


# ---------------------------------------------------------------------------
# Laplacian
# ---------------------------------------------------------------------------

def test_laplacian_path_graph():
    expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    assert np.array_equal(laplacian(_path3()), expected)


def test_laplacian_single_agent():
    topo = Topology(1, 0, np.zeros((1, 1)))
    assert np.array_equal(laplacian(topo), [[0.0]])


def test_laplacian_complete_graph():
    adj = np.ones((3, 3)) - np.eye(3)
    topo = Topology(3, 0, adj)
    expected = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], dtype=float)
    assert np.array_equal(laplacian(topo), expected)


def test_laplacian_row_sums_zero():
    rng = np.random.default_rng(7)
    for _ in range(50):
        topo = _random_connected_topology(rng)
        assert np.allclose(laplacian(topo).sum(axis=1), 0.0, atol=0.0)


# ---------------------------------------------------------------------------
# Coupling matrices
# ---------------------------------------------------------------------------

def test_h_matrix_single_agent():
    topo = Topology(1, 0, np.zeros((1, 1)))
    assert np.array_equal(h_matrix(topo, 0), [[1.0]])


def test_h_matrix_path_controllable_target():
    # b_i0 = a_i0 for i != 0 and b_00 = 1: agent 1 (index 0) contributes its
    # self entry, agent 2 is adjacent to it, agent 3 is not.
    topo = _path3()
    expected = laplacian(topo) + np.diag([1.0, 1.0, 0.0])
    assert np.array_equal(h_matrix(topo, 0), expected)


def test_h_matrix_uncontrollable_target():
    topo = _path3(links=np.array([[0.0], [0.0], [1.0]]), n_unc=1)
    expected = laplacian(topo) + np.diag([0.0, 0.0, 1.0])
    assert np.array_equal(h_matrix(topo, 3), expected)


def test_h_matrix_target_out_of_range():
    with pytest.raises(TopologyError, match="out of range"):
        h_matrix(_path3(), 3)


# ---------------------------------------------------------------------------
# Eigenvalues
# ---------------------------------------------------------------------------

def test_extreme_eigenvalues_scalar():
    cert = extreme_eigenvalues(np.array([[1.0]]))
    assert cert.lambda_min == cert.lambda_max == 1.0


def test_extreme_eigenvalues_diagonal():
    cert = extreme_eigenvalues(np.diag([2.0, 5.0]))
    assert abs(cert.lambda_min - 2.0) < 1e-10
    assert abs(cert.lambda_max - 5.0) < 1e-10


def test_extreme_eigenvalues_vs_char_poly_oracle():
    topo = _path3()
    m = h_matrix(topo, 0)
    roots = _oracle_eigenvalues(m)
    cert = extreme_eigenvalues(m, matrix_index=0)
    assert abs(cert.lambda_min - roots[0]) < 1e-8
    assert abs(cert.lambda_max - roots[-1]) < 1e-8
    assert cert.matrix_index == 0


def test_extreme_eigenvalues_random_vs_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        a = rng.normal(size=(n, n))
        m = 0.5 * (a + a.T)
        roots = _oracle_eigenvalues(m)
        cert = extreme_eigenvalues(m)
        assert abs(cert.lambda_min - roots[0]) < 1e-8
        assert abs(cert.lambda_max - roots[-1]) < 1e-8


def test_extreme_eigenvalues_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        extreme_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_certificate_invariant():
    with pytest.raises(ValueError, match="lambda_min"):
        SpectralCertificate(2.0, 1.0)


def _random_connected_topology(rng, max_n=8):
    n = int(rng.integers(1, max_n + 1))
    adj = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):  # random spanning tree keeps it connected
        a, b = order[k], order[int(rng.integers(0, k))]
        adj[a, b] = adj[b, a] = 1.0
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            adj[a, b] = adj[b, a] = 1.0
    v = int(rng.integers(0, 3))
    links = np.zeros((n, v))
    for l in range(v):
        links[int(rng.integers(0, n)), l] = 1.0
    return Topology(n, v, adj, links)


def test_coupling_matrices_positive_definite():
    # Every valid topology must give symmetric coupling matrices with a
    # strictly positive smallest eigenvalue, for every target agent.
    rng = np.random.default_rng(3)
    for _ in range(60):
        topo = _random_connected_topology(rng)
        for j in range(topo.n_total):
            m = h_matrix(topo, j)
            assert np.array_equal(m, m.T)
            cert = extreme_eigenvalues(m, matrix_index=j)
            assert cert.lambda_min > 0.0
            assert cert.is_positive_definite


# ---------------------------------------------------------------------------
# Gain condition
# ---------------------------------------------------------------------------

def test_certificate_true_case():
    cert = SpectralCertificate(1.0, 1.0)
    # 2*1*1 + 0 - 2*1*2*1 + 0.01*1 = 2.01 - 4 < 0
    assert check_observer_certificate(cert, p=1.0, lipschitz=0.0, sigma=0.01, delta=2.0)


def test_certificate_false_case():
    cert = SpectralCertificate(1.0, 1.0)
    # 2 + 0.01 - 2 > 0
    assert not check_observer_certificate(cert, p=1.0, lipschitz=0.0, sigma=0.01, delta=1.0)


def test_certificate_threshold_rearrangement():
    # With zero Lipschitz constant the condition is exactly
    # delta > (2*lambda_max*p + sigma) / (2*lambda_min).
    rng = np.random.default_rng(5)
    for _ in range(200):
        lmin = float(rng.uniform(0.1, 3.0))
        lmax = lmin + float(rng.uniform(0.0, 3.0))
        p = float(rng.uniform(0.1, 4.0))
        sigma = float(rng.uniform(0.001, 1.0))
        cert = SpectralCertificate(lmin, lmax)
        threshold = (2.0 * lmax * p + sigma) / (2.0 * lmin)
        assert check_observer_certificate(cert, p, 0.0, sigma, threshold * 1.001)
        assert not check_observer_certificate(cert, p, 0.0, sigma, threshold * 0.999)


def test_certificate_input_validation():
    cert = SpectralCertificate(1.0, 2.0)
    with pytest.raises(ValueError, match="p must be positive"):
        check_observer_certificate(cert, 0.0, 0.0, 0.01, 2.0)
    with pytest.raises(ValueError, match="sigma"):
        check_observer_certificate(cert, 1.0, 0.0, -1.0, 2.0)
    with pytest.raises(ValueError, match="positive definite"):
        check_observer_certificate(SpectralCertificate(-1.0, 2.0), 1.0, 0.0, 0.01, 2.0)
