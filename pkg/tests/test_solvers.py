import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from tracephase.errors import ConfigError, NoConvergence
from tracephase.models import CahnHilliard, ModelParams
from tracephase.solvers import CH_DEFAULT, LinearSolver, SolverConfig, block_matrix, solve, solve_block_2x2

CONFIGS = [
    SolverConfig("cg", preconditioner="jacobi"),
    SolverConfig("cg", preconditioner="none"),
    SolverConfig("bicgstab", preconditioner="ilu"),
    SolverConfig("gmres", preconditioner="ilu"),
    SolverConfig("gmres", preconditioner="none", restart=20),
    SolverConfig("direct"),
]


def spd(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.05, random_state=rng)
    A = A + A.T
    return (A + sp.diags(np.abs(A).sum(axis=1).A.ravel() + 1.0)).tocsr()


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.method}-{c.preconditioner}")
def test_identity(cfg):
    b = np.arange(5.0)
    x, stats = solve(sp.identity(5, format="csr"), b, cfg, symmetric=True)
    assert np.allclose(x, b)


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.method}-{c.preconditioner}")
def test_two_by_two(cfg):
    x, _ = solve(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]), cfg, symmetric=True)
    assert np.allclose(x, [1, 1], atol=1e-10)


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.method}-{c.preconditioner}")
def test_random_spd_against_dense(cfg):
    A = spd(200, 4)
    b = np.random.default_rng(0).standard_normal(200)
    x, stats = solve(A, b, cfg, symmetric=True)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
    true = np.linalg.norm(A @ x - b)
    assert true <= stats.target
    assert stats.final_residual == pytest.approx(true, rel=1e-12, abs=1e-300)


def test_cg_requires_symmetric_flag():
    with pytest.raises(ConfigError):
        solve(sp.identity(3, format="csr"), np.ones(3), SolverConfig("cg"))


def test_bad_configs():
    with pytest.raises(ConfigError):
        SolverConfig("lu")
    with pytest.raises(ConfigError):
        SolverConfig(preconditioner="amg")
    with pytest.raises(ConfigError):
        SolverConfig(rel_tol=0)


def test_no_convergence_carries_best_iterate():
    A = spd(300, 1)
    b = np.ones(300)
    with pytest.raises(NoConvergence) as info:
        solve(A, b, SolverConfig("cg", preconditioner="none", max_iter=2, rel_tol=1e-14), symmetric=True)
    err = info.value
    assert err.x is not None and err.x.shape == (300,)
    assert err.residual == pytest.approx(np.linalg.norm(A @ err.x - b), rel=1e-12)


def test_zero_rhs():
    x, stats = solve(spd(20, 0), np.zeros(20), SolverConfig("cg"), symmetric=True)
    assert np.all(x == 0) and stats.iters == 0


def test_block_trivial():
    n = 4
    I, Z = sp.identity(n, format="csr"), sp.csr_matrix((n, n))
    b1, b2 = np.arange(n, dtype=float), -np.arange(n, dtype=float)
    c, mu, _ = solve_block_2x2(I, Z, Z, I, b1, b2)
    assert np.allclose(c, b1) and np.allclose(mu, b2)


def test_block_saddle_hand_solved():
    # [[1, 1], [1, -1]] (x, y) = (3, 1) -> x = 2, y = 1
    one = sp.csr_matrix([[1.0]])
    c, mu, _ = solve_block_2x2(one, one, one, -one, np.array([3.0]), np.array([1.0]))
    assert c == pytest.approx([2.0]) and mu == pytest.approx([1.0])


def test_ch_block_matches_dense(sphere3):
    p = ModelParams(epsilon=0.05, dt=0.1)
    ch = CahnHilliard(sphere3, p)
    c0 = sphere3.random_field(0)
    ch.start(c0)
    M, A, S, h = ch.M, ch.A, ch.S, ch.h
    K11 = (p.rho / p.dt) * M
    K12 = sphere3.mobility_stiffness(c0, lambda c: np.clip(c, 0, 1) * (1 - np.clip(c, 0, 1))) + h * S
    K21 = -(p.beta_s * M + p.epsilon**2 * A + p.epsilon**2 * h * S)
    b1 = K11 @ c0
    b2 = ch._nonlinear(c0) - p.beta_s * (M @ c0)
    c, mu, _ = solve_block_2x2(K11, K12, K21, M, b1, b2, config=CH_DEFAULT)
    ref = np.linalg.solve(block_matrix(K11, K12, K21, M).toarray(), np.concatenate([b1, b2]))
    got = np.concatenate([c, mu])
    assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


def test_preconditioner_reuse_keeps_contract():
    s = LinearSolver(SolverConfig("gmres", preconditioner="ilu", refresh_iters=25))
    A = spd(150, 2)
    b = np.ones(150)
    for k in range(3):
        Ak = (A + sp.identity(150) * 0.01 * k).tocsr()
        x, stats = s.solve(Ak, b)
        assert np.linalg.norm(Ak @ x - b) <= stats.target


@given(st.integers(0, 10_000))
def test_deterministic(seed):
    A = spd(60, seed)
    b = np.random.default_rng(seed).standard_normal(60)
    x1, _ = solve(A, b, SolverConfig("gmres", preconditioner="ilu"))
    x2, _ = solve(A, b, SolverConfig("gmres", preconditioner="ilu"))
    assert np.array_equal(x1, x2)
