import numpy as np
import pytest

from tecausal.estimator import (EstimatorConfig, aggregate, joint_diagonalize,
                                local_precision, min_window, oracle_covariances,
                                permute_and_scale, precision_from_covariance,
                                precision_shift, recover_graph,
                                recover_graph_oracle, required_samples,
                                spectral_gap_profile, tail_penalty)
from tecausal.exceptions import (ConfigError, CrowdingWarning, DataError,
                                 IdentifiabilityError, InfiniteMomentError)
from tecausal.sem import GraphGenConfig, WeightedAdjacency, generate_random_dag
from tecausal.synth import (STUDENT_T, NoiseSpec, VarianceProfile,
                            generate_dataset, make_profile)


def chain_graph(d, b=0.7):
    w = np.zeros((d, d))
    for i in range(d - 1):
        w[i, i + 1] = b
    return WeightedAdjacency(dim=d, weights=w, variable_order=np.arange(d)[::-1])


# --- scalar formulas -------------------------------------------------------

def test_tail_penalty_values():
    # 1 + 3/(nu - 4), checked at a few points by hand
    assert tail_penalty(5) == 4.0
    assert tail_penalty(7) == 2.0
    assert tail_penalty(10) == 1.5
    assert abs(tail_penalty(1e9) - 1.0) <= 1e-8


def test_tail_penalty_monotone():
    grid = [4.5, 5, 6, 8, 12, 20, 50, 200]
    vals = [tail_penalty(nu) for nu in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_tail_penalty_infinite():
    with pytest.raises(InfiniteMomentError):
        tail_penalty(4.0)
    with pytest.raises(InfiniteMomentError):
        tail_penalty(3.0)


def test_required_samples():
    # ceil(C / (delta eps^2)) and its t-inflated version
    assert required_samples(0.5, 0.1, C=1.0) == 40
    assert required_samples(0.5, 0.1, nu=5.0, C=1.0) == 160
    assert required_samples(0.5, 0.1, nu=float("inf"), C=1.0) == 40
    assert required_samples(0.1, 0.05, C=2.0) == 4000
    with pytest.raises(ConfigError):
        required_samples(1.5, 0.1)


def test_min_window():
    assert min_window(6, 1) == 6
    assert min_window(6, 2) == 3
    assert min_window(7, 2) == 4
    assert min_window(5, 5) == 1
    with pytest.raises(ConfigError):
        min_window(3, 0)
    with pytest.raises(ConfigError):
        min_window(3, 4)


# --- precision estimation --------------------------------------------------

def test_precision_inverts_covariance():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    cov = a @ a.T + 4 * np.eye(4)
    theta = precision_from_covariance(cov, ridge=0.0)
    assert np.max(np.abs(theta @ cov - np.eye(4))) <= 1e-10
    assert np.array_equal(theta, theta.T)


def test_local_precision_consistency():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200_000, 3)) * np.array([1.0, 2.0, 0.5])
    theta = local_precision(x, ridge=0.0)
    target = np.diag([1.0, 0.25, 4.0])
    assert np.max(np.abs(theta - target)) <= 0.05


def test_local_precision_rejects_nan():
    x = np.ones((10, 2))
    x[3, 1] = np.nan
    with pytest.raises(DataError):
        local_precision(x)


def test_shift_symmetry_and_aggregate_rank():
    d = 4
    diag_shifts = [np.diag([1.0, 0, 0, 0]), np.diag([0, 2.0, 0, 0])]
    shifts = [precision_shift(np.eye(d) + om, np.eye(d), s=s) for s, om in enumerate(diag_shifts)]
    agg = aggregate(shifts)
    assert agg.contributing_count == 2
    assert agg.rank == 2
    assert np.allclose(agg.psi, np.diag([1.0, 2.0, 0, 0]))


# --- joint diagonalization -------------------------------------------------

def test_diagonalize_recovers_mixing_columns():
    rng = np.random.default_rng(2)
    d = 4
    a = rng.standard_normal((d, d)) + 3 * np.eye(d)
    ai = np.linalg.inv(a)
    lam1 = np.array([1.0, 2.0, 3.0, 4.0])
    lam2 = np.array([5.0, 1.5, 9.0, 2.5])
    shifts = [
        precision_shift(ai.T @ np.diag(lam1) @ ai, np.zeros((d, d)), s=0),
        precision_shift(ai.T @ np.diag(lam2) @ ai, np.zeros((d, d)), s=1),
    ]
    a_hat, _ = joint_diagonalize(shifts)
    cols = a / np.linalg.norm(a, axis=0)
    # every true column should appear among the estimated ones, up to sign
    for j in range(d):
        dots = np.abs(cols[:, j] @ a_hat)
        assert dots.max() >= 1 - 1e-8


def test_diagonalize_rank_deficient_raises():
    d = 3
    om = np.diag([1.0, 1.0, 0.0])  # third direction never shifts
    shifts = [precision_shift(om, np.zeros((d, d)), s=s) for s in range(4)]
    with pytest.raises(IdentifiabilityError):
        joint_diagonalize(shifts)


def test_diagonalize_single_step_raises():
    shifts = [precision_shift(np.eye(2), np.zeros((2, 2)), s=0, i=i) for i in range(3)]
    with pytest.raises(IdentifiabilityError):
        joint_diagonalize(shifts)


def test_crowding_warning():
    d = 3
    shifts = [
        precision_shift(np.eye(d), np.zeros((d, d)), s=0),
        precision_shift(np.diag([2.0, 2.0 + 1e-12, 5.0]), np.zeros((d, d)), s=1),
    ]
    with pytest.warns(CrowdingWarning):
        joint_diagonalize(shifts)


# --- permutation, scaling, ordering ---------------------------------------

def test_permute_and_scale_identity_case():
    w = np.array([[2.0, 0.0], [-1.0, 2.0]])
    w_perm, order = permute_and_scale(w)
    assert np.allclose(np.diag(w_perm), 1.0)
    assert np.allclose(w_perm, [[1.0, 0.0], [-0.5, 1.0]])
    # identity ordering already puts all the mass below the diagonal
    assert list(order) == [0, 1]


def test_permute_and_scale_unscrambles_rows():
    w_true = np.array([[1.0, 0.0, 0.0],
                       [-0.5, 1.0, 0.0],
                       [0.2, -0.7, 1.0]])
    rng = np.random.default_rng(3)
    scales = np.array([2.0, -1.5, 0.8])
    scrambled = (w_true * scales[:, None])[rng.permutation(3)]
    w_perm, _ = permute_and_scale(scrambled)
    assert np.max(np.abs(w_perm - w_true)) <= 1e-12


def test_spectral_gap_profile():
    gaps, mean_gap = spectral_gap_profile([5.0, 1.0, 3.0])
    assert np.allclose(gaps, [2.0, 2.0])
    assert mean_gap == 2.0
    with pytest.raises(ConfigError):
        spectral_gap_profile([1.0])


# --- oracle recovery --------------------------------------------------------

def test_oracle_recovery_exact_chain():
    d = 3
    g = chain_graph(d)
    profile = make_profile(d, T=4, k=3, r=d, drift_sigma=0.2, seed=5)
    res = recover_graph_oracle(g, profile)
    assert np.max(np.abs(res.adjacency_est - g.weights)) <= 1e-8


def test_oracle_recovery_exact_random():
    for seed in range(5):
        g = generate_random_dag(GraphGenConfig(dim=4, sparsity=0.5, seed=seed))
        profile = make_profile(4, T=4, k=3, r=4, drift_sigma=0.2, seed=seed + 100)
        res = recover_graph_oracle(g, profile)
        assert np.max(np.abs(res.adjacency_est - g.weights)) <= 1e-8


def test_oracle_causal_order_valid():
    g = chain_graph(4)
    profile = make_profile(4, T=4, k=3, r=4, drift_sigma=0.2, seed=9)
    res = recover_graph_oracle(g, profile)
    pos = np.empty(4, dtype=int)
    pos[res.causal_order] = np.arange(4)
    # an edge i -> j requires j to come before i in the (roots-last) order
    for i in range(4):
        for j in range(4):
            if g.weights[i, j] != 0:
                assert pos[j] < pos[i]


def test_oracle_window_boundary():
    d, r = 6, 2
    g = generate_random_dag(GraphGenConfig(dim=d, sparsity=0.4, seed=13))
    ok = make_profile(d, T=min_window(d, r), k=3, r=r, drift_sigma=0.0,
                      seed=13, subset_mode="disjoint")
    res = recover_graph_oracle(g, ok)
    assert np.max(np.abs(res.adjacency_est - g.weights)) <= 1e-8
    short = make_profile(d, T=min_window(d, r) - 1, k=3, r=r, drift_sigma=0.0,
                         seed=13, subset_mode="disjoint")
    with pytest.raises(IdentifiabilityError):
        recover_graph_oracle(g, short)


def test_fixed_subsets_never_identify():
    # the same r variables shifting every step caps the aggregate rank at r
    d, r = 5, 2
    g = generate_random_dag(GraphGenConfig(dim=d, sparsity=0.5, seed=17))
    profile = make_profile(d, T=8, k=3, r=r, drift_sigma=0.0,
                           seed=17, subset_mode="fixed")
    with pytest.raises(IdentifiabilityError):
        recover_graph_oracle(g, profile)


# --- sampled recovery --------------------------------------------------------

def test_sampled_recovery_two_nodes():
    g = chain_graph(2, b=0.8)
    profile = make_profile(2, T=4, k=3, r=2, drift_sigma=0.2, seed=21)
    ds = generate_dataset(g, profile, NoiseSpec(), 4000, seed=21)
    res = recover_graph(ds)
    est = np.where(np.abs(res.adjacency_est) >= 0.3, 1, 0)
    np.fill_diagonal(est, 0)
    assert est[0, 1] == 1 and est[1, 0] == 0


def test_sampled_recovery_student_t():
    g = chain_graph(2, b=0.8)
    profile = make_profile(2, T=4, k=3, r=2, drift_sigma=0.2, seed=22)
    ds = generate_dataset(g, profile, NoiseSpec(STUDENT_T, 8.0), 4000, seed=22)
    res = recover_graph(ds)
    assert abs(res.adjacency_est[0, 1] - 0.8) <= 0.25
    assert abs(res.adjacency_est[1, 0]) <= 0.3


def test_feasibility_warning_small_bins():
    g = chain_graph(2)
    profile = make_profile(2, T=4, k=2, r=2, drift_sigma=0.2, seed=23)
    ds = generate_dataset(g, profile, NoiseSpec(), 50, seed=23)
    with pytest.warns(UserWarning, match="Insufficient samples"):
        recover_graph(ds)
    with pytest.raises(DataError):
        recover_graph(ds, EstimatorConfig(strict_feasibility=True))


def test_feasibility_counts():
    g = chain_graph(2)
    profile = make_profile(2, T=4, k=2, r=2, drift_sigma=0.2, seed=24)
    ds = generate_dataset(g, profile, NoiseSpec(STUDENT_T, 8.0), 2000, seed=24)
    res = recover_graph(ds)
    # C = 2 d^2 = 8, eps=0.5, delta=0.1 -> 320 Gaussian, x 1.75 at nu=8 -> 560
    assert res.feasibility.n_required == 560
    assert res.feasibility.passed
    assert res.feasibility.penalty == 1.75


def test_config_validation():
    with pytest.raises(ConfigError):
        EstimatorConfig(epsilon=0.0).validate()
    with pytest.raises(ConfigError):
        EstimatorConfig(split_rule="thirds").validate()
    with pytest.raises(ConfigError):
        EstimatorConfig(ridge=-1.0).validate()


def test_oracle_covariances_match_population():
    g = chain_graph(3)
    profile = make_profile(3, T=2, k=2, r=3, drift_sigma=0.1, seed=25)
    local, global_cov = oracle_covariances(g, profile)
    assert local.shape == (2, 2, 3, 3)
    assert np.allclose(global_cov, global_cov.T)
    for e in range(2):
        for t in range(2):
            assert np.all(np.linalg.eigvalsh(local[e, t]) > 0)
