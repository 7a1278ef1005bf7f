"""Graph recovery from per-bin precision shifts.

Pipeline: (1) a feasibility check comparing the per-bin sample count to
the size needed for the requested covariance accuracy, inflated by the
heavy-tail penalty 1 + 3/(nu - 4); (2) per-(time, environment) precision
matrices, differenced against a pooled global precision and summed into
two group aggregates; (3) a two-group generalized eigenproblem whose
eigenvectors are the mixing columns, followed by row assignment and
scaling of the unmixing matrix and a causal-order search.

The precision difference is the estimable surrogate for the log-density
Hessian difference: for both Gaussian and Student-t noise with diagonal
scale, the Hessian at the mode is a negative scalar multiple of the
precision, so differences of precisions carry the same rank and
eigenvector geometry.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ._kernels import bin_second_moments
from .exceptions import (ConditioningError, ConfigError, CrowdingWarning,
                         DataError, DegenerateUnmixingError,
                         IdentifiabilityError, InfiniteMomentError)
from .sem import WeightedAdjacency
from .synth import Dataset, NoiseSpec, VarianceProfile, population_covariance

EXHAUSTIVE_ORDER_LIMIT = 8


@dataclass(frozen=True)
class PrecisionShift:
    s: int
    i: int
    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=np.float64)
        object.__setattr__(self, "omega", om)
        if np.max(np.abs(om - om.T)) > 1e-8:
            raise DataError("precision shift is not symmetric to tolerance")


@dataclass(frozen=True)
class AggregateHessian:
    psi: np.ndarray
    contributing_count: int
    rank: int


@dataclass(frozen=True)
class Feasibility:
    n_required: int
    n_per_bin: int
    passed: bool
    penalty: float


@dataclass(frozen=True)
class RecoveryResult:
    mixing_est: np.ndarray
    unmixing_perm: np.ndarray
    adjacency_est: np.ndarray
    causal_order: np.ndarray
    eigenvalues: np.ndarray
    spectral_gaps: np.ndarray
    mean_spectral_gap: float
    feasibility: Feasibility


@dataclass(frozen=True)
class EstimatorConfig:
    ridge: float | None = None          # None -> 1e-6 * trace / d per matrix
    split_rule: str = "parity"          # "parity" | "contiguous"
    eig_tol: float = 1e-8
    epsilon: float = 0.5
    delta: float = 0.1
    stability_constant: float | None = None  # None -> 2 d^2
    tau: float = 0.3
    strict_feasibility: bool = False
    prune_order: bool = True

    def validate(self):
        if self.ridge is not None and self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if not (0 < self.epsilon < 1) or not (0 < self.delta < 1):
            raise ConfigError("epsilon and delta must lie in (0, 1)")
        if self.split_rule not in ("parity", "contiguous"):
            raise ConfigError(f"unknown split_rule {self.split_rule!r}")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")


def tail_penalty(nu):
    """Sample-complexity inflation 1 + 3/(nu - 4) of Student-t covariance
    estimation over the Gaussian baseline. Decreasing in nu; -> 1 at infinity."""
    if nu <= 4:
        raise InfiniteMomentError(
            f"tail penalty is infinite at dof={nu}: fourth moments require nu > 4"
        )
    return 1.0 + 3.0 / (nu - 4.0)


def required_samples(epsilon, delta, nu=None, C=1.0):
    """Per-bin sample count for relative covariance error epsilon at
    confidence 1 - delta; Student-t inflates the Gaussian count by the
    tail penalty."""
    if not (0 < epsilon < 1) or not (0 < delta < 1):
        raise ConfigError("epsilon and delta must lie in (0, 1)")
    if C <= 0:
        raise ConfigError("C must be > 0")
    n_gauss = math.ceil(C / (delta * epsilon**2))
    if nu is None or math.isinf(nu):
        return n_gauss
    return math.ceil(n_gauss * tail_penalty(nu))


def min_window(d, r):
    """Smallest window length that can accumulate full rank d from
    per-step rank-r variance shifts: ceil(d / r)."""
    if r < 1:
        raise ConfigError("r must be >= 1")
    if not (r <= d):
        raise ConfigError(f"need r <= d, got r={r}, d={d}")
    return math.ceil(d / r)


def _default_ridge(cov):
    return 1e-6 * np.trace(cov) / cov.shape[0]


def local_precision(samples, ridge=None, centered=True):
    """Inverse of the (optionally mean-centered) per-bin sample covariance."""
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite samples in bin")
    n, d = x.shape
    if centered:
        x = x - x.mean(axis=0)
    cov = x.T @ x / n
    return precision_from_covariance(cov, ridge=ridge)


def precision_from_covariance(cov, ridge=None):
    d = cov.shape[0]
    if ridge is None:
        ridge = _default_ridge(cov)
    reg = cov + ridge * np.eye(d)
    try:
        theta = np.linalg.inv(reg)
    except np.linalg.LinAlgError as err:
        raise ConditioningError(
            "singular covariance; increase n_per_bin or set a positive ridge"
        ) from err
    return (theta + theta.T) / 2.0


def precision_shift(theta_local, theta_global, s=0, i=0) -> PrecisionShift:
    if theta_local.shape != theta_global.shape:
        raise DataError("precision shapes do not match")
    omega = theta_local - theta_global
    omega = (omega + omega.T) / 2.0
    return PrecisionShift(s=s, i=i, omega=omega)


def _numerical_rank(sym, eig_tol):
    vals = np.abs(np.linalg.eigvalsh(sym))
    top = vals.max()
    if top == 0:
        return 0
    return int(np.sum(vals > eig_tol * top))


def aggregate(shifts, eig_tol=1e-8) -> AggregateHessian:
    if not shifts:
        raise ConfigError("aggregate requires a nonempty list of shifts")
    d = shifts[0].omega.shape[0]
    psi = np.zeros((d, d))
    for sh in shifts:
        if sh.omega.shape != (d, d):
            raise DataError("inconsistent shift dimensions")
        psi += sh.omega
    return AggregateHessian(psi=psi, contributing_count=len(shifts),
                            rank=_numerical_rank(psi, eig_tol))


def _split_groups(shifts, split_rule):
    if split_rule == "parity":
        group_a = [sh for sh in shifts if sh.s % 2 == 0]
        group_b = [sh for sh in shifts if sh.s % 2 == 1]
    else:
        steps = sorted({sh.s for sh in shifts})
        half = set(steps[: len(steps) // 2])
        group_a = [sh for sh in shifts if sh.s in half]
        group_b = [sh for sh in shifts if sh.s not in half]
    if not group_a or not group_b:
        raise IdentifiabilityError(
            "need at least two time steps to form the two diagonalization groups"
        )
    return group_a, group_b


def joint_diagonalize(shifts, split_rule="parity", eig_tol=1e-8, r_hint=None):
    """Two-group generalized eigenproblem recovering the mixing matrix.

    Returns (A_hat, eigenvalues sorted descending). Columns of A_hat are
    unit-norm with their largest-magnitude entry positive. Raises
    IdentifiabilityError if either group aggregate is rank deficient, and
    emits CrowdingWarning when consecutive eigenvalues nearly coincide.
    """
    group_a, group_b = _split_groups(shifts, split_rule)
    agg_a = aggregate(group_a, eig_tol)
    agg_b = aggregate(group_b, eig_tol)
    d = agg_a.psi.shape[0]
    if agg_a.rank < d or agg_b.rank < d:
        t_seen = len({sh.s for sh in shifts})
        hint = ""
        if r_hint:
            hint = f"; rank-{r_hint} shifts need a window of at least {min_window(d, r_hint)} steps"
        raise IdentifiabilityError(
            f"group aggregates have ranks ({agg_a.rank}, {agg_b.rank}) < d={d} "
            f"over {t_seen} time steps: the accumulated variance shifts do not "
            f"span the space{hint}"
        )
    psi1, psi2 = agg_a.psi, agg_b.psi
    eigvals_psi1 = np.linalg.eigvalsh(psi1)
    if eigvals_psi1.min() > eig_tol * np.abs(eigvals_psi1).max():
        # definite pencil: whiten by the symmetric square root, then the
        # problem is an ordinary symmetric eigenproblem with real output
        vals, vecs = np.linalg.eigh(psi1)
        white = vecs @ np.diag(vals**-0.5) @ vecs.T
        lam, u = np.linalg.eigh(white @ psi2 @ white)
        v = white @ u
    else:
        # indefinite pencil from signed shifts: QZ, real parts
        lam, v = scipy.linalg.eig(psi2, psi1)
        lam = np.real(lam)
        v = np.real(v)
    order = _sorted_eig_order(lam, v)
    lam, v = lam[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    for j in range(d):
        pivot = np.argmax(np.abs(v[:, j]))
        if v[pivot, j] < 0:
            v[:, j] = -v[:, j]
    scale = max(np.abs(lam).max(), 1.0)
    gaps = -np.diff(lam)
    if np.any(gaps < eig_tol * scale):
        warnings.warn(
            "eigenvalue crowding: consecutive eigenvalues within tolerance; "
            "column assignment may be unstable",
            CrowdingWarning,
        )
    return v, lam


def _sorted_eig_order(lam, v):
    # descending eigenvalues; ties broken by eigenvector lexicographic order
    keys = [tuple(np.round(v[:, j], 12)) for j in range(len(lam))]
    return sorted(range(len(lam)), key=lambda j: (-lam[j], keys[j]))


def permute_and_scale(w_hat, prune_order=True):
    """Row-assign, scale, and order the unmixing matrix.

    Finds the row permutation maximizing prod |diag| (assignment on
    -log|w|), scales rows to unit diagonal, then searches the simultaneous
    row/column permutation minimizing squared mass above the diagonal.
    Returns (W_perm, causal_order) with W_perm in the original variable
    coordinates; if prune_order, entries inconsistent with the recovered
    order are zeroed.
    """
    w = np.asarray(w_hat, dtype=np.float64)
    d = w.shape[0]
    absw = np.abs(w)
    with np.errstate(divide="ignore"):
        cost = -np.log(absw)
    cost[~np.isfinite(cost)] = 1e12
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(d, dtype=np.int64)
    perm[cols] = rows
    w = w[perm]
    diag = np.diag(w).copy()
    if np.any(np.abs(diag) < 1e-12):
        raise DegenerateUnmixingError(
            "optimal row assignment leaves a zero diagonal entry"
        )
    w = w / diag[:, None]
    order = _best_causal_order(w)
    if prune_order:
        pos = np.empty(d, dtype=np.int64)
        pos[order] = np.arange(d)
        mask = pos[:, None] >= pos[None, :]  # keep diagonal and lower-order mass
        w = np.where(mask, w, 0.0)
        np.fill_diagonal(w, 1.0)
    return w, order


def _upper_mass(w, order):
    p = w[np.ix_(order, order)]
    return float(np.sum(np.triu(p, k=1) ** 2))


def _best_causal_order(w):
    d = w.shape[0]
    if d <= EXHAUSTIVE_ORDER_LIMIT:
        best, best_mass = None, np.inf
        for perm in itertools.permutations(range(d)):
            mass = _upper_mass(w, list(perm))
            if mass < best_mass - 1e-15:
                best, best_mass = perm, mass
        return np.array(best, dtype=np.int64)
    # greedy for larger d: repeatedly peel the variable whose remaining row
    # of B = I - W carries the least squared mass (an approximate root)
    b = np.eye(d) - w
    remaining = list(range(d))
    order = []
    while remaining:
        sub = np.ix_(remaining, remaining)
        mass = np.sum(b[sub] ** 2, axis=0) - b[sub][np.arange(len(remaining)), np.arange(len(remaining))] ** 2
        pick = remaining[int(np.argmin(mass))]
        order.append(pick)
        remaining.remove(pick)
    return np.array(order[::-1], dtype=np.int64)


def spectral_gap_profile(spectrum):
    """Sorted consecutive eigenvalue differences and their mean."""
    lam = np.sort(np.asarray(spectrum, dtype=np.float64))
    if lam.size < 2:
        raise ConfigError("need at least two eigenvalues")
    gaps = np.diff(lam)
    return gaps, float(gaps.mean())


def _feasibility(spec: NoiseSpec, n_per_bin, d, cfg: EstimatorConfig) -> Feasibility:
    C = cfg.stability_constant if cfg.stability_constant is not None else 2.0 * d * d
    if spec.is_gaussian:
        penalty = 1.0
        n_req = required_samples(cfg.epsilon, cfg.delta, C=C)
    elif spec.dof > 4:
        penalty = tail_penalty(spec.dof)
        n_req = required_samples(cfg.epsilon, cfg.delta, nu=spec.dof, C=C)
    else:
        # below finite fourth moment no finite bound exists
        penalty = math.inf
        n_req = int(1e18)
    return Feasibility(n_required=n_req, n_per_bin=n_per_bin,
                       passed=n_per_bin >= n_req, penalty=penalty)


def recover_from_covariances(local_covs, global_cov, cfg: EstimatorConfig,
                             feasibility: Feasibility | None = None,
                             r_hint=None) -> RecoveryResult:
    """Phases 2-3 on precomputed per-bin covariances.

    local_covs: array (k, T, d, d); global_cov: (d, d).
    """
    cfg.validate()
    local_covs = np.asarray(local_covs, dtype=np.float64)
    k, T, d, _ = local_covs.shape
    theta_global = precision_from_covariance(global_cov, ridge=cfg.ridge)
    shifts = []
    for t in range(T):
        for e in range(k):
            theta = precision_from_covariance(local_covs[e, t], ridge=cfg.ridge)
            shifts.append(precision_shift(theta, theta_global, s=t, i=e))
    a_hat, lam = joint_diagonalize(shifts, split_rule=cfg.split_rule,
                                   eig_tol=cfg.eig_tol, r_hint=r_hint)
    w_hat = np.linalg.inv(a_hat)
    w_perm, order = permute_and_scale(w_hat, prune_order=cfg.prune_order)
    # W estimates I - B^T, so transpose I - W back into B's edge convention
    # (b_hat[i, j] is the weight of edge i -> j)
    b_hat = (np.eye(d) - w_perm).T
    np.fill_diagonal(b_hat, 0.0)
    order = order[::-1].copy()
    gaps, mean_gap = spectral_gap_profile(lam)
    if feasibility is None:
        feasibility = Feasibility(n_required=0, n_per_bin=0, passed=True, penalty=1.0)
    return RecoveryResult(
        mixing_est=a_hat,
        unmixing_perm=w_perm,
        adjacency_est=b_hat,
        causal_order=order,
        eigenvalues=lam,
        spectral_gaps=gaps,
        mean_spectral_gap=mean_gap,
        feasibility=feasibility,
    )


def recover_graph(ds: Dataset, cfg: EstimatorConfig = EstimatorConfig()) -> RecoveryResult:
    """Full pipeline on sampled data (phases 1-3)."""
    cfg.validate()
    d, T, k = ds.dims
    feas = _feasibility(ds.spec, ds.n_per_bin, d, cfg)
    if not feas.passed:
        msg = (f"Insufficient samples to bound error: n_per_bin={feas.n_per_bin} "
               f"< required {feas.n_required}. Increase bin size.")
        if cfg.strict_feasibility:
            raise DataError(msg)
        warnings.warn(msg)
    flat = ds.samples.reshape(-1, d)
    global_cov = flat.T @ flat / flat.shape[0]  # pooled, uncentered
    local_seconds = bin_second_moments(ds.samples)
    # mean-center the per-bin covariances
    means = ds.samples.mean(axis=2)
    local_covs = local_seconds - means[..., :, None] * means[..., None, :]
    return recover_from_covariances(local_covs, global_cov, cfg, feasibility=feas)


def oracle_covariances(B: WeightedAdjacency, profile: VarianceProfile):
    """Population per-bin and pooled covariances for the noiseless pipeline."""
    sigma2 = profile.sigma2()  # (d, T, k)
    d, T, k = sigma2.shape
    local = np.empty((k, T, d, d))
    for e in range(k):
        for t in range(T):
            local[e, t] = population_covariance(B, sigma2[:, t, e])
    global_cov = population_covariance(B, sigma2.mean(axis=(1, 2)))
    return local, global_cov


def recover_graph_oracle(B: WeightedAdjacency, profile: VarianceProfile,
                         cfg: EstimatorConfig = EstimatorConfig()) -> RecoveryResult:
    """Noiseless pipeline: population covariances replace sample estimates."""
    local, global_cov = oracle_covariances(B, profile)
    # exact covariances need no ridge; a nonzero default would bias them
    cfg = EstimatorConfig(**{**cfg.__dict__, "ridge": 0.0 if cfg.ridge is None else cfg.ridge})
    return recover_from_covariances(local, global_cov, cfg, r_hint=profile.rank_r)
