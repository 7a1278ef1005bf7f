"""Multi-environment, temporally heteroskedastic sample generation.

Noise variance factorizes as sigma2[i, t, e] = beta[i, t] * gamma[i, t, e]:
a geometric-random-walk temporal baseline times environmental multipliers
that are active on only r dimensions per time step (insufficient
heterogeneity). Student-t noise uses the covariance-matched representation
eps = sqrt((nu - 2) / W) * Z with one chi-square radial W shared across the
dimensions of each noise vector.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError, InfiniteMomentError
from .rng import substream
from .sem import WeightedAdjacency, mixing_matrix

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = GAUSSIAN
    dof: float | None = None

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, STUDENT_T):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == STUDENT_T:
            if self.dof is None:
                raise ConfigError("student_t noise requires dof")
            if self.dof <= 2:
                raise InfiniteMomentError(
                    f"student_t with dof={self.dof} has no finite covariance (need dof > 2)"
                )

    @property
    def is_gaussian(self):
        return self.kind == GAUSSIAN

    def to_dict(self):
        return {"kind": self.kind, "dof": self.dof}

    @staticmethod
    def from_dict(d):
        return NoiseSpec(kind=d["kind"], dof=d.get("dof"))


@dataclass(frozen=True)
class VarianceProfile:
    beta: np.ndarray        # (d, T) temporal baselines
    gamma: np.ndarray       # (d, T, k) environmental multipliers
    rank_r: int
    drift_sigma: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        if beta.ndim != 2 or gamma.ndim != 3 or gamma.shape[:2] != beta.shape:
            raise ConfigError("beta must be (d, T) and gamma (d, T, k)")
        if np.any(beta <= 0) or np.any(gamma <= 0):
            raise ConfigError("variance factors must be strictly positive")

    @property
    def dim(self):
        return self.beta.shape[0]

    @property
    def n_steps(self):
        return self.beta.shape[1]

    @property
    def n_envs(self):
        return self.gamma.shape[2]

    def sigma2(self):
        """Full variance tensor, shape (d, T, k)."""
        return self.beta[:, :, None] * self.gamma

    def content_hash(self):
        h = hashlib.sha256()
        h.update(self.beta.tobytes())
        h.update(self.gamma.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray     # (k, T, n_per_bin, d)
    n_per_bin: int
    seed: int
    spec: NoiseSpec
    dims: tuple             # (d, T, k)

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise DataError("dataset contains non-finite samples")


def temporal_baseline(d, T, drift_sigma, seed):
    """Geometric random walk baselines beta[i, t], started at 1."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if drift_sigma < 0:
        raise ConfigError("drift_sigma must be >= 0")
    rng = substream(seed, "synth", "baseline")
    incr = rng.normal(0.0, drift_sigma, size=(d, T - 1)) if T > 1 else np.zeros((d, 0))
    logbeta = np.concatenate([np.zeros((d, 1)), np.cumsum(incr, axis=1)], axis=1)
    return np.exp(logbeta)


def env_multipliers(d, T, k, r, seed, subset_mode="random"):
    """Environmental multipliers gamma[i, t, e] with per-step rank r.

    subset_mode:
      "random"   fresh uniform r-subset of active dimensions per step (default)
      "fixed"    one r-subset active at every step (non-identifiable demo)
      "disjoint" consecutive blocks of size r cycling through the dimensions,
                 so T = ceil(d/r) steps cover every dimension exactly once
    """
    if not (1 <= r <= d):
        raise ConfigError(f"need 1 <= r <= d, got r={r}, d={d}")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if subset_mode not in ("random", "fixed", "disjoint"):
        raise ConfigError(f"unknown subset_mode {subset_mode!r}")
    rng = substream(seed, "synth", "multipliers")
    gamma = np.ones((d, T, k))
    fixed_subset = rng.choice(d, size=r, replace=False) if subset_mode == "fixed" else None
    for t in range(T):
        if subset_mode == "random":
            active = rng.choice(d, size=r, replace=False)
        elif subset_mode == "fixed":
            active = fixed_subset
        else:
            active = np.arange(t * r, (t + 1) * r) % d
            active = np.unique(active)
        gamma[active, t, :] = np.exp(rng.standard_normal((len(active), k)))
    return gamma


def make_profile(d, T, k, r, drift_sigma=0.1, seed=0, subset_mode="random"):
    beta = temporal_baseline(d, T, drift_sigma, seed)
    gamma = env_multipliers(d, T, k, r, seed, subset_mode=subset_mode)
    return VarianceProfile(beta=beta, gamma=gamma, rank_r=r, drift_sigma=drift_sigma)


def sample_noise(sigma_diag, spec: NoiseSpec, n, seed=None, rng=None):
    """n draws of the d-dimensional noise vector with Cov = diag(sigma_diag).

    For student_t the normal part Z is drawn before the radial W, so the
    nu -> infinity limit reproduces the Gaussian draws of the same stream.
    """
    sigma_diag = np.asarray(sigma_diag, dtype=np.float64)
    if np.any(sigma_diag <= 0):
        raise ConfigError("all noise variances must be > 0")
    if rng is None:
        rng = substream(seed, "synth", "noise")
    scale = np.sqrt(sigma_diag)
    z = rng.standard_normal((n, len(sigma_diag))) * scale
    if spec.is_gaussian:
        return z
    w = rng.chisquare(spec.dof, size=n)
    return np.sqrt((spec.dof - 2.0) / w)[:, None] * z


def population_covariance(B: WeightedAdjacency, sigma_diag):
    """Exact Cov(X) = A diag(sigma2) A^T for the given noise variances."""
    A = mixing_matrix(B).values
    cov = A @ np.diag(np.asarray(sigma_diag, dtype=np.float64)) @ A.T
    return (cov + cov.T) / 2.0


def generate_dataset(B: WeightedAdjacency, profile: VarianceProfile,
                     spec: NoiseSpec, n_per_bin, seed) -> Dataset:
    """Samples X = A eps per (environment, time-bin).

    Noise columns are drawn from substreams keyed by each variable's causal
    rank, and the radial draw from a per-bin stream, so relabeling the
    variables of (B, profile) permutes generated samples coordinatewise.
    """
    d, T, k = profile.dim, profile.n_steps, profile.n_envs
    if B.dim != d:
        raise ConfigError(f"adjacency dim {B.dim} != profile dim {d}")
    if n_per_bin < 1:
        raise ConfigError("n_per_bin must be >= 1")
    A = mixing_matrix(B).values
    rank = B.causal_rank()
    sigma2 = profile.sigma2()
    samples = np.empty((k, T, n_per_bin, d))
    for e in range(k):
        for t in range(T):
            eps = np.empty((n_per_bin, d))
            for v in range(d):
                rng_z = substream(seed, "synth", "z", t, e, int(rank[v]))
                eps[:, v] = rng_z.standard_normal(n_per_bin) * np.sqrt(sigma2[v, t, e])
            if not spec.is_gaussian:
                rng_w = substream(seed, "synth", "radial", t, e)
                w = rng_w.chisquare(spec.dof, size=n_per_bin)
                eps *= np.sqrt((spec.dof - 2.0) / w)[:, None]
            samples[e, t] = eps @ A.T
    return Dataset(samples=samples, n_per_bin=n_per_bin, seed=seed,
                   spec=spec, dims=(d, T, k))


# ---------------------------------------------------------------------------
# dataset export / import: one CSV per (e, t) bin plus a JSON manifest.
# Doubles are written as Python repr (shortest round-trip), so import is
# bit-exact.

def export_dataset(ds: Dataset, profile: VarianceProfile, out_dir,
                   truth: WeightedAdjacency | None = None):
    os.makedirs(out_dir, exist_ok=True)
    d, T, k = ds.dims
    for e in range(k):
        for t in range(T):
            path = os.path.join(out_dir, f"env{e + 1}_t{t + 1}.csv")
            with open(path, "w") as fh:
                for row in ds.samples[e, t]:
                    fh.write(",".join(repr(float(x)) for x in row) + "\n")
    manifest = {
        "dims": {"d": d, "T": T, "k": k},
        "n_per_bin": ds.n_per_bin,
        "seed": ds.seed,
        "noise": ds.spec.to_dict(),
        "profile_hash": profile.content_hash(),
        "profile": {
            "beta": profile.beta.tolist(),
            "gamma": profile.gamma.tolist(),
            "rank_r": profile.rank_r,
            "drift_sigma": profile.drift_sigma,
        },
    }
    if truth is not None:
        manifest["truth"] = {
            "weights": truth.weights.tolist(),
            "variable_order": truth.variable_order.tolist(),
        }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def import_dataset(in_dir):
    """Reverse export_dataset. Returns (Dataset, VarianceProfile, truth or None)."""
    manifest_path = os.path.join(in_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"missing manifest.json in {in_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    dims = manifest["dims"]
    d, T, k = dims["d"], dims["T"], dims["k"]
    n = manifest["n_per_bin"]
    samples = np.empty((k, T, n, d))
    for e in range(k):
        for t in range(T):
            path = os.path.join(in_dir, f"env{e + 1}_t{t + 1}.csv")
            if not os.path.exists(path):
                raise DataError(f"missing bin file {path}")
            with open(path) as fh:
                rows = [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
            samples[e, t] = np.array(rows)
    prof = manifest["profile"]
    profile = VarianceProfile(
        beta=np.array(prof["beta"]),
        gamma=np.array(prof["gamma"]),
        rank_r=prof["rank_r"],
        drift_sigma=prof["drift_sigma"],
    )
    if profile.content_hash() != manifest["profile_hash"]:
        raise DataError("profile hash mismatch: manifest is inconsistent")
    ds = Dataset(samples=samples, n_per_bin=n, seed=manifest["seed"],
                 spec=NoiseSpec.from_dict(manifest["noise"]), dims=(d, T, k))
    truth = None
    if "truth" in manifest:
        truth = WeightedAdjacency(
            dim=d,
            weights=np.array(manifest["truth"]["weights"]),
            variable_order=np.array(manifest["truth"]["variable_order"]),
        )
    return ds, profile, truth
