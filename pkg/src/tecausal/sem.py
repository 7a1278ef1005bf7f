"""Structural model: weighted DAGs and the mixing matrix.

The model is the linear SEM X = B^T X + eps, equivalently X = A eps with
A = (I - B^T)^{-1}. ``weights[i, j] != 0`` means a directed edge i -> j.
``variable_order`` is a permutation of the variable indices such that
``weights[np.ix_(order, order)]`` is strictly lower triangular.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AcyclicityError, ConfigError, DataError
from .rng import substream

IDENTITY_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class WeightedAdjacency:
    dim: int
    weights: np.ndarray
    variable_order: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        order = np.asarray(self.variable_order, dtype=np.int64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variable_order", order)
        if w.shape != (self.dim, self.dim):
            raise DataError(f"weights must be {self.dim}x{self.dim}, got {w.shape}")
        if sorted(order.tolist()) != list(range(self.dim)):
            raise DataError("variable_order must be a permutation of range(dim)")
        permuted = w[np.ix_(order, order)]
        if np.any(np.triu(permuted) != 0):
            raise DataError("weights are not strictly lower triangular under variable_order")

    def causal_rank(self):
        """rank[v] = position of variable v in variable_order (roots last)."""
        rank = np.empty(self.dim, dtype=np.int64)
        rank[self.variable_order] = np.arange(self.dim)
        return rank

    def edge_count(self):
        return int(np.count_nonzero(self.weights))


@dataclass(frozen=True)
class MixingMatrix:
    dim: int
    values: np.ndarray


@dataclass(frozen=True)
class GraphGenConfig:
    dim: int
    sparsity: float = 0.5
    weight_low: float = 0.3
    weight_high: float = 0.9
    seed: int = 0

    def validate(self):
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if not (0 < self.sparsity <= 1):
            raise ConfigError(f"sparsity must lie in (0, 1], got {self.sparsity}")
        if not (0 < self.weight_low <= self.weight_high):
            raise ConfigError(
                f"need 0 < weight_low <= weight_high, got [{self.weight_low}, {self.weight_high}]"
            )


def generate_random_dag(cfg: GraphGenConfig) -> WeightedAdjacency:
    """Random DAG: strict lower-triangular skeleton under a random order.

    Each lower slot is filled independently with probability ``sparsity``;
    nonzero weights are uniform on +-[weight_low, weight_high]. Graphs with
    zero edges are rejected and resampled (F1 is undefined on them).
    """
    cfg.validate()
    d = cfg.dim
    rng = substream(cfg.seed, "sem", "graph")
    order = rng.permutation(d)
    tril = np.tril_indices(d, k=-1)
    while True:
        mask = rng.random(len(tril[0])) < cfg.sparsity
        if mask.any():
            break
    mag = rng.uniform(cfg.weight_low, cfg.weight_high, size=len(tril[0]))
    sign = np.where(rng.random(len(tril[0])) < 0.5, -1.0, 1.0)
    lower = np.zeros((d, d))
    lower[tril] = np.where(mask, sign * mag, 0.0)
    weights = np.zeros((d, d))
    weights[np.ix_(order, order)] = lower
    return WeightedAdjacency(dim=d, weights=weights, variable_order=order)


def validate_dag(weights: np.ndarray) -> np.ndarray:
    """Return a variable_order rendering ``weights`` strictly lower triangular.

    Raises AcyclicityError naming a cycle when the support is cyclic.
    """
    w = np.asarray(weights, dtype=np.float64)
    d = w.shape[0]
    support = w != 0
    # Kahn's algorithm on edges i -> j (i causes j). Sources come last in
    # variable_order, so build the topological order and reverse it.
    indeg = support.sum(axis=0)
    queue = sorted(np.flatnonzero(indeg == 0).tolist())
    topo = []
    indeg = indeg.copy()
    while queue:
        v = queue.pop(0)
        topo.append(v)
        for j in np.flatnonzero(support[v]):
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
        queue.sort()
    if len(topo) < d:
        remaining = set(range(d)) - set(topo)
        raise AcyclicityError(_find_cycle(support, remaining))
    return np.array(topo[::-1], dtype=np.int64)


def _find_cycle(support, candidates):
    start = min(candidates)
    path, seen = [start], {start}
    v = start
    while True:
        nxt = next(int(j) for j in np.flatnonzero(support[v]) if j in candidates)
        if nxt in seen:
            return path[path.index(nxt):]
        path.append(nxt)
        seen.add(nxt)
        v = nxt


def mixing_matrix(B: WeightedAdjacency) -> MixingMatrix:
    """A = (I - B^T)^{-1}; exact because B^T is nilpotent for a DAG."""
    d = B.dim
    m = np.eye(d) - B.weights.T
    A = np.linalg.inv(m)
    residual = np.linalg.norm(A @ m - np.eye(d))
    if residual > IDENTITY_RESIDUAL_TOL:
        raise DataError(f"mixing inverse residual {residual:.3e} exceeds tolerance")
    return MixingMatrix(dim=d, values=A)


def permute_variables(B: WeightedAdjacency, perm) -> WeightedAdjacency:
    """Relabel variable i -> perm[i]; causal ranks are preserved."""
    perm = np.asarray(perm, dtype=np.int64)
    d = B.dim
    new_w = np.zeros_like(B.weights)
    new_w[np.ix_(perm, perm)] = B.weights
    return WeightedAdjacency(dim=d, weights=new_w, variable_order=perm[B.variable_order])


def save_adjacency(B: WeightedAdjacency, path):
    order = ",".join(str(int(v)) for v in B.variable_order)
    with open(path, "w") as fh:
        fh.write(f"# d={B.dim} order={order}\n")
        for row in B.weights:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_adjacency(path) -> WeightedAdjacency:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# d="):
            raise DataError(f"bad adjacency header in {path}")
        parts = header[2:].split()
        d = int(parts[0].split("=")[1])
        order = np.array([int(v) for v in parts[1].split("=")[1].split(",")])
        rows = [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
    return WeightedAdjacency(dim=d, weights=np.array(rows), variable_order=order)
