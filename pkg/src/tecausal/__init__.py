"""Causal graph recovery from multi-environment, temporally
heteroskedastic time series, plus Monte Carlo validation of the
heavy-tail sample-complexity penalty."""

from .estimator import (EstimatorConfig, RecoveryResult, min_window,
                        recover_graph, recover_graph_oracle, required_samples,
                        tail_penalty)
from .metrics import MetricsReport, audrc, edge_ranking, f1, score, shd, threshold
from .sem import (GraphGenConfig, WeightedAdjacency, generate_random_dag,
                  mixing_matrix, validate_dag)
from .synth import (Dataset, NoiseSpec, VarianceProfile, generate_dataset,
                    make_profile, population_covariance, sample_noise)

__version__ = "0.1.0"
