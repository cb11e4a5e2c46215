"""Desk-scale model-extraction laboratory.

Train a small MLP "teacher", lock it behind a call-budgeted oracle (in
process or over HTTP), and distill a "student" from a synthetic proxy pool
using active sample selection and kNN pseudo-labeling.
"""

from .attack import (
    ATTACK_MODES,
    AblationResult,
    AttackConfig,
    LabeledProxySet,
    RoundRecord,
    RunReport,
    run_ablation_suite,
    run_attack,
)
from .bench import BENCHMARKS, Benchmark, get_benchmark
from .data import (
    DatasetFormatError,
    DatasetSpec,
    GENERATORS,
    LabeledDataset,
    ProxyPool,
    generate_proxy_pool,
    generate_true_dataset,
    load_dataset,
    load_pool,
    save_dataset,
    save_pool,
    split_validation,
)
from .metrics import (
    MetricsRow,
    SweepResult,
    SweepSpec,
    agreement_accuracy,
    pseudo_label_accuracy,
    read_metrics_csv,
    run_sweep,
    train_teacher,
    write_metrics_csv,
)
from .network import (
    CheckpointError,
    Network,
    NetworkSpec,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_until_convergence,
    xavier_init,
)
from .oracle import (
    BudgetExhausted,
    DimensionMismatch,
    LocalOracle,
    OracleResponse,
    unbudgeted_reference_labels,
)
from .pseudo_label import hard_pseudo_label, knn, pseudo_label_pool, soft_pseudo_label
from .sampler import compute_centroids, sampling_probability, select_batch
from .service import (
    OracleServer,
    ProtocolViolation,
    RemoteOracle,
    ServiceConfig,
    TransportError,
    serve,
    serve_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_MODES",
    "AblationResult",
    "AttackConfig",
    "BENCHMARKS",
    "Benchmark",
    "BudgetExhausted",
    "CheckpointError",
    "DatasetFormatError",
    "DatasetSpec",
    "DimensionMismatch",
    "GENERATORS",
    "LabeledDataset",
    "LabeledProxySet",
    "LocalOracle",
    "MetricsRow",
    "Network",
    "NetworkSpec",
    "OracleResponse",
    "OracleServer",
    "ProtocolViolation",
    "ProxyPool",
    "RemoteOracle",
    "RoundRecord",
    "RunReport",
    "ServiceConfig",
    "SweepResult",
    "SweepSpec",
    "TrainConfig",
    "TransportError",
    "serve",
    "agreement_accuracy",
    "compute_centroids",
    "generate_proxy_pool",
    "generate_true_dataset",
    "get_benchmark",
    "hard_pseudo_label",
    "knn",
    "load_checkpoint",
    "load_dataset",
    "load_pool",
    "pseudo_label_accuracy",
    "pseudo_label_pool",
    "read_metrics_csv",
    "run_ablation_suite",
    "run_attack",
    "run_sweep",
    "sampling_probability",
    "save_checkpoint",
    "save_dataset",
    "save_pool",
    "select_batch",
    "serve_oracle",
    "soft_pseudo_label",
    "split_validation",
    "train_teacher",
    "train_until_convergence",
    "unbudgeted_reference_labels",
    "write_metrics_csv",
    "xavier_init",
]
