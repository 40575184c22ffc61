"""Query-efficient flattening of hierarchical clustering ensembles driven by
pairwise same/different feedback."""

from .datagen import (
    ConfigError,
    DatasetFormatError,
    GeneratorConfig,
    WaveformDataset,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .engine import (
    CfarConfig,
    RunError,
    RunResult,
    TreeSummary,
    auto_flatten_baseline,
    find_one_block,
    run,
    test_purity,
)
from .forest import (
    IMPURE,
    PURE,
    UNKNOWN,
    CompositionTree,
    Forest,
    LatticeViolationError,
    PurityMap,
    contract,
    from_linkage,
    ids_of,
    mark_impure,
    mark_pure,
    mask_of,
    minimal_extension,
)
from .metrics import (
    BenchmarkRow,
    RecoveryReport,
    ami,
    benchmark,
    recovery_rates,
    summarize,
    sweep,
)
from .oracle import (
    GroundTruthOracle,
    InferenceEngine,
    InteractiveSource,
    NoisyOracle,
    QueryRecord,
    SessionAbortedError,
    replay_log,
)
from .treegen import (
    EnsembleConfig,
    LinkageTree,
    build_ensemble,
    linkage,
    load_linkage,
    pairwise_distance,
    preprocess,
    reduce,
    save_linkage,
)

__version__ = "0.1.0"
