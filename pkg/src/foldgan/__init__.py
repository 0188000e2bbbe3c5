"""foldgan: heatmap folding, synthetic load simulation, WGAN-GP training and TSTR scoring."""

from .errors import CheckpointError, ConfigError, FoldganError, ShapeError, TrainingDiverged
from .folding import (
    Heatmap,
    KernelEconomy,
    LoadSeries,
    TruncationWarning,
    fold,
    kernel_economy,
    normalize,
    unfold,
)
from .loadsim import (
    LabelledDataset,
    SimConfig,
    concat_datasets,
    simulate_dataset,
    simulate_household,
    split_dataset,
)
from .seeds import derive_seed, splitmix64
from .tstr import (
    ClassifierConfig,
    ClassMetrics,
    ConfusionMatrix,
    EvalReport,
    FiveNumber,
    TrialResult,
    boxplot_stats,
    build_classifier,
    class_metrics,
    evaluate,
    macro_average,
    oracle_sampler,
    run_tstr_trials,
    top_k,
    train_classifier,
)
from .wgan import (
    GanArch,
    GanCheckpoint,
    GanTrainConfig,
    TrainLog,
    build_critic,
    build_generator,
    critic_step,
    fit_dataset,
    fit_dims,
    generator_step,
    gradient_penalty,
    penalty_value,
    sample,
    train_wgan,
)

__version__ = "0.1.0"
