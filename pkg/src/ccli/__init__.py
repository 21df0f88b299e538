"""ccli: concept learning and inference over pre-extracted embedding bundles.

The engine is organized as:

* :mod:`ccli.numerics` -- dense kernels, loss, AdamW, cosine schedule
* :mod:`ccli.rng` -- splitmix64 determinism primitives
* :mod:`ccli.feature_store` -- bundle format, episode sampler, synthetic data
* :mod:`ccli.concepts` -- description- and class-concept mining
* :mod:`ccli.model` -- forward pass, zero-shot baseline, hand gradients
* :mod:`ccli.trainer` -- training loop and checkpoints
* :mod:`ccli.evaluation` -- reports, domain shift, sweeps
* :mod:`ccli.cli` -- the ``ccli`` command
"""

from .concepts import (
    ConceptBank,
    build_concept_bank,
    learn_class_concepts,
    learn_description_concepts,
    load_concept_bank,
    save_concept_bank,
    top_i_select,
)
from .errors import (
    CCLIError,
    ClassMapError,
    CorruptBundleError,
    FormatError,
    HyperparamError,
    InsufficientShotsError,
    InsufficientSupportError,
    LabelError,
    NonFiniteError,
    NonFiniteGradError,
    ScheduleError,
    ShapeError,
    ZeroVectorError,
)
from .evaluation import (
    DomainShiftReport,
    EvalReport,
    SweepRow,
    concept_report,
    evaluate,
    evaluate_domain_shift,
    evaluate_zero_shot,
    run_pipeline,
    sweep,
    write_sweep_csv,
)
from .feature_store import (
    BundleMeta,
    Episode,
    FeatureBundle,
    SynthSpec,
    gen_synth,
    read_bundle,
    sample_episode,
    write_bundle,
)
from .model import (
    ForwardOutputs,
    Hyperparams,
    ModelParams,
    ParamGrads,
    affinity,
    backward,
    forward,
    init_params,
    zero_shot_logits,
)
from .numerics import (
    OptimizerState,
    ScheduleConfig,
    adamw_step,
    cosine_lr,
    cosine_sim,
    l2_normalize_rows,
    softmax_ce,
)
from .rng import SplitMix64, stream_seed
from .trainer import (
    OptimizerConfig,
    TrainConfig,
    TrainLog,
    effective_hyperparams,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
