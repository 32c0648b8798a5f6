"""Self-attention NEAT: coevolved patch attention + NEAT controllers,
with CMA-ES weight tuning of the final network."""

from .attention import (
    AttentionConfig,
    AttentionParams,
    extract_patches,
    param_count,
    params_to_vector,
    patch_centers,
    score_patches,
    vector_to_params,
)
from .cmaes import CmaEs, CmaesConfig
from .envs import EnvSpec, Frame, PatchChase, StepResult, make_env
from .neat import (
    Genome,
    InnovationRegistry,
    NeatConfig,
    Network,
    compatibility_distance,
    crossover,
    mutate_structural,
    mutate_weights,
    next_generation,
    speciate,
)
from .pipeline import (
    EvaluationProtocol,
    FinalModel,
    SeesawTrainer,
    count_parameters,
    evaluate_individual,
    train_stage1,
    tune_stage2,
)

__version__ = "0.1.0"
