"""Stage orchestration, configuration and the patch/kernel size sweep."""

from .config import (
    PipelineConfig,
    default_config,
    load_config,
    parse_config,
    scene_name,
    write_config,
)
from .stages import (
    STAGE_FUNCS,
    STAGES,
    run_all,
    run_evaluate,
    run_infer,
    run_preprocess,
    run_reconstruct,
    run_refine,
    run_synth,
    run_train_cnn,
    run_train_svm,
)
from .sweep import SweepCell, evaluate_cell, feasibility_grid, format_grid, run_sweep

__all__ = [
    "PipelineConfig",
    "STAGES",
    "STAGE_FUNCS",
    "SweepCell",
    "default_config",
    "evaluate_cell",
    "feasibility_grid",
    "format_grid",
    "load_config",
    "parse_config",
    "run_all",
    "run_evaluate",
    "run_infer",
    "run_preprocess",
    "run_reconstruct",
    "run_refine",
    "run_sweep",
    "run_synth",
    "run_train_cnn",
    "run_train_svm",
    "scene_name",
    "write_config",
]
