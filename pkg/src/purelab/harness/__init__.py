from .checkpoint_io import (
    file_hash,
    load_classifier,
    load_denoiser,
    load_tensors,
    save_classifier,
    save_denoiser,
    save_tensors,
)
from .config import canonical_text, config_hash, dump_config, load_config, parse_config_text
from .dataset import Dataset, make_dataset
from .experiment import (
    EvalReport,
    ExperimentConfig,
    attack_from_section,
    attack_sections,
    defense_from_section,
    defense_sections,
    evaluate,
    experiment_from_sections,
    experiment_hashes,
    experiment_sections,
    select_subset,
)
from .presets import list_presets, run_preset, toy_stack

__all__ = [
    "Dataset",
    "EvalReport",
    "ExperimentConfig",
    "attack_from_section",
    "attack_sections",
    "canonical_text",
    "config_hash",
    "defense_from_section",
    "defense_sections",
    "dump_config",
    "evaluate",
    "experiment_from_sections",
    "experiment_hashes",
    "experiment_sections",
    "file_hash",
    "list_presets",
    "load_classifier",
    "load_config",
    "load_denoiser",
    "load_tensors",
    "make_dataset",
    "parse_config_text",
    "run_preset",
    "save_classifier",
    "save_denoiser",
    "save_tensors",
    "select_subset",
    "toy_stack",
]
