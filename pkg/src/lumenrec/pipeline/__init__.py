from .config import GenConfig, RunConfig, toy_gen_config, paper_gen_config
from .ablation import VARIANTS, ablation_runner

__all__ = [
    "GenConfig",
    "RunConfig",
    "toy_gen_config",
    "paper_gen_config",
    "VARIANTS",
    "ablation_runner",
]
