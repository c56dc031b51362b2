"""Joint heightmap and texture generation with latent diffusion."""

from ._core import (
    Generator,
    __version__,
    checkpoint_info,
    corr_stats,
    denormalize_height,
    extract_sketch,
    fill_depressions,
    flow_accumulation_d8,
    frechet_distance,
    generate_pair,
    normalize_height,
    pearson_corr_pair,
    quantize_two_color,
    run_command,
    schedule_alpha_bar,
)

__all__ = [
    "Generator",
    "__version__",
    "checkpoint_info",
    "corr_stats",
    "denormalize_height",
    "extract_sketch",
    "fill_depressions",
    "flow_accumulation_d8",
    "frechet_distance",
    "generate_pair",
    "normalize_height",
    "pearson_corr_pair",
    "quantize_two_color",
    "run_command",
    "schedule_alpha_bar",
]
