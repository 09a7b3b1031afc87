"""
Loss Ablation Runner

Recovers the same photo under each loss variant with one shared seed and
collects an EvalReport row per variant: the plain diffuse + adversarial
objective, with the Fourier term, with Fourier + perceptual, and with the
Fourier term switched off for the roughness or specular map.
"""

import logging
import os
import time
from typing import Dict, List, Optional

import pandas as pd
from tqdm import tqdm

from core.models import LdrImage, SvbrdfMaps
from extraction.diffuse_guess import guess_diffuse
from extraction.image_io import save_maps
from optimization.checkpoint import Checkpoint
from optimization.losses import VggFeatureExtractor
from optimization.trainer import TrainConfig, finetune, inference_crop, prepare_perceptual, rerender, train_from_scratch
from reporting.chart_generator import comparison_panels, create_comparison_grid, create_spot_ratio_heatmap
from reporting.metrics_calculator import evaluate

logger = logging.getLogger(__name__)

ALL_MAPS = (True, True, True, True)

# Weight overrides and Fourier per-map flags (diffuse, specular, roughness, normal).
VARIANTS: Dict[str, Dict] = {
    'eq1_only': {'weights': {'lambda_fourier': 0.0, 'lambda_perceptual': 0.0}, 'flags': ALL_MAPS},
    'fourier': {'weights': {'lambda_perceptual': 0.0}, 'flags': ALL_MAPS},
    'fourier_perceptual': {'weights': {}, 'flags': ALL_MAPS},
    'fourier_no_roughness': {'weights': {'lambda_perceptual': 0.0}, 'flags': (True, True, False, True)},
    'fourier_no_specular': {'weights': {'lambda_perceptual': 0.0}, 'flags': (True, False, True, True)},
}


def variant_config(base: TrainConfig, variant: str) -> TrainConfig:
    if variant not in VARIANTS:
        raise ValueError(f"Unknown ablation variant '{variant}', expected one of {list(VARIANTS)}")
    spec = VARIANTS[variant]
    config = base.with_weights(**spec['weights'])
    return config.with_changes(fourier_per_map_flags=spec['flags'])


def run_ablation(photo: LdrImage, config: TrainConfig, out_dir: Optional[str] = None,
                 reference: Optional[SvbrdfMaps] = None, checkpoint: Optional[Checkpoint] = None,
                 variants: Optional[List[str]] = None,
                 fx: Optional[VggFeatureExtractor] = None) -> pd.DataFrame:
    """
    Run every variant and return one row per variant.

    Args:
        photo: Input flash photo.
        config: Base training config; each variant changes only loss weights and Fourier flags.
        out_dir: When set, receives ablation.csv, ablation_grid.png, ablation_spot_heatmap.png
            and one map directory per variant.
        reference: Ground-truth maps for RMSE columns (synthetic inputs only).
        checkpoint: Pretrained checkpoint; variants fine-tune from it. Without one each
            variant trains from scratch.

    Returns:
        DataFrame with a `variant` column plus EvalReport.to_row() columns.
    """
    variants = variants or list(VARIANTS)
    guessed = guess_diffuse(photo, sigma_fraction=config.sigma_fraction)
    eval_photo = inference_crop(photo)
    if 'fourier_perceptual' in variants:
        config, fx = prepare_perceptual(config, fx)

    rows = []
    grid_rows = []
    logger.info(f"Running ablation over {len(variants)} variants (seed {config.seed})")
    for variant in tqdm(variants, desc="Ablation variants", disable=not config.show_progress):
        row_config = variant_config(config, variant)
        start = time.perf_counter()
        if checkpoint is not None:
            maps, _ = finetune(checkpoint, photo, row_config, fx=fx, guessed=guessed)
        else:
            maps, _ = train_from_scratch(photo, row_config, fx=fx, guessed=guessed)
        runtime = time.perf_counter() - start

        report = evaluate(maps, reference, eval_photo, row_config.scene, row_config.gamma, runtime)
        rows.append({'variant': variant, **report.to_row()})
        rendered = rerender(maps, row_config)
        grid_rows.append((variant, comparison_panels(maps, eval_photo, rendered, row_config.gamma)))

        if out_dir:
            save_maps(os.path.join(out_dir, variant), maps)

    results_df = pd.DataFrame(rows)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        results_df.to_csv(os.path.join(out_dir, 'ablation.csv'), index=False)
        create_comparison_grid(grid_rows, os.path.join(out_dir, 'ablation_grid.png'))
        create_spot_ratio_heatmap(results_df, os.path.join(out_dir, 'ablation_spot_heatmap.png'))
        logger.info(f"Ablation results written to {out_dir}")
    return results_df
