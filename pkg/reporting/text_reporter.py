"""
Text Reporter for Material Recovery

Formatted, human-readable summaries printed by the CLI: evaluation rows,
guessed-map diagnostics, training summaries and ablation tables.
"""

from datetime import datetime
from typing import Optional

import pandas as pd

from core.models import MAP_NAMES
from extraction.diffuse_guess import GuessedDiffuse
from optimization.losses import LossReport
from reporting.metrics_calculator import EvalReport


def generate_eval_report(report: EvalReport, title: str = "EVALUATION") -> str:
    """
    Multi-line summary of an EvalReport.

    Args:
        report (EvalReport): Metrics of one recovered material.
        title (str): Report heading.

    Returns:
        str: Report content.
    """
    rmse_lines = "\n".join(
        f"- {name.capitalize()}: {report.rmse[name]:.4f}{' deg' if name == 'normal' else ''}"
        for name in MAP_NAMES
    )
    spot_lines = "\n".join(f"- {name.capitalize()}: {report.spot_ratio[name]:.4f}" for name in MAP_NAMES)
    return f"""=== {title} ===
Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}

MAP ERRORS (RMSE):
{rmse_lines}

RE-RENDER:
- Mean L1 vs input photo: {report.rerender_l1:.4f}

SPOT RATIO (center disk / outer ring, 1.0 = stationary):
{spot_lines}

Runtime: {report.runtime_seconds:.1f} s
"""


def format_eval_row(report: EvalReport) -> str:
    """One CSV-style line: the rmse values, rerender_l1, then the spot ratios."""
    row = report.to_row()
    header = ",".join(row.keys())
    values = ",".join(f"{v:.6f}" for v in row.values())
    return f"{header}\n{values}"


def generate_guess_report(guessed: GuessedDiffuse, out_path: Optional[str] = None) -> str:
    lines = [f"stationarity_score={guessed.stationarity_score:.6f}",
             f"saturated_fraction={guessed.saturated_fraction:.6f}"]
    if out_path:
        lines.append(f"guessed diffuse map written to {out_path}")
    return "\n".join(lines)


def generate_training_summary(stage: str, iterations: int, last: Optional[LossReport],
                              checkpoint_path: Optional[str], runtime_seconds: float) -> str:
    last_line = f"- Final losses: {last}" if last is not None else "- No training steps run"
    return f"""=== {stage.upper()} SUMMARY ===
- Iterations: {iterations}
{last_line}
- Checkpoint: {checkpoint_path or 'not saved'}
- Wall clock: {runtime_seconds:.1f} s
"""


def generate_ablation_report(results_df: pd.DataFrame) -> str:
    """Ablation table with the columns that carry the highlight-suppression claim."""
    columns = ['variant', 'rmse_specular', 'rmse_roughness', 'rerender_l1', 'spot_specular', 'spot_roughness']
    columns = [c for c in columns if c in results_df.columns]
    table = results_df[columns].to_string(index=False, float_format=lambda v: f"{v:.4f}")
    return f"=== ABLATION ===\nGenerated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n{table}\n"
