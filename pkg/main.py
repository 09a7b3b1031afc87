import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Optional

from dotenv import load_dotenv

# --- Setup Project Path & Environment ---
load_dotenv()
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.append(project_root)

from core.exceptions import ForgeError
from core.models import SceneConfig
from extraction.diffuse_guess import guess_diffuse
from extraction.image_io import load_maps, load_photo, save_ldr, save_maps
from optimization.checkpoint import load_checkpoint
from optimization.trainer import (
    TrainConfig, finetune, inference_crop, loss_curve_paths, pretrain, rerender, train_from_scratch,
)
from reporting.metrics_calculator import evaluate
from reporting.text_reporter import (
    format_eval_row, generate_ablation_report, generate_eval_report, generate_guess_report,
    generate_training_summary,
)
from rendering.renderer import DEFAULT_GAMMA, relight, render, tonemap
from simulations.ablation_runner import VARIANTS, run_ablation
from simulations.material_synth import PATTERNS, MaterialSpec, render_input, synth_material
from utils.common import apply_overrides, load_main_config, print_header

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Subcommand -> TrainConfig field that --iters overrides.
ITERS_KEY = {'pretrain': 'pretrain_iters', 'recover': 'finetune_iters', 'scratch': 'scratch_iters'}


def configure_logging(config: Dict):
    """File + console logging, plus the TRAIN_DEBUG per-iteration log when configured."""
    log_config = config.get('logging', {})
    logging.basicConfig(
        level=logging.INFO,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_config.get('log_file', 'svbrdf_forge.log'), mode='w'),
            logging.StreamHandler()
        ]
    )
    train_debug_file = log_config.get('train_debug_file')
    if train_debug_file:
        handler = logging.FileHandler(train_debug_file, mode='w')
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        train_debug = logging.getLogger('TRAIN_DEBUG')
        train_debug.addHandler(handler)
        train_debug.setLevel(logging.DEBUG)
        train_debug.propagate = False


def _add_training_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--iters', type=int, help='Iteration budget for this stage')
    parser.add_argument('--seed', type=int, help='Training seed')
    parser.add_argument('--tile', type=int, help='Training tile side (power of two)')
    parser.add_argument('--lambda-gan', type=float, help='Adversarial loss weight')
    parser.add_argument('--lambda-fourier', type=float, help='Fourier loss weight')
    parser.add_argument('--lambda-perceptual', type=float, help='Perceptual loss weight')
    parser.add_argument('--full-scale', action='store_true',
                        help='Full-scale budgets: 10000/3000/20000 iterations, 256 px tiles')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='svbrdf-forge',
                                     description='Single-image SVBRDF recovery with per-image GAN training')
    parser.add_argument('--config', '-c', help='Path to the YAML configuration file')
    parser.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override any config key (repeatable)')
    # Same options after the subcommand; SUPPRESS keeps the top-level values unless given there.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', default=argparse.SUPPRESS, help='Path to the YAML configuration file')
    common.add_argument('--set', action='append', default=argparse.SUPPRESS, metavar='SECTION.KEY=VALUE',
                        help='Override any config key (repeatable)')
    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('pretrain', parents=[common], help='Stage 1: pretrain on one photo and write a checkpoint')
    p.add_argument('--in', dest='input', required=True, help='Input photo (8-bit PNG)')
    p.add_argument('--out', required=True, help='Checkpoint path')
    _add_training_flags(p)

    p = sub.add_parser('recover', parents=[common], help='Stage 2: fine-tune a checkpoint on a photo and write the maps')
    p.add_argument('--in', dest='input', required=True, help='Input photo (8-bit PNG)')
    p.add_argument('--ckpt', required=True, help='Pretrained checkpoint')
    p.add_argument('--out', required=True, help='Output map directory')
    _add_training_flags(p)

    p = sub.add_parser('scratch', parents=[common], help='One-stage baseline: train from scratch and write the maps')
    p.add_argument('--in', dest='input', required=True, help='Input photo (8-bit PNG)')
    p.add_argument('--out', required=True, help='Output map directory')
    _add_training_flags(p)

    p = sub.add_parser('guess', parents=[common], help='Write the guessed diffuse map of a photo')
    p.add_argument('--in', dest='input', required=True, help='Input photo (8-bit PNG)')
    p.add_argument('--out', required=True, help='Output directory')
    p.add_argument('--seed', type=int, help='Accepted for a uniform CLI; the guess has no randomness')

    p = sub.add_parser('synth', parents=[common], help='Generate a synthetic stationary material')
    p.add_argument('--pattern', choices=PATTERNS, default=None)
    p.add_argument('--period', type=int)
    p.add_argument('--side', type=int)
    p.add_argument('--seed', type=int, help='Noise-tile seed')
    p.add_argument('--out', required=True, help='Output map directory')

    p = sub.add_parser('render', parents=[common], help='Render a map directory as a flash photo')
    p.add_argument('--maps', required=True, help='Map directory')
    p.add_argument('--out', required=True, help='Output photo path')
    p.add_argument('--overexpose', action='store_true', help='Double the light so highlights clip')
    p.add_argument('--seed', type=int, help='Accepted for a uniform CLI; rendering has no randomness')

    p = sub.add_parser('eval', parents=[common], help='Compare recovered maps with reference maps')
    p.add_argument('--rec', required=True, help='Recovered map directory')
    p.add_argument('--ref', required=True, help='Reference map directory')
    p.add_argument('--photo', help='Input photo for the re-render error (default: render of the reference)')
    p.add_argument('--seed', type=int, help='Accepted for a uniform CLI; evaluation has no randomness')

    p = sub.add_parser('ablate', parents=[common], help='Run the loss ablation on one photo')
    p.add_argument('--in', dest='input', required=True, help='Input photo (8-bit PNG)')
    p.add_argument('--out', required=True, help='Output directory')
    p.add_argument('--ref', help='Reference map directory for RMSE columns')
    p.add_argument('--ckpt', help='Pretrained checkpoint to fine-tune from (default: train from scratch)')
    p.add_argument('--variants', nargs='+', choices=list(VARIANTS), help='Subset of variants')
    _add_training_flags(p)

    p = sub.add_parser('relight', parents=[common], help='Render maps with the light/camera moved off center')
    p.add_argument('--maps', required=True, help='Map directory')
    p.add_argument('--out', required=True, help='Output image path')
    p.add_argument('--offset', type=float, nargs=2, default=(0.0, 0.0), metavar=('X', 'Y'))
    p.add_argument('--seed', type=int, help='Accepted for a uniform CLI; relighting has no randomness')
    return parser


def load_config(args: argparse.Namespace) -> Dict:
    config = load_main_config(args.config)
    keyed = {}
    if getattr(args, 'lambda_gan', None) is not None:
        keyed['losses.lambda_gan'] = args.lambda_gan
    if getattr(args, 'lambda_fourier', None) is not None:
        keyed['losses.lambda_fourier'] = args.lambda_fourier
    if getattr(args, 'lambda_perceptual', None) is not None:
        keyed['losses.lambda_perceptual'] = args.lambda_perceptual
    if hasattr(args, 'tile'):
        keyed['training.tile_size'] = args.tile
        keyed['training.seed'] = args.seed
    return apply_overrides(config, args.set, **keyed)


def train_config_for(args: argparse.Namespace, config: Dict, stage: str) -> TrainConfig:
    train_config = TrainConfig.from_config(config, full_scale=getattr(args, 'full_scale', False))
    # Explicit flags win over --full-scale.
    if getattr(args, 'tile', None) is not None:
        train_config = train_config.with_changes(tile_size=args.tile)
    if getattr(args, 'iters', None) is not None:
        train_config = train_config.with_changes(**{ITERS_KEY[stage]: args.iters})
    return train_config


def _scene_and_gamma(config: Dict):
    return SceneConfig.from_config(config), config.get('scene', {}).get('gamma', DEFAULT_GAMMA)


def cmd_pretrain(args, config) -> int:
    print_header("Stage 1: pretraining")
    train_config = train_config_for(args, config, 'pretrain')
    start = time.perf_counter()
    checkpoint = pretrain(load_photo(args.input), train_config, out_path=args.out)
    print(generate_training_summary('pretrain', checkpoint.iteration, None, args.out, time.perf_counter() - start))
    print(f"Loss curve: {loss_curve_paths(args.out)[0]}")
    return 0


def _write_recovery(out_dir: str, maps, photo, train_config: TrainConfig):
    save_maps(out_dir, maps)
    save_ldr(os.path.join(out_dir, 'rerender.png'), rerender(maps, train_config))
    save_ldr(os.path.join(out_dir, 'input.png'), inference_crop(photo))


def cmd_recover(args, config) -> int:
    print_header("Stage 2: fine-tuning")
    train_config = train_config_for(args, config, 'recover')
    photo = load_photo(args.input)
    start = time.perf_counter()
    maps, checkpoint = finetune(load_checkpoint(args.ckpt), photo, train_config,
                                out_path=os.path.join(args.out, 'finetuned.pt'))
    _write_recovery(args.out, maps, photo, train_config)
    print(generate_training_summary('recover', checkpoint.iteration, None,
                                    os.path.join(args.out, 'finetuned.pt'), time.perf_counter() - start))
    return 0


def cmd_scratch(args, config) -> int:
    print_header("Training from scratch")
    train_config = train_config_for(args, config, 'scratch')
    photo = load_photo(args.input)
    start = time.perf_counter()
    maps, checkpoint = train_from_scratch(photo, train_config, out_path=os.path.join(args.out, 'scratch.pt'))
    _write_recovery(args.out, maps, photo, train_config)
    print(generate_training_summary('scratch', checkpoint.iteration, None,
                                    os.path.join(args.out, 'scratch.pt'), time.perf_counter() - start))
    return 0


def cmd_guess(args, config) -> int:
    guess_config = config.get('diffuse_guess', {})
    guessed = guess_diffuse(load_photo(args.input),
                            sigma_fraction=guess_config.get('sigma_fraction', 0.125),
                            saturation_warning=guess_config.get('saturation_warning', 0.02))
    out_path = os.path.join(args.out, 'guessed_diffuse.png')
    save_ldr(out_path, guessed.map)
    print(generate_guess_report(guessed, out_path))
    return 0


def cmd_synth(args, config) -> int:
    benchmark = config.get('benchmark', {})
    spec = MaterialSpec.from_config(config, pattern=args.pattern, period=args.period,
                                    side=args.side or benchmark.get('side', 128), seed=args.seed)
    save_maps(args.out, synth_material(spec))
    print(f"Wrote {spec} to {args.out}")
    return 0


def cmd_render(args, config) -> int:
    scene, gamma = _scene_and_gamma(config)
    save_ldr(args.out, render_input(load_maps(args.maps), scene, overexpose=args.overexpose, gamma=gamma))
    print(f"Rendered {args.maps} to {args.out}{' (overexposed)' if args.overexpose else ''}")
    return 0


def cmd_eval(args, config) -> int:
    scene, gamma = _scene_and_gamma(config)
    recovered, reference = load_maps(args.rec), load_maps(args.ref)
    if args.photo:
        photo = load_photo(args.photo)
    else:
        photo = tonemap(render(reference, scene), gamma)
    report = evaluate(recovered, reference, photo, scene, gamma)
    print(generate_eval_report(report))
    print(format_eval_row(report))
    return 0


def cmd_ablate(args, config) -> int:
    print_header("Loss ablation")
    stage = 'recover' if args.ckpt else 'scratch'
    train_config = train_config_for(args, config, stage)
    reference = load_maps(args.ref) if args.ref else None
    checkpoint = load_checkpoint(args.ckpt) if args.ckpt else None
    results_df = run_ablation(load_photo(args.input), train_config, out_dir=args.out, reference=reference,
                              checkpoint=checkpoint, variants=args.variants)
    print(generate_ablation_report(results_df))
    return 0


def cmd_relight(args, config) -> int:
    scene, gamma = _scene_and_gamma(config)
    save_ldr(args.out, relight(load_maps(args.maps), scene, tuple(args.offset), gamma))
    print(f"Relit {args.maps} with light offset {tuple(args.offset)} -> {args.out}")
    return 0


COMMANDS = {
    'pretrain': cmd_pretrain,
    'recover': cmd_recover,
    'scratch': cmd_scratch,
    'guess': cmd_guess,
    'synth': cmd_synth,
    'render': cmd_render,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
    'relight': cmd_relight,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand. Returns 0 on success, 2 on usage errors, 1 on runtime errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2

    try:
        config = load_config(args)
    except ValueError as e:
        print(f"svbrdf-forge: error: {e}", file=sys.stderr)
        return 2
    configure_logging(config)

    try:
        return COMMANDS[args.command](args, config)
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.")
        return 1
    except (ForgeError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"\n[ERROR] {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.critical(f"An unhandled exception occurred in {args.command}: {e}", exc_info=True)
        print(f"\n[CRITICAL ERROR] An unexpected error occurred: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
