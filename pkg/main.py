# main.py
import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Optional
import sys

from src.pipeline.config_loader import AppConfig, DEFAULT_CONFIG_PATH, load_config
from src.pipeline.dataset_io import load_dataset, save_dataset, read_image, read_mask, read_instances, write_mask
from src.pipeline.methods import METHODS, fit_method, segment_image
from src.pipeline.preprocessing import minmax_normalize
from src.pipeline.reporting import ReportRenderer, read_trials_csv, summary_from_frame
from src.pipeline.synthetic import synthetic_dataset, evenly_spaced_spec
from src.pipeline.trials import run_repeated_trials, run_lambda_sweep
from src.metrics.segmentation_metrics import score_segmentation, align_to
from src.network.checkpoint import save_checkpoint, load_checkpoint
from src.models.segmentation_model import Layout, LikelihoodScale, RunConfig, SegmentationDataset
from src.models.errors import InvalidInputError

RUN_OVERRIDES = ('k', 'lam', 'seed', 'epochs', 'learning_rate', 'lr_decay', 'batch_size', 'grad_clip',
                 'likelihood_scale', 'pull_limit')


def setup_logging(level=logging.INFO, log_file: str = "segmentation.log"):
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(log_file, encoding='utf-8')
        ]
    )


def _add_run_options(parser: argparse.ArgumentParser):
    parser.add_argument('--k', type=int, help='Number of classes K')
    parser.add_argument('--lambda', dest='lam', type=float, help='Constraint weight λ')
    parser.add_argument('--seed', type=int, help='Base random seed')
    parser.add_argument('--epochs', type=int, help='Epochs / EM iterations')
    parser.add_argument('--lr', dest='learning_rate', type=float, help='Learning rate (dcgn)')
    parser.add_argument('--lr-decay', dest='lr_decay', type=float, help='Per-epoch learning-rate decay (dcgn)')
    parser.add_argument('--batch-size', dest='batch_size', type=int, help='Minibatch size in pixels')
    parser.add_argument('--grad-clip', dest='grad_clip', type=float, help='Max gradient norm (dcgn)')
    parser.add_argument('--scale', dest='likelihood_scale', choices=[s.value for s in LikelihoodScale],
                        help='Likelihood scale in the objective: sum over pixels or per-pixel mean')
    parser.add_argument('--pull-limit', dest='pull_limit', action='store_true', default=None,
                        help='Never move a mean past the batch mean')


def _add_dataset_options(parser: argparse.ArgumentParser):
    parser.add_argument('dataset', nargs='?', help='Dataset directory (<name>.png, <name>_mask.png, <name>_inst.png)')
    parser.add_argument('--synthetic', type=int, metavar='N',
                        help='Use N generated synthetic images instead of a dataset directory')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Constrained Gaussian pixel segmentation toolkit',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py generate -o ./data/blobs --count 4 --seed 7
  python main.py fit ./data/blobs --method dcgn --k 3 --lambda 0.005
  python main.py segment --checkpoint ./output/model.cgmm image.png -o mask.png
  python main.py repeat ./data/blobs --repeats 10 --methods dcgn gmm kmeans
  python main.py report ./output/trials.csv -o ./report
        """
    )
    parser.add_argument('--config', '-c', help='Config file (YAML or key = value lines)')
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose output')
    commands = parser.add_subparsers(dest='command', required=True)

    generate = commands.add_parser('generate', help='Generate synthetic images with ground truth')
    generate.add_argument('--output', '-o', default='./data/synthetic', help='Output directory')
    generate.add_argument('--count', type=int, default=1, help='Number of images')
    generate.add_argument('--seed', type=int, help='Seed of the first image')
    generate.add_argument('--k', type=int, help='Number of classes (evenly spaced intensities)')
    generate.add_argument('--size', type=int, help='Image width and height')
    generate.add_argument('--layout', choices=[layout.value for layout in Layout], help='Region layout')
    generate.add_argument('--outlier-fraction', dest='outlier_fraction', type=float, help='Fraction of outlier pixels')
    generate.add_argument('--outlier-blob', dest='outlier_blob', action='store_true',
                          help='Place the outliers as one compact blob inside class 0')

    fit = commands.add_parser('fit', help='Fit a method on a dataset and write a checkpoint')
    _add_dataset_options(fit)
    fit.add_argument('--method', '-m', default='dcgn', choices=sorted(METHODS), help='Segmentation method')
    fit.add_argument('--output', '-o', default='./output', help='Output directory')
    fit.add_argument('--overlay', action='store_true', help='Also write color overlays')
    _add_run_options(fit)

    segment = commands.add_parser('segment', help='Segment an image with a checkpoint')
    segment.add_argument('image', help='Input PNG image')
    segment.add_argument('--checkpoint', required=True, help='Checkpoint written by fit')
    segment.add_argument('--output', '-o', default='mask.png', help='Output mask PNG')
    segment.add_argument('--overlay', help='Optional overlay PNG path')

    evaluate = commands.add_parser('evaluate', help='Score a predicted mask against ground truth')
    evaluate.add_argument('--pred', required=True, help='Predicted mask PNG')
    evaluate.add_argument('--gt', required=True, help='Ground-truth mask PNG')
    evaluate.add_argument('--pred-inst', dest='pred_inst', help='Predicted instance PNG')
    evaluate.add_argument('--gt-inst', dest='gt_inst', help='Ground-truth instance PNG')
    evaluate.add_argument('--image', help='Source image for the error overlay')
    evaluate.add_argument('--output', '-o', default='./output', help='Output directory')

    repeat = commands.add_parser('repeat', help='Repeated trials of several methods')
    _add_dataset_options(repeat)
    repeat.add_argument('--repeats', type=int, help='Repeats per method')
    repeat.add_argument('--methods', nargs='+', choices=sorted(METHODS), help='Methods to compare')
    repeat.add_argument('--output', '-o', default='./output', help='Output directory')
    repeat.add_argument('--timing', action='store_true', help='Record wall time per trial')
    repeat.add_argument('--redundant', action='store_true',
                        help='Also run each method with K+1 classes and report the Dice gain')
    _add_run_options(repeat)

    report = commands.add_parser('report', help='Summaries and degeneration table from trial CSVs')
    report.add_argument('trials', nargs='+', help='Trial CSV files')
    report.add_argument('--output', '-o', default='./report', help='Output directory')

    ablate = commands.add_parser('ablate', help='Repeated trials over several λ values')
    _add_dataset_options(ablate)
    ablate.add_argument('--method', '-m', default='cgmm-em', choices=sorted(METHODS), help='Segmentation method')
    ablate.add_argument('--lambdas', nargs='+', type=float, default=[0.0005, 0.005, 0.05], help='λ values')
    ablate.add_argument('--repeats', type=int, help='Repeats per λ')
    ablate.add_argument('--output', '-o', default='./output', help='Output directory')
    _add_run_options(ablate)
    return parser


def _run_config(args: argparse.Namespace, app: AppConfig):
    overrides = {name: getattr(args, name) for name in RUN_OVERRIDES if getattr(args, name, None) is not None}
    return replace(app.run, **overrides)


def _dataset(args: argparse.Namespace, app: AppConfig, config: RunConfig) -> SegmentationDataset:
    if args.synthetic:
        spec = app.synthetic
        if spec.k != config.k:
            spec = evenly_spaced_spec(config.k, spec.width, spec.height, spec.layout)
        return synthetic_dataset(spec, args.synthetic, config.seed)
    if not args.dataset:
        raise InvalidInputError("give a dataset directory or --synthetic N")
    return load_dataset(Path(args.dataset))


def cmd_generate(args, app: AppConfig, logger) -> int:
    spec = app.synthetic
    if args.k is not None and args.k != spec.k:
        spec = evenly_spaced_spec(args.k, spec.width, spec.height, spec.layout)
    if args.size is not None:
        spec = replace(spec, width=args.size, height=args.size)
    if args.layout is not None:
        spec = replace(spec, layout=Layout(args.layout))
    if args.outlier_fraction is not None:
        spec = replace(spec, outlier_fraction=args.outlier_fraction)
    if args.outlier_blob:
        spec = replace(spec, outlier_blob=True)
    seed = args.seed if args.seed is not None else app.run.seed
    dataset = synthetic_dataset(spec, args.count, seed)
    written = save_dataset(dataset, Path(args.output))
    logger.info(f"Generated {args.count} image(s) with K={spec.k} into {args.output} ({len(written)} files)")
    return 0


def cmd_fit(args, app: AppConfig, logger) -> int:
    config = _run_config(args, app)
    dataset = _dataset(args, app, config)
    outcome = fit_method(args.method, dataset.images, config)
    renderer = ReportRenderer(Path(args.output))
    save_checkpoint(renderer.output_dir / "model.cgmm", outcome.network, outcome.mixture)
    for sample, mask in zip(dataset.samples, outcome.masks):
        write_mask(renderer.output_dir / f"{sample.name}_pred.png", mask)
        if args.overlay:
            renderer.render_overlay(sample.image, mask, f"{sample.name}_overlay.png")
    logger.info(f"Fit finished: {args.method}, {outcome.epochs} epochs, outputs in {renderer.output_dir}")
    return 0


def cmd_segment(args, app: AppConfig, logger) -> int:
    network, mixture = load_checkpoint(Path(args.checkpoint))
    image = minmax_normalize(read_image(Path(args.image)))
    if image.channels != mixture.dim:
        raise InvalidInputError(f"image has {image.channels} channels, checkpoint expects {mixture.dim}")
    mask = segment_image(network, mixture, image, app.run.gamma_floor)
    write_mask(Path(args.output), mask)
    if args.overlay:
        overlay = Path(args.overlay)
        ReportRenderer(overlay.parent).render_overlay(image, mask, overlay.name)
    logger.info(f"Segmentation written to {args.output}")
    return 0


def cmd_evaluate(args, app: AppConfig, logger) -> int:
    gt = read_mask(Path(args.gt))
    pred = read_mask(Path(args.pred))
    gt_instances = read_instances(Path(args.gt_inst)) if args.gt_inst else None
    pred_instances = read_instances(Path(args.pred_inst)) if args.pred_inst else None
    scores = score_segmentation(pred, gt, gt_instances, pred_instances)
    renderer = ReportRenderer(Path(args.output))
    renderer.render_scores(scores)
    if args.image and gt.k == 2:
        image = minmax_normalize(read_image(Path(args.image)))
        renderer.render_error_overlay(image, align_to(pred, gt), gt, "errors.png")
    logger.info(f"Scores: precision={scores.precision:.4f}, recall={scores.recall:.4f}, dice={scores.dice:.4f}, "
                f"nmi={scores.nmi:.4f}, mi={scores.mi:.4f}, aji={scores.aji_standard}")
    return 0


def cmd_repeat(args, app: AppConfig, logger) -> int:
    config = _run_config(args, app)
    dataset = _dataset(args, app, config)
    repeats = args.repeats if args.repeats is not None else app.trials.repeats
    methods = args.methods or app.trials.methods
    record_timing = args.timing or app.trials.record_timing
    redundant = args.redundant or app.trials.redundant
    reports, summary = run_repeated_trials(dataset, methods, config, repeats, record_timing, redundant)

    renderer = ReportRenderer(Path(args.output))
    renderer.render_all(reports, summary)
    renderer.render_summary_json(summary)
    for method in summary.methods:
        logger.info(f"{method.method}: dice {method.dice_mean:.4f} ± {method.dice_std:.4f} "
                    f"(upper bound {method.dice_upper_bound:.4f}), unstable={method.unstable}")
    for comparison in summary.comparisons:
        logger.info(f"{comparison.method_a} vs {comparison.method_b}: p={comparison.result.p_two_sided:.4g} "
                    f"({comparison.significance})")
    return 0


def cmd_report(args, app: AppConfig, logger) -> int:
    frame = read_trials_csv([Path(p) for p in args.trials])
    summary = summary_from_frame(frame)
    renderer = ReportRenderer(Path(args.output))
    renderer.render_summary(summary)
    renderer.render_pairwise(summary)
    renderer.render_degeneration(frame)
    renderer.render_summary_json(summary)
    logger.info(f"Report for {len(frame)} trials written to {renderer.output_dir}")
    return 0


def cmd_ablate(args, app: AppConfig, logger) -> int:
    config = _run_config(args, app)
    dataset = _dataset(args, app, config)
    repeats = args.repeats if args.repeats is not None else app.trials.repeats
    rows = run_lambda_sweep(dataset, args.method, args.lambdas, config, repeats)
    ReportRenderer(Path(args.output)).render_lambda_sweep(rows)
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'fit': cmd_fit,
    'segment': cmd_segment,
    'evaluate': cmd_evaluate,
    'repeat': cmd_repeat,
    'report': cmd_report,
    'ablate': cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        app = load_config(args.config, DEFAULT_CONFIG_PATH)
    except InvalidInputError as e:
        setup_logging()
        logging.getLogger(__name__).error(f"Invalid configuration: {e}")
        return 2

    setup_logging(logging.DEBUG if args.verbose else getattr(logging, app.logging.level.upper(), logging.INFO),
                  app.logging.file)
    logger = logging.getLogger(__name__)

    try:
        logger.info(f"Command: {args.command}")
        return COMMANDS[args.command](args, app, logger)
    except InvalidInputError as e:
        logger.error(f"Invalid input: {e}")
        return 2
    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        return 130
    except Exception as e:
        logger.error(f"Error: {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    exit(main())
