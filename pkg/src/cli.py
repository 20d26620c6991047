"""
Command-line interface: one entrypoint, one subcommand per pipeline stage

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a single
line `error: <ErrorClass>: <message>` (runtime) or `error: usage: <message>` (usage)
on stderr.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import torch
from pydantic import ValidationError

from config import Settings
from src.compose.io import image_to_tensor, read_png, tensor_to_image, write_png
from src.distill.colorize import distill_colorize
from src.distill.relight import CFG_PRESETS, distill_relight
from src.distill.structure import make_sketch
from src.errors import LayerlightError, TargetMissedError
from src.evaluation.benchmark import EvalReport, run_benchmark
from src.minirelit.dataset import MiniRelitDataset, generate_dataset
from src.scorer.adapter import ConditioningAdapter
from src.scorer.conditioning import ConditionSpec, describe_condition
from src.scorer.denoiser import Denoiser
from src.scorer.sampling import sample
from src.scorer.schedule import DiffusionSchedule, make_schedule, schedule_from_dict
from src.scorer.training import train_adapter, train_denoiser
from src.utils.checkpoint import load_checkpoint, read_checkpoint_header, save_checkpoint
from src.utils.logging_setup import configure_logging
from src.utils.outputs import prepare_output_dir, prepare_output_file, write_json
from src.utils.run_config import (
    RunConfig,
    config_path_for,
    parse_int_list,
    parse_str_list,
    resolve_config,
    write_resolved_config,
)
from src.visualization.charts import (
    create_direction_accuracy_chart,
    create_method_comparison_chart,
    create_trace_chart,
    create_training_loss_chart,
    write_chart,
)

logger = logging.getLogger(__name__)

# Acceptance targets of the quick reproduction
QUICK_MIN_TOP1 = 0.5
QUICK_MAX_MEAN_RANK = 3.0


class UsageError(Exception):
    """Raised by the parser instead of exiting, so main() owns the exit code"""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _one_line(message: str) -> str:
    return " ".join(str(message).split())


def load_scorer(path: str, device: str) -> Tuple[Denoiser, DiffusionSchedule]:
    """Load a denoiser checkpoint together with the schedule it was trained with"""
    header = read_checkpoint_header(path)
    model = load_checkpoint(path, device=device, expected_kind="denoiser")
    schedule = schedule_from_dict(header["schedule"]) if header.get("schedule") else make_schedule()
    return model, schedule


def load_adapter(path: Optional[str], device: str) -> Optional[ConditioningAdapter]:
    if path is None:
        return None
    return load_checkpoint(path, device=device, expected_kind="adapter")


def load_image(path: str) -> torch.Tensor:
    return image_to_tensor(read_png(path))


def cmd_gen_data(args: argparse.Namespace, cfg: RunConfig) -> int:
    data = cfg.data
    generate_dataset(
        num_scenes=data.num_scenes,
        size=data.size,
        split_fraction=data.split_fraction,
        out_dir=args.out,
        seed=data.seed,
        ambient=data.ambient,
        intensity=data.intensity,
        uniform_level=data.uniform_level,
        force=args.force,
        workers=data.workers,
    )
    write_resolved_config(cfg, config_path_for(args.out))
    return 0


def _train_scorer(cfg: RunConfig, data_dir: str, out: Path) -> Denoiser:
    dataset = MiniRelitDataset(data_dir, split="train")
    schedule = make_schedule(cfg.scorer.num_steps)
    model, losses = train_denoiser(dataset, schedule, cfg.scorer, device=cfg.device)
    save_checkpoint(
        model,
        out,
        training_config=cfg.scorer.model_dump(mode="json"),
        schedule=schedule.to_dict(),
        seed=cfg.scorer.seed,
        extra={"losses": losses, "data": str(data_dir)},
    )
    write_resolved_config(cfg, config_path_for(out))
    write_chart(create_training_loss_chart(losses, "Scorer"), out.with_suffix(".loss.html"))
    return model


def cmd_train_scorer(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = prepare_output_file(args.out, force=args.force)
    _train_scorer(cfg, args.data, out)
    return 0


def _train_adapter(cfg: RunConfig, data_dir: str, scorer_path: str, out: Path) -> ConditioningAdapter:
    denoiser, schedule = load_scorer(scorer_path, cfg.device)
    dataset = MiniRelitDataset(data_dir, split="train")
    adapter, losses = train_adapter(denoiser, dataset, schedule, cfg.adapter, device=cfg.device)
    save_checkpoint(
        adapter,
        out,
        training_config=cfg.adapter.model_dump(mode="json"),
        schedule=schedule.to_dict(),
        seed=cfg.adapter.seed,
        extra={"losses": losses, "data": str(data_dir), "scorer": str(scorer_path)},
    )
    write_resolved_config(cfg, config_path_for(out))
    write_chart(create_training_loss_chart(losses, "Adapter"), out.with_suffix(".loss.html"))
    return adapter


def cmd_train_adapter(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = prepare_output_file(args.out, force=args.force)
    _train_adapter(cfg, args.data, args.scorer, out)
    return 0


def cmd_sample(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = prepare_output_file(args.out, force=args.force)
    scorer, schedule = load_scorer(args.scorer, cfg.device)
    adapter = load_adapter(args.adapter, cfg.device)
    cond_image = load_image(args.cond_image) if args.cond_image else None
    cond = ConditionSpec(direction_index=args.direction, category_id=args.category)

    images = sample(
        scorer,
        schedule,
        cond,
        steps=cfg.sample.steps,
        seed=cfg.sample.seed,
        adapter=adapter,
        cond_image=cond_image,
        guidance_scale=cfg.sample.guidance_scale,
        size=None if cond_image is not None else cfg.sample.size,
        batch=cfg.sample.batch,
    )
    paths = []
    for i, image in enumerate(images.cpu()):
        path = out if i == 0 else out.with_name(f"{out.stem}_{i}{out.suffix}")
        write_png(path, tensor_to_image(image))
        paths.append(path.name)
    write_json(
        out.with_suffix(".json"),
        {"condition": describe_condition(cond), "images": paths, **cfg.sample.model_dump(mode="json")},
    )
    write_resolved_config(cfg, config_path_for(out))
    return 0


def cmd_distill(args: argparse.Namespace, cfg: RunConfig) -> int:
    base = load_image(args.base)
    scorer, schedule = load_scorer(args.scorer, cfg.device)
    adapter = load_adapter(args.adapter, cfg.device)
    out = prepare_output_dir(args.out, force=args.force)

    result = distill_relight(base, args.direction, scorer, adapter, schedule, cfg.distill, category=args.category)
    result.save(out, run_config=cfg.model_dump(mode="json"))
    write_chart(create_trace_chart(result.trace, "Relighting Distillation"), out / "trace.html")
    return 0


def cmd_colorize(args: argparse.Namespace, cfg: RunConfig) -> int:
    base = load_image(args.base)
    sketch = make_sketch(base) if args.from_uniform else base
    scorer, schedule = load_scorer(args.scorer, cfg.device)
    out = prepare_output_dir(args.out, force=args.force)

    result = distill_colorize(sketch, args.category, scorer, schedule, cfg.colorize)
    if args.from_uniform:
        write_png(out / "sketch.png", tensor_to_image(sketch))
    result.save(out, run_config=cfg.model_dump(mode="json"))
    write_chart(create_trace_chart(result.trace, "Colorization Distillation"), out / "trace.html")
    return 0


def _evaluate(cfg: RunConfig, data_dir: str, scorer_path: str, adapter_path: Optional[str], out: Path, force: bool) -> EvalReport:
    scorer, schedule = load_scorer(scorer_path, cfg.device)
    adapter = load_adapter(adapter_path, cfg.device)
    cases_dir = None
    if cfg.eval.save_layers:
        cases_dir = prepare_output_dir(out.with_name(f"{out.stem}_cases"), force=force)

    report = run_benchmark(data_dir, scorer, adapter, schedule, cfg.eval, cases_dir=cases_dir)
    report.write(out)
    write_chart(create_direction_accuracy_chart(report.per_direction), out.with_suffix(".html"))
    if len(report.per_method) > 1:
        write_chart(create_method_comparison_chart(report.per_method), out.with_name(f"{out.stem}_methods.html"))
    write_resolved_config(cfg, config_path_for(out))
    return report


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = prepare_output_file(args.out, force=args.force)
    report = _evaluate(cfg, args.data, args.scorer, args.adapter, out, args.force)
    print(f"top1={report.top1_accuracy:.3f} mean_rank={report.mean_rank:.2f} cases={len(report.rows)}")
    for method, summary in report.per_method.items():
        print(
            f"{method}: top1={summary['direction_top1']['mean']:.3f} mean_rank={summary['direction_rank']['mean']:.2f} "
            f"mse={summary['mse']['mean']:.5f} preservation={summary['preservation_violation']['mean']:.2e}"
        )
    return 0


def check_quick_targets(report: EvalReport) -> None:
    """Raise TargetMissedError when a quick reproduction scores below its accuracy targets"""
    if report.top1_accuracy < QUICK_MIN_TOP1 or report.mean_rank > QUICK_MAX_MEAN_RANK:
        raise TargetMissedError(
            f"top-1 direction accuracy {report.top1_accuracy:.3f} (target >= {QUICK_MIN_TOP1:.2f}), "
            f"mean rank {report.mean_rank:.2f} (target <= {QUICK_MAX_MEAN_RANK:.1f}); "
            f"outputs kept in {Path(report.data_dir).parent}"
        )


def cmd_reproduce(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = prepare_output_dir(args.out, force=args.force)
    write_resolved_config(cfg, out / "config.json")
    data_dir = out / "data"

    logger.info("reproduce 1/4: generating %d scenes", cfg.data.num_scenes)
    data = cfg.data
    generate_dataset(
        num_scenes=data.num_scenes,
        size=data.size,
        split_fraction=data.split_fraction,
        out_dir=data_dir,
        seed=data.seed,
        ambient=data.ambient,
        intensity=data.intensity,
        uniform_level=data.uniform_level,
        force=True,
        workers=data.workers,
    )
    logger.info("reproduce 2/4: training the scorer")
    _train_scorer(cfg, str(data_dir), out / "scorer.ckpt")
    logger.info("reproduce 3/4: training the adapter")
    _train_adapter(cfg, str(data_dir), str(out / "scorer.ckpt"), out / "adapter.ckpt")
    logger.info("reproduce 4/4: benchmarking")
    report = _evaluate(cfg, str(data_dir), str(out / "scorer.ckpt"), str(out / "adapter.ckpt"), out / "report.json", True)

    print(f"top1={report.top1_accuracy:.3f} mean_rank={report.mean_rank:.2f} cases={len(report.rows)}")
    if args.quick:
        check_quick_targets(report)
    return 0


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='JSON config file (defaults < file < env < flags)')
    parser.add_argument('--seed', type=int, default=None, help='Global seed for every stage')
    parser.add_argument('--log', type=str, default=None, help='Log level (overrides LAYERLIGHT_LOG)')
    parser.add_argument('--device', type=str, default=None, help='Torch device, e.g. cpu or cuda')
    parser.add_argument('--force', action='store_true', help='Overwrite existing outputs')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='layerlight', description='Layered score distillation for relighting')
    sub = parser.add_subparsers(dest='command', metavar='<command>', required=True)

    p = sub.add_parser('gen-data', help='Render a procedural relighting dataset')
    p.add_argument('--out', type=str, required=True, help='Dataset directory')
    p.add_argument('--num-scenes', type=int, default=None, help='Number of scenes (>= 13)')
    p.add_argument('--size', type=int, default=None, help='Image size: 32, 64 or 128')
    p.add_argument('--test-frac', type=float, default=None, help='Fraction of scenes in the test split')
    p.add_argument('--ambient', type=float, default=None, help='Ambient term of the directional renders')
    p.add_argument('--workers', type=int, default=None, help='Rendering processes')
    _common(p)

    p = sub.add_parser('train-scorer', help='Train the conditional denoiser')
    p.add_argument('--data', type=str, required=True, help='Dataset directory')
    p.add_argument('--out', type=str, required=True, help='Checkpoint file')
    p.add_argument('--epochs', type=int, default=None)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--batch', type=int, default=None)
    _common(p)

    p = sub.add_parser('train-adapter', help='Train the image-conditioning adapter on a frozen scorer')
    p.add_argument('--data', type=str, required=True, help='Dataset directory')
    p.add_argument('--scorer', type=str, required=True, help='Denoiser checkpoint')
    p.add_argument('--out', type=str, required=True, help='Checkpoint file')
    p.add_argument('--iters', type=int, default=None)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--batch', type=int, default=None)
    _common(p)

    p = sub.add_parser('sample', help='Draw images from the scorer')
    p.add_argument('--scorer', type=str, required=True, help='Denoiser checkpoint')
    p.add_argument('--adapter', type=str, default=None, help='Adapter checkpoint')
    p.add_argument('--cond-image', type=str, default=None, help='Condition image PNG for the adapter')
    p.add_argument('--direction', type=int, default=None, help='Light direction 0-11 (omit for null)')
    p.add_argument('--category', type=int, default=None, help='Category id (omit for null)')
    p.add_argument('--steps', type=int, default=None, help='Denoising steps')
    p.add_argument('--cfg', type=float, default=None, help='Guidance scale')
    p.add_argument('--size', type=int, default=None, help='Image size without a condition image')
    p.add_argument('--batch', type=int, default=None, help='Number of images')
    p.add_argument('--out', type=str, required=True, help='Output PNG')
    _common(p)

    p = sub.add_parser('distill', help='Relight an image with layered score distillation')
    p.add_argument('--base', type=str, required=True, help='Base image PNG')
    p.add_argument('--direction', type=int, required=True, help='Light direction 0-11')
    p.add_argument('--category', type=int, default=None, help='Category id of the object, if known')
    p.add_argument('--scorer', type=str, required=True, help='Denoiser checkpoint')
    p.add_argument('--adapter', type=str, default=None, help='Adapter checkpoint')
    p.add_argument('--preset', choices=sorted(CFG_PRESETS), default=None, help='Guidance preset by image kind')
    p.add_argument('--cfg', type=float, default=None, help='Guidance scale (beats --preset)')
    p.add_argument('--reg', type=float, default=None, help='Layer regularization weight')
    p.add_argument('--iters', type=int, default=None)
    p.add_argument('--out', type=str, required=True, help='Output directory')
    _common(p)

    p = sub.add_parser('colorize', help='Colorize a sketch with layered variational score distillation')
    p.add_argument('--base', type=str, required=True, help='Sketch PNG (or uniform image with --from-uniform)')
    p.add_argument('--category', type=int, required=True, help='Category id of the drawn object')
    p.add_argument('--from-uniform', action='store_true', help='Extract the sketch from a uniformly lit image')
    p.add_argument('--scorer', type=str, required=True, help='Denoiser checkpoint')
    p.add_argument('--cfg', type=float, default=None, help='Guidance scale')
    p.add_argument('--structure-weight', type=float, default=None, help='Structure regularizer weight')
    p.add_argument('--iters', type=int, default=None)
    p.add_argument('--out', type=str, required=True, help='Output directory')
    _common(p)

    p = sub.add_parser('eval', help='Benchmark distillation on the test split')
    p.add_argument('--data', type=str, required=True, help='Dataset directory')
    p.add_argument('--scorer', type=str, required=True, help='Denoiser checkpoint')
    p.add_argument('--adapter', type=str, default=None, help='Adapter checkpoint')
    p.add_argument('--directions', type=str, default=None, help='Comma-separated direction subset, e.g. 0,3,6,9')
    p.add_argument('--max-scenes', type=int, default=None, help='Cap on test scenes')
    p.add_argument('--iters', type=int, default=None, help='Distillation iterations per case')
    p.add_argument('--cfg', type=float, default=None, help='Guidance scale per case')
    p.add_argument('--methods', type=str, default=None, help='Comma-separated methods: layered, no_adapter, direct (first is the headline)')
    p.add_argument('--out', type=str, required=True, help='Report JSON (CSV mirror and chart written alongside)')
    _common(p)

    p = sub.add_parser('reproduce', help='Run gen-data, train-scorer, train-adapter and eval end to end')
    p.add_argument('--quick', action='store_true', help='Desk-scale preset (200 scenes at 32x32)')
    p.add_argument('--workers', type=int, default=None, help='Rendering processes')
    p.add_argument('--out', type=str, required=True, help='Output directory')
    _common(p)

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Map parsed flags to dotted RunConfig keys"""
    get = vars(args).get
    overrides = {"seed": get("seed"), "log_level": get("log"), "device": get("device")}
    command = args.command
    if command == "gen-data":
        overrides.update({
            "data.num_scenes": get("num_scenes"),
            "data.size": get("size"),
            "data.split_fraction": get("test_frac"),
            "data.ambient": get("ambient"),
            "data.workers": get("workers"),
        })
    elif command == "train-scorer":
        overrides.update({"scorer.epochs": get("epochs"), "scorer.lr": get("lr"), "scorer.batch": get("batch")})
    elif command == "train-adapter":
        overrides.update({"adapter.iters": get("iters"), "adapter.lr": get("lr"), "adapter.batch": get("batch")})
    elif command == "sample":
        overrides.update({
            "sample.steps": get("steps"),
            "sample.guidance_scale": get("cfg"),
            "sample.size": get("size"),
            "sample.batch": get("batch"),
        })
    elif command == "distill":
        cfg_scale = get("cfg")
        if cfg_scale is None and get("preset") is not None:
            cfg_scale = CFG_PRESETS[args.preset]
        overrides.update({
            "distill.cfg_scale": cfg_scale,
            "distill.reg_weight": get("reg"),
            "distill.iters": get("iters"),
        })
    elif command == "colorize":
        overrides.update({
            "colorize.cfg_scale": get("cfg"),
            "colorize.structure_weight": get("structure_weight"),
            "colorize.iters": get("iters"),
        })
    elif command == "eval":
        directions = get("directions")
        methods = get("methods")
        overrides.update({
            "eval.directions": parse_int_list(directions) if directions is not None else None,
            "eval.max_scenes": get("max_scenes"),
            "eval.distill.iters": get("iters"),
            "eval.distill.cfg_scale": get("cfg"),
            "eval.methods": parse_str_list(methods) if methods is not None else None,
        })
    elif command == "reproduce":
        overrides.update({"data.workers": get("workers")})
    return overrides


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "gen-data": cmd_gen_data,
    "train-scorer": cmd_train_scorer,
    "train-adapter": cmd_train_adapter,
    "sample": cmd_sample,
    "distill": cmd_distill,
    "colorize": cmd_colorize,
    "eval": cmd_eval,
    "reproduce": cmd_reproduce,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, resolve the run configuration and dispatch to a subcommand

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return 2
    except SystemExit as e:
        # --help and --version exit through argparse
        return int(e.code or 0)

    try:
        configure_logging(args.log or Settings().log)
        cfg = resolve_config(args.config, _overrides(args), quick=getattr(args, "quick", False))
        configure_logging(cfg.log_level)
        return COMMANDS[args.command](args, cfg)
    except (LayerlightError, OSError, ValidationError, ValueError) as e:
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1
