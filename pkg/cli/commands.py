"""
CLI Commands.

simulate, train, eval, infer, bench and inspect. Each command reads the
run configuration, does its work through the library packages and returns
a result dict; printing is limited to the human-facing summary.
"""

import argparse
import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from bench.latency import measure_latency, measure_throughput
from bench.report import build_report
from engine import no_grad
from model.checkpoint import MAGIC as SSMC_MAGIC
from model.checkpoint import Checkpoint, load_checkpoint, read_checkpoint_header
from model.config import ModelConfig
from model.network import ChirpCarry, SSMRadNet
from radar.dataset_io import MAGIC as ADCC_MAGIC
from radar.dataset_io import load_dataset, read_header, write_dataset
from radar.scene import AdcFrame, Labels
from radar.simulator import random_scenes, synthesize_frame
from streaming.session import RESET_PER_FRAME, RETAIN_ACROSS_FRAMES, StreamSession
from training.evaluator import evaluate, evaluate_async
from training.export import write_pgm, write_prob_map
from training.metrics import binarize
from training.trainer import Trainer
from utils.errors import ConfigError, FormatError
from utils.settings import get_settings
from .base_command import BaseCommand
from .run_config import RunConfig, load_run_config, overridden_sections

logger = logging.getLogger(__name__)

MASKS_DIR = "masks"
Record = Tuple[AdcFrame, Labels]


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='Flat section.key = value config file')
    parser.add_argument(
        '--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        help='Override one config key (repeatable)'
    )


def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, args.overrides)


def _model_explicit(args: argparse.Namespace) -> bool:
    return args.config is not None or "model" in overridden_sections(args.overrides)


def _load_records(path: str, config: ModelConfig) -> List[Record]:
    records = load_dataset(path)
    for index, (frame, labels) in enumerate(records):
        if frame.samples.shape != config.dims:
            raise ConfigError(f"{path}: frame {index} dims {frame.samples.shape} do not match model dims {config.dims}")
        if labels.grid != config.output_grid:
            raise ConfigError(f"{path}: frame {index} label grid {labels.grid} != model output grid {config.output_grid}")
    return records


def _load_model(args: argparse.Namespace, run: RunConfig) -> SSMRadNet:
    """Model from a checkpoint, validated against the run config when one was given."""
    checkpoint = load_checkpoint(args.checkpoint, expected=run.model if _model_explicit(args) else None)
    config = checkpoint.config
    if _model_explicit(args):
        # runtime-only keys (precision, decode_chirps, upsample...) come from the run
        config = run.model
    return SSMRadNet(config, Checkpoint(config=config, tensors=checkpoint.tensors).to_parameters())


# ---------------------------------------------------------------------------
# functional entry points
# ---------------------------------------------------------------------------

def command_simulate(run: RunConfig, n_frames: int, out_path: str, no_targets: bool = False) -> Dict[str, Any]:
    """
    Write a seeded synthetic ADCC dataset.

    Returns:
        frames written and per-frame target counts
    """
    sim = run.sim
    low, high = (0, 0) if no_targets else (sim.min_targets, sim.max_targets)
    scenes = random_scenes(
        n_frames, run.model.dims, seed=sim.seed, snr_db=sim.snr_db, min_targets=low, max_targets=high
    )
    written = write_dataset(scenes, out_path, grid=run.model.output_grid)
    counts = [len(s.targets) for s in scenes]
    for index, count in enumerate(counts):
        print(f"frame {index}: {count} targets")
    return {"frames": written, "target_counts": counts, "path": str(out_path)}


def command_train(run: RunConfig, data: str, run_dir: str, val: Optional[str] = None) -> Dict[str, Any]:
    """Train from scratch; writes config.echo, checkpoint.ssmc and log.csv into ``run_dir``."""
    run.write_echo(run_dir)
    train_records = _load_records(data, run.model)
    val_records = _load_records(val, run.model) if val else None
    model = SSMRadNet(run.model)
    result = Trainer(model, run.train, run_dir).fit(train_records, val_records)
    print(f"best epoch {result.best_epoch}: val_miou={result.best_miou:.4f}")
    return {
        "best_epoch": result.best_epoch,
        "best_miou": result.best_miou,
        "checkpoint": str(result.checkpoint_path),
        "epochs": len(result.history),
    }


def command_eval(model: SSMRadNet, records: List[Record], run: RunConfig, workers: int = 1) -> Dict[str, Any]:
    """Evaluate and print the EvalReport."""
    if workers > 1:
        report = asyncio.run(evaluate_async(
            model, records, workers, run.train.score_thresh, run.train.dist_thresh
        ))
    else:
        report = evaluate(model, records, run.train.batch_size, run.train.score_thresh, run.train.dist_thresh)
    print(report.summary())
    return report.model_dump()


def command_infer(
    model: SSMRadNet,
    frames: List[AdcFrame],
    run_dir: str,
    stream: bool = False,
    retain: bool = False,
    write_probs: bool = False
) -> Dict[str, Any]:
    """
    Predict every frame and write masks/frame_NNNN.pgm under ``run_dir``.

    With ``stream`` the frames are replayed tick by tick through a
    StreamSession; otherwise the batch forward is used.
    """
    masks_dir = Path(run_dir) / MASKS_DIR
    masks_dir.mkdir(parents=True, exist_ok=True)
    session = StreamSession(model, RETAIN_ACROSS_FRAMES if retain else RESET_PER_FRAME) if stream else None
    carry: Optional[ChirpCarry] = None
    written = []
    for index, frame in enumerate(frames):
        if session is not None:
            maps = session.ingest_frame(frame)
        else:
            with no_grad():
                batched, next_carry = model.forward_batch(frame.samples[None], carry=carry)
            carry = next_carry if retain else None
            maps = batched.select(0)
        if maps.segmentation is None:
            raise ConfigError("infer needs a model with a segmentation head")
        path = masks_dir / f"frame_{index:04d}.pgm"
        write_pgm(binarize(maps.seg_array()), path)
        if write_probs:
            write_prob_map(maps.seg_array(), masks_dir / f"frame_{index:04d}.bevf")
        written.append(str(path))
    mode = "stream" if stream else "batch"
    print(f"wrote {len(written)} masks to {masks_dir} ({mode})")
    return {"masks": written, "mode": mode}


def command_bench(run: RunConfig, out_path: Optional[str] = None) -> Dict[str, Any]:
    """Analytic counts plus optional measured latency; writes key=value report."""
    model = SSMRadNet(run.model)
    latency = throughput = None
    if run.bench.measure:
        scenes = random_scenes(run.bench.frames, run.model.dims, seed=run.sim.seed, snr_db=run.sim.snr_db)
        frames = [synthesize_frame(s) for s in scenes]
        latency = measure_latency(model, frames, run.bench.mode, run.bench.warmup)
        if run.bench.workers > 1:
            throughput = measure_throughput(model, frames, run.bench.workers)
    report = build_report(run.model, latency, throughput, model)
    print(report.to_table(), end="")
    if out_path:
        report.write(out_path)
    return report.model_dump()


def command_inspect(path: str) -> Dict[str, Any]:
    """Print the header of an ADCC dataset or SSMC checkpoint."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
    if magic == SSMC_MAGIC:
        header = read_checkpoint_header(path)
        print(f"SSMC version {header['version']}, {len(header['entries'])} entries, {header['elements']} scalars")
        for key, value in header["config"].items():
            print(f"  model.{key} = {value}")
        for name, shape in header["entries"]:
            print(f"  {name}: {list(shape)}")
        return {"kind": "checkpoint", **header}
    if magic == ADCC_MAGIC:
        version, count = read_header(path)
        records = load_dataset(path)
        dims = [list(frame.samples.shape) + list(labels.grid) for frame, labels in records]
        print(f"ADCC version {version}, {count} frames")
        for index, d in enumerate(dims):
            print(f"  frame {index}: C={d[0]} S={d[1]} N_Rx={d[2]} grid={d[3]}x{d[4]}")
        return {"kind": "dataset", "version": version, "frames": count, "dims": dims}
    raise FormatError(f"Unrecognised magic {magic!r} in {path}", 0)


# ---------------------------------------------------------------------------
# command classes
# ---------------------------------------------------------------------------

class SimulateCommand(BaseCommand):
    name = "simulate"
    help = "Write a synthetic ADCC dataset"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        _add_config_arguments(parser)
        parser.add_argument('--frames', type=int, default=None, help='Frames to simulate (default sim.frames)')
        parser.add_argument('--out', type=str, required=True, help='Destination ADCC file')
        parser.add_argument('--no-targets', action='store_true', help='Noise-only frames')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        run = _run_config(args)
        frames = args.frames if args.frames is not None else run.sim.frames
        if frames < 1:
            raise ConfigError(f"--frames must be >= 1, got {frames}")
        return command_simulate(run, frames, args.out, args.no_targets)


class TrainCommand(BaseCommand):
    name = "train"
    help = "Train a model and write checkpoint + CSV log"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        _add_config_arguments(parser)
        parser.add_argument('--data', type=str, required=True, help='Training ADCC file')
        parser.add_argument('--val', type=str, default=None, help='Validation ADCC file')
        parser.add_argument('--run-dir', type=str, required=True, help='Output directory')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        return command_train(_run_config(args), args.data, args.run_dir, args.val)


class EvalCommand(BaseCommand):
    name = "eval"
    help = "Evaluate a checkpoint on an ADCC file"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        _add_config_arguments(parser)
        parser.add_argument('--data', type=str, required=True, help='ADCC file with labels')
        parser.add_argument('--checkpoint', type=str, required=True, help='SSMC checkpoint')
        parser.add_argument('--workers', type=int, default=None, help='Worker threads (default SSMRADNET_THREADS)')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        run = _run_config(args)
        model = _load_model(args, run)
        records = _load_records(args.data, model.config)
        threads = get_settings().threads
        workers = min(args.workers, threads) if args.workers is not None else threads
        return command_eval(model, records, run, workers)


class InferCommand(BaseCommand):
    name = "infer"
    help = "Write predicted masks as PGM files"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        _add_config_arguments(parser)
        parser.add_argument('--data', type=str, required=True, help='ADCC file')
        parser.add_argument('--checkpoint', type=str, required=True, help='SSMC checkpoint')
        parser.add_argument('--run-dir', type=str, required=True, help='Output directory')
        mode = parser.add_mutually_exclusive_group()
        mode.add_argument('--stream', action='store_true', help='Replay tick by tick through a stream session')
        mode.add_argument('--batch', action='store_true', help='Batch forward per frame (default)')
        parser.add_argument('--retain', action='store_true', help='Carry chirp state across frames')
        parser.add_argument('--probs', action='store_true', help='Also write raw f32 probability maps')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        run = _run_config(args)
        model = _load_model(args, run)
        frames = [frame for frame, _ in _load_records(args.data, model.config)]
        return command_infer(model, frames, args.run_dir, args.stream, args.retain, args.probs)


class BenchCommand(BaseCommand):
    name = "bench"
    help = "Report parameters, MACs, latency and streaming memory"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        _add_config_arguments(parser)
        parser.add_argument('--out', type=str, default=None, help='key=value report file')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        return command_bench(_run_config(args), args.out)


class InspectCommand(BaseCommand):
    name = "inspect"
    help = "Print ADCC or SSMC file headers"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('path', type=str, help='ADCC dataset or SSMC checkpoint')

    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        return command_inspect(args.path)


COMMANDS = [SimulateCommand, TrainCommand, EvalCommand, InferCommand, BenchCommand, InspectCommand]
