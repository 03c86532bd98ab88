"""Command line entry point.

Exit codes: 0 success, 1 validation/parse/load error (including bad usage),
2 provider error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .errors import Group3DError, ProviderError
from .evaluation import evaluate, format_report
from .evidence import read_detections, read_instance_points, write_detections, write_instance_points
from .harness import generate_scene, load_spec, write_scene
from .pipeline import DEFAULT_FRAME_BUDGET, GROUPING_MODES, POSE_MODES, PipelineConfig, run_pipeline
from .providers import ChatCompletionProvider, FixtureProvider
from .scene import load_ground_truth, load_scene, read_vocab_fixture
from .vocabulary import DEFAULT_K, aggregate_vocabulary, parse_vocab_response

EXIT_OK, EXIT_INVALID, EXIT_PROVIDER = 0, 1, 2

POINTS_SUFFIX = ".points"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _thresholds(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("no thresholds given")
    return vals


def build_parser() -> argparse.ArgumentParser:
    d = PipelineConfig()
    p = _Parser(prog="group3d", description="Group-gated open-vocabulary 3D detection.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="detect objects in a scene directory")
    r.add_argument("--scene", required=True, type=Path)
    r.add_argument("--voxel-size", type=float, default=d.voxel_size)
    r.add_argument("--tau-iou", type=float, default=d.tau_iou)
    r.add_argument("--tau-cont", type=float, default=d.tau_cont)
    r.add_argument("--tau-support", type=float, default=d.tau_support)
    r.add_argument("--k", type=int, default=DEFAULT_K, help="categories kept per view")
    r.add_argument("--frames", type=int, default=DEFAULT_FRAME_BUDGET, help="frame budget")
    r.add_argument("--pose-mode", choices=POSE_MODES, default=d.pose_mode)
    r.add_argument("--grouping", choices=GROUPING_MODES, default=d.grouping)
    r.add_argument("--jobs", type=int, default=1, help="threads for fragment lifting")
    r.add_argument("--out", required=True, type=Path)

    e = sub.add_parser("eval", help="score a detection file against ground truth")
    e.add_argument("--pred", required=True, type=Path)
    e.add_argument("--gt", required=True, type=Path, help="scene directory with gt files")
    e.add_argument("--iou", type=_thresholds, default=[0.25, 0.5])
    e.add_argument("--instance-seg", action="store_true",
                   help=f"also score label transfer (needs <pred>{POINTS_SUFFIX})")

    s = sub.add_parser("synth", help="write a synthetic scene directory")
    s.add_argument("--spec", required=True, type=Path, help="JSON scene spec")
    s.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    s.add_argument("--out", required=True, type=Path)

    g = sub.add_parser("group", help="request compatibility groups for a vocabulary")
    g.add_argument("--vocab", required=True, type=Path, help="per-view vocabulary lines")
    g.add_argument("--k", type=int, default=DEFAULT_K)
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", type=Path, help="recorded grouping response")
    src.add_argument("--endpoint", help="chat-completion URL")
    g.add_argument("--model", default="default", help="model name for --endpoint")
    g.add_argument("--timeout", type=float, default=60.0)
    g.add_argument("--retries", type=int, default=2)
    return p


def _cmd_run(args) -> int:
    config = PipelineConfig(
        voxel_size=args.voxel_size, tau_iou=args.tau_iou, tau_cont=args.tau_cont,
        tau_support=args.tau_support, k=args.k, frame_budget=args.frames,
        pose_mode=args.pose_mode, grouping=args.grouping, n_jobs=args.jobs,
    )
    bundle = load_scene(args.scene, frame_budget=config.frame_budget)
    instances = run_pipeline(bundle, config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_detections(args.out, instances)
    write_instance_points(str(args.out) + POINTS_SUFFIX, instances)
    print(f"{len(instances)} instances written to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    preds = read_detections(args.pred)
    boxes, vertices = load_ground_truth(args.gt)
    if args.instance_seg:
        if vertices is None:
            raise Group3DError(f"{args.gt} has no gt_vertices.txt")
        preds = read_instance_points(str(args.pred) + POINTS_SUFFIX, preds)
    results = evaluate(preds, boxes, args.iou, vertices if args.instance_seg else None)
    print(format_report(results))
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec, noise, pose_mode = load_spec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    scene = generate_scene(spec, noise, pose_mode=pose_mode)
    write_scene(scene, args.out)
    print(f"{scene.n_objects} objects, {len(scene.frames)} frames written to {args.out}")
    return EXIT_OK


def _cmd_group(args) -> int:
    lines = read_vocab_fixture(args.vocab)
    vocab = aggregate_vocabulary(parse_vocab_response(ln, args.k) for ln in lines)
    if args.fixture is not None:
        provider = FixtureProvider(grouping_path=args.fixture)
    else:
        provider = ChatCompletionProvider(
            args.endpoint, args.model, timeout=args.timeout, max_retries=args.retries
        )
    text = provider.request_grouping(vocab)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "eval": _cmd_eval, "synth": _cmd_synth, "group": _cmd_group}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (Group3DError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
