"""``twostream`` command line: synth, flow-encode, adapt, augment-preview, train, eval, comm-report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import flow, tsr
from .augment import apply_crop, sample_crop
from .comm import SYNC_MODES, SyncPolicy, break_even_batch, comm_breakdown
from .config import ConfigError, RunConfig
from .data import ManifestError, frame_name, load_dataset, load_frames, read_manifest, resolve
from .evaluation import EvalItem, evaluate
from .models import (
    Flatten, ToyNet, adapt_first_layer, infer_shapes, load_checkpoint,
    save_checkpoint, transfer_to_temporal, vgg16_layout,
)
from .synth import VARIANTS, synthesize
from .trainer import Learner, TrainingDiverged, run_training

log = logging.getLogger("twostream")

EXIT_CODES = {"config": 2, "manifest": 3, "io": 4, "data": 5, "diverged": 6}


class CommandError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=False) + "\n"


def _load_config(args) -> RunConfig:
    overrides = {k: v for k, v in (
        (key, getattr(args, f"cfg_{key}", None)) for key in RunConfig.keys()
    ) if v is not None}
    return RunConfig.load(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> None:
    cfg = _load_config(args)
    sp, tp = synthesize(
        args.out, args.classes, args.videos_per_class, args.frames, cfg.seed,
        cfg.canvas_w, cfg.canvas_h, args.variant,
    )
    print(f"wrote {sp} and {tp}")


def cmd_flow_encode(args) -> None:
    src = Path(args.input)
    if src.is_dir():
        fields = [
            flow.FlowField.from_array(tsr.load(src / frame_name("flow", args.start + i)))
            for i in range(flow.STACK_LENGTH)
        ]
        out = flow.build_stack(fields, args.bound, args.start).data
    else:
        field = flow.FlowField.from_array(tsr.load(src))
        out = np.stack(flow.quantize_flow(field, args.bound))
    tsr.save(args.output, out)


def cmd_adapt(args) -> None:
    weights = tsr.load(args.input)
    tsr.save(args.output, adapt_first_layer(weights, args.target_channels))


def _preview_image(cfg: RunConfig) -> np.ndarray:
    yy, xx = np.mgrid[0 : cfg.canvas_h, 0 : cfg.canvas_w]
    r = 255 * xx // max(cfg.canvas_w - 1, 1)
    g = 255 * yy // max(cfg.canvas_h - 1, 1)
    b = 255 * ((xx // 16 + yy // 16) % 2)
    return np.stack([r, g, b]).astype(np.uint8)


def cmd_augment_preview(args) -> None:
    cfg = _load_config(args)
    canvas = cfg.canvas()
    image = tsr.load(args.image) if args.image else _preview_image(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(args.n):
        cs = sample_crop(canvas, [cfg.seed, i])
        lines.append(cs.to_line() + "\n")
        tsr.save(out / f"crop_{i:05d}.tsr", apply_crop(image, cs, canvas))
    with open(out / "crops.txt", "w") as fh:
        fh.writelines(lines)


def cmd_train(args) -> None:
    cfg = _load_config(args)
    tcfg = cfg.train_config()
    kind = "rgb" if cfg.stream == "spatial" else "flow"
    records = read_manifest(args.manifest, cfg.num_classes)
    if not any(r.kind == kind for r in records):
        raise CommandError("manifest", f"{args.manifest}: no {kind} records for the {cfg.stream} stream")
    videos = load_dataset(args.manifest, kind, cfg.num_classes)
    learner = None
    if args.init_spatial:
        if cfg.stream != "temporal":
            raise CommandError("config", "--init-spatial only applies to the temporal stream")
        net = transfer_to_temporal(load_checkpoint(args.init_spatial), tcfg.model)
        learner = Learner(net, tcfg.momentum, tcfg.weight_decay)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w") as fh:
        _, learner = run_training(tcfg, videos, lambda r: fh.write(_json_line(r.to_json())), learner)
    save_checkpoint(learner.net, out / "checkpoint")
    (out / "run.cfg").write_text(cfg.dump())


def _eval_items(manifests: list[str], num_classes: int) -> list[EvalItem]:
    # records of the same video pair up by resolved path; output keys stay manifest-relative
    groups: "OrderedDict[str, dict]" = OrderedDict()
    names: dict[str, str] = {}
    for m in manifests:
        base = Path(m).parent
        for rec in read_manifest(m, num_classes):
            where = str(resolve(rec, base))
            names.setdefault(where, rec.path)
            groups.setdefault(where, {})[rec.kind] = (rec, base)
    items = []
    for where, kinds in groups.items():
        key = names[where]
        label = next(iter(kinds.values()))[0].label

        def loader(kind, kinds=kinds, key=key):
            def load():
                if kind not in kinds:
                    raise ValueError(f"{key}: no {kind} record")
                rec, base = kinds[kind]
                return load_frames(rec, base)
            return load

        items.append(EvalItem(key, label, loader("rgb"), loader("flow")))
    return items


def _check_net(net: ToyNet, cfg: RunConfig, stream: str) -> None:
    if net.cfg.stream != stream:
        raise CommandError("config", f"checkpoint is a {net.cfg.stream} net, expected {stream}")
    if net.cfg.input_size != cfg.out_size or net.cfg.num_classes != cfg.num_classes:
        raise CommandError(
            "config",
            f"{stream} checkpoint takes {net.cfg.input_size}px / {net.cfg.num_classes} classes; "
            f"config says out_size={cfg.out_size}, num_classes={cfg.num_classes}",
        )


def cmd_eval(args) -> None:
    cfg = _load_config(args)
    items = _eval_items(args.manifest, cfg.num_classes)
    spatial = load_checkpoint(args.spatial_ckpt)
    temporal = load_checkpoint(args.temporal_ckpt)
    _check_net(spatial, cfg, "spatial")
    _check_net(temporal, cfg, "temporal")
    sink = open(args.out, "w") if args.out else sys.stdout
    scores_dir = Path(args.scores_dir) if args.scores_dir else None
    if scores_dir:
        scores_dir.mkdir(parents=True, exist_ok=True)

    written = []

    def emit(res):
        sink.write(_json_line(res.to_json()))
        if scores_dir:
            # rows: spatial, temporal, fused
            path = scores_dir / f"scores_{len(written):05d}.tsr"
            tsr.save(path, np.stack([res.spatial, res.temporal, res.fused]))
            written.append(path)

    try:
        report = evaluate(
            spatial, temporal, items, cfg.canvas(), cfg.flow_bound, cfg.fusion(),
            cfg.score_space, on_result=emit,
        )
        sink.write(_json_line(report.summary()))
    finally:
        if sink is not sys.stdout:
            sink.close()


def comm_rows(cfg: RunConfig) -> list[dict]:
    if cfg.layout == "vgg16":
        layout = vgg16_layout(cfg.num_classes, 3, cfg.dropout())
        in_shape = (3, 224, 224)
    else:
        model = cfg.model()
        layout = model.layout
        in_shape = (model.in_channels, model.input_size, model.input_size)
    shapes = infer_shapes(layout, in_shape)
    flat = next(i for i, l in enumerate(layout) if isinstance(l, Flatten))
    fc_dim = shapes[flat][0]
    rows = []
    for k in (1, 2, 4, 8):
        for mode in SYNC_MODES:
            b = comm_breakdown(layout, k, SyncPolicy(mode), cfg.batch_per_worker, fc_dim)
            rows.append({
                "K": k,
                "mode": mode,
                "batch_per_worker": cfg.batch_per_worker,
                "fc_input_dim": fc_dim,
                "param_sync_bytes": b.param_sync_bytes,
                "activation_bytes": b.activation_bytes,
                "fc_sync_bytes": b.fc_sync_bytes,
                "total_bytes": b.total,
                "break_even_batch": break_even_batch(layout, k, fc_dim) if k > 1 else None,
            })
    return rows


def cmd_comm_report(args) -> None:
    cfg = _load_config(args)
    rows = comm_rows(cfg)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for row in rows:
            sink.write(_json_line(row))
    finally:
        if sink is not sys.stdout:
            sink.close()


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value run config file")
    g = p.add_argument_group("config overrides (flag wins over file)")
    for key in RunConfig.keys():
        g.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="V")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twostream", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic moving-bar dataset")
    _add_config_flags(p)
    p.add_argument("out")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--videos-per-class", type=int, default=10)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--variant", choices=VARIANTS, default="joint")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flow-encode", help="quantize flow fields (a 10-field stack for a video dir)")
    p.add_argument("input", help="2 x H x W TSR1 file, or a video directory of flow_*.tsr")
    p.add_argument("output")
    p.add_argument("--bound", type=float, default=flow.DEFAULT_BOUND)
    p.add_argument("--start", type=int, default=0)
    p.set_defaults(func=cmd_flow_encode)

    p = sub.add_parser("adapt", help="average first-layer filters over channels and replicate")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--target-channels", type=int, default=20)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("augment-preview", help="dump sampled CropSpecs and their crops")
    _add_config_flags(p)
    p.add_argument("out")
    p.add_argument("-n", type=int, default=16)
    p.add_argument("--image", help="canvas-sized C x H x W TSR1 image (default: test pattern)")
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train", help="train one stream")
    _add_config_flags(p)
    p.add_argument("manifest")
    p.add_argument("out")
    p.add_argument("--init-spatial", help="spatial checkpoint to initialize a temporal net from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="25-position / 10-crop evaluation with score fusion")
    _add_config_flags(p)
    p.add_argument("spatial_ckpt")
    p.add_argument("temporal_ckpt")
    p.add_argument("--manifest", action="append", required=True,
                   help="manifest file; repeat to combine rgb and flow manifests")
    p.add_argument("--out", help="record output file (default stdout)")
    p.add_argument("--scores-dir", help="also dump per-video score triples as TSR1")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("comm-report", help="tabulate per-iteration sync bytes for K in 1,2,4,8")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_comm_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CommandError as exc:
        category, msg = exc.category, str(exc)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except ManifestError as exc:
        category, msg = "manifest", str(exc)
    except TrainingDiverged as exc:
        category, msg = "diverged", str(exc)
    except (OSError, tsr.TSRFormatError) as exc:
        category, msg = "io", str(exc)
    except ValueError as exc:
        category, msg = "data", str(exc)
    else:
        return 0
    print(f"twostream: {category} error: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
