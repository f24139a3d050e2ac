"""Command-line entry point wiring the toolkit together.

Subcommands: detect, eval, quantize, anchors, bench, augment, split,
optim-demo. Flags override values from an optional flat key=value config
file; every run echoes its fully-resolved config into the output directory.

Exit codes: 0 success, 2 usage/validation, 3 missing input, 4 bad file
format, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorSet, anchor_fit, autoanchor, default_anchors
from .annotate import save_annotated
from .bench import BenchStats, bench_forward, bench_pipeline
from .evaluate import evaluate, write_report
from .graph import ModelGraph, THERMAL_CLASS_NAMES
from .imaging import (
    Frame,
    ImageFormatError,
    augment,
    letterbox,
    load_frame,
    read_labels,
    save_frame,
    split_dataset,
    write_labels,
)
from .modelio import ModelFormatError, load_model, save_model
from .optim import optimizer_comparison
from .postprocess import Detections, format_detections, parse_detections, postprocess_pipeline
from .quantize import (
    QuantizedModel,
    calibrate,
    load_any_model,
    quantize_model,
    save_quantized,
)
from .tensor import Tensor

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4

VALID_SIZES = tuple(range(128, 641, 32))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name)

    def echo_text(self) -> str:
        lines = [f"command = {self.command}"]
        for k in sorted(self.values):
            v = self.values[k]
            if v is None or k == "config":
                continue
            if isinstance(v, (list, tuple)):
                v = " ".join(str(i) for i in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags take precedence")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default runs/<command>)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int, help="frame-level worker threads (default 1)")


# defaults applied after config-file merge; None means "required or computed"
_DEFAULTS: dict[str, dict] = {
    "detect": dict(conf=0.25, iou=0.45, size=None, max_out=300, seed=0, threads=1),
    "eval": dict(conf=0.25, iou=0.45, iou_match=0.5, size=None, seed=0, threads=1,
                 frame_size=None),
    "quantize": dict(mode="minmax", percentile=99.99, seed=0, threads=1),
    "anchors": dict(size=640, bpr_keep=0.98, ratio_threshold=4.0, seed=0, threads=1,
                    frame_size=None),
    "bench": dict(size=None, runs=50, warmup=10, pipeline=False, seed=0, threads=1),
    "augment": dict(kind="flip_h", count=1, size=640, angle=None, scale=None, seed=0, threads=1),
    "split": dict(fraction=0.72, seed=0, threads=1),
    "optim-demo": dict(steps=200, seed=0, threads=1),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermodet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector over frames")
    p.add_argument("--model", help="TYM1 or TYQ1 model file")
    p.add_argument("--input", nargs="+", help="frame files or a directory")
    p.add_argument("--conf", type=float, help="confidence threshold")
    p.add_argument("--iou", type=float, help="NMS IoU threshold")
    p.add_argument("--size", type=int, help="network input size (multiple of 32)")
    p.add_argument("--max-out", dest="max_out", type=int, help="max detections per frame")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--model", help="model file (runs the detector)")
    p.add_argument("--images", help="frame directory")
    p.add_argument("--labels", help="ground-truth label directory")
    p.add_argument("--dets", help="precomputed detection-record directory (skips the model)")
    p.add_argument("--conf", type=float, help="operating confidence threshold")
    p.add_argument("--iou", type=float, help="NMS IoU threshold")
    p.add_argument("--iou-match", dest="iou_match", type=float, help="TP matching IoU")
    p.add_argument("--size", type=int, help="network input size")
    p.add_argument("--frame-size", dest="frame_size", type=int, nargs=2,
                   metavar=("W", "H"), help="frame size when --images is absent")
    _add_common(p)

    p = sub.add_parser("quantize", help="post-training int8 quantization")
    p.add_argument("--model", help="TYM1 model file")
    p.add_argument("--calib", help="calibration frame directory")
    p.add_argument("--out", help="output TYQ1 path")
    p.add_argument("--mode", choices=["minmax", "percentile"], help="calibration mode")
    p.add_argument("--percentile", type=float, help="clip percentile for percentile mode")
    _add_common(p)

    p = sub.add_parser("anchors", help="check anchor fit; recompute if poor")
    p.add_argument("--labels", help="label directory")
    p.add_argument("--images", help="frame directory (for frame sizes)")
    p.add_argument("--model", help="model whose anchors to check/update")
    p.add_argument("--out", help="write a model copy with the resulting anchors")
    p.add_argument("--size", type=int, help="network input size")
    p.add_argument("--bpr-keep", dest="bpr_keep", type=float, help="keep threshold on BPR")
    p.add_argument("--ratio-threshold", dest="ratio_threshold", type=float)
    p.add_argument("--frame-size", dest="frame_size", type=int, nargs=2,
                   metavar=("W", "H"), help="frame size when --images is absent")
    _add_common(p)

    p = sub.add_parser("bench", help="latency/FPS harness")
    p.add_argument("--model", help="TYM1 or TYQ1 model file")
    p.add_argument("--size", type=int, help="input size to time")
    p.add_argument("--runs", type=int, help="timed iterations")
    p.add_argument("--warmup", type=int, help="untimed warmup iterations")
    p.add_argument("--pipeline", action="store_const", const=True,
                   help="time the full letterbox+forward+postprocess path")
    p.add_argument("--images", help="frames for --pipeline mode")
    _add_common(p)

    p = sub.add_parser("augment", help="apply a geometric augmentation")
    p.add_argument("--images", help="frame directory")
    p.add_argument("--labels", help="label directory")
    p.add_argument("--kind", choices=["mosaic4", "flip_h", "scale_crop", "rotate"])
    p.add_argument("--count", type=int, help="number of augmented outputs")
    p.add_argument("--size", type=int, help="mosaic output size")
    p.add_argument("--angle", type=float, help="rotation angle in degrees")
    p.add_argument("--scale", type=float, help="scale factor for scale_crop")
    _add_common(p)

    p = sub.add_parser("split", help="deterministic train/val split")
    p.add_argument("--images", help="frame directory to enumerate")
    p.add_argument("--list", dest="list_file", help="newline-separated id list")
    p.add_argument("--fraction", type=float, help="train fraction (default 0.72)")
    _add_common(p)

    p = sub.add_parser("optim-demo", help="three-optimizer comparison on a quadratic")
    p.add_argument("--steps", type=int, help="optimization steps")
    _add_common(p)

    return ap


def _parse_config_file(path: str) -> dict:
    values = {}
    text = Path(path).read_text()
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        values[k.replace("-", "_")] = v
    return values


def _coerce(key: str, raw: str, defaults: dict):
    if key in ("input", "frame_size"):
        return raw.split()
    ref = defaults.get(key)
    if isinstance(ref, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(ref, int):
        return int(raw)
    if isinstance(ref, float):
        return float(raw)
    if key in ("size", "max_out", "runs", "warmup", "count", "steps", "seed", "threads"):
        return int(raw)
    if key in ("conf", "iou", "iou_match", "fraction", "angle", "scale",
               "bpr_keep", "ratio_threshold", "percentile"):
        return float(raw)
    if key == "pipeline":
        return raw.lower() in ("1", "true", "yes")
    return raw


def parse_config(argv: list[str]) -> RunConfig:
    """Parse argv (plus an optional config file) into a resolved RunConfig."""
    ap = build_parser()
    ns = ap.parse_args(argv)
    command = ns.command
    cli = {k: v for k, v in vars(ns).items() if k != "command"}
    defaults = dict(_DEFAULTS[command])

    merged = dict(defaults)
    cfg_path = cli.get("config")
    if cfg_path:
        file_values = _parse_config_file(cfg_path)
        known = set(cli) | {"command"}
        unknown = [k for k in file_values if k not in known]
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        for k, v in file_values.items():
            if k == "command":
                if v != command:
                    raise ConfigError(f"config is for command {v!r}, not {command!r}")
                continue
            merged[k] = _coerce(k, v, defaults)
    for k, v in cli.items():
        if v is not None:
            merged[k] = v

    if merged.get("frame_size"):
        merged["frame_size"] = tuple(int(v) for v in merged["frame_size"])
    _validate(command, merged)
    if not merged.get("out_dir"):
        merged["out_dir"] = f"runs/{command}"
    return RunConfig(command, merged)


def _validate(command: str, v: dict) -> None:
    size = v.get("size")
    if size is not None:
        if size % 32:
            raise ConfigError("--size: size must be a multiple of 32")
        if not VALID_SIZES[0] <= size <= VALID_SIZES[-1]:
            raise ConfigError(f"--size: size must lie in [{VALID_SIZES[0]}, {VALID_SIZES[-1]}]")
    for key in ("conf", "iou", "iou_match"):
        val = v.get(key)
        if val is not None and not 0.0 <= val <= 1.0:
            raise ConfigError(f"--{key.replace('_', '-')}: must lie in [0, 1]")
    if v.get("fraction") is not None and not 0.0 < v["fraction"] < 1.0:
        raise ConfigError("--fraction: must lie in (0, 1)")
    if v.get("runs") is not None and v["runs"] < 1:
        raise ConfigError("--runs: must be >= 1")
    if v.get("threads") is not None and v["threads"] < 1:
        raise ConfigError("--threads: must be >= 1")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

FRAME_SUFFIXES = (".pgm", ".png")


def list_frames(spec) -> list[Path]:
    paths: list[Path] = []
    entries = spec if isinstance(spec, (list, tuple)) else [spec]
    for entry in entries:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in FRAME_SUFFIXES))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"no such frame or directory: {p}")
    if not paths:
        raise FileNotFoundError(f"no frames found under {entries}")
    return paths


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        if cfg.values.get(key) in (None, []):
            raise ConfigError(f"--{key.replace('_', '-')} is required for {cfg.command}")


def _prepare_out_dir(cfg: RunConfig, *subdirs: str) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo_text())
    for s in subdirs:
        (out / s).mkdir(exist_ok=True)
    return out


def _scaled_anchors(model, size: int) -> AnchorSet:
    if size == model.input_size:
        return model.anchors
    return AnchorSet(model.anchors.anchors * (size / model.input_size),
                     model.anchors.strides)


def _forward_raw(model, x: np.ndarray):
    if isinstance(model, QuantizedModel):
        return model.run_raw(x)
    from .graph import run_program_f32

    return run_program_f32(model.program(), x)


def detect_frame(model, frame: Frame, size: int, conf: float, iou: float,
                 max_out: int = 300) -> Detections:
    tensor, _, m = letterbox(frame, size)
    heads = _forward_raw(model, tensor.data)
    return postprocess_pipeline(
        [Tensor(h) for h in heads],
        _scaled_anchors(model, size),
        conf, iou, m, max_out=max_out, num_classes=model.num_classes,
    )


def _map_frames(fn, frames, threads: int):
    if threads <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, frames))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_detect(cfg: RunConfig) -> int:
    _require(cfg, "model", "input")
    model = load_any_model(cfg.model)
    size = cfg.size or model.input_size
    out = _prepare_out_dir(cfg, "detections")
    paths = list_frames(cfg.input)

    def run(path: Path):
        frame = load_frame(path)
        dets = detect_frame(model, frame, size, cfg.conf, cfg.iou, cfg.max_out)
        (out / "detections" / f"{frame.source_id}.txt").write_text(
            format_detections(frame.source_id, dets)
        )
        save_annotated(frame.pixels, dets, out / "detections" / f"{frame.source_id}.png")
        return len(dets)

    counts = _map_frames(run, paths, cfg.threads)
    print(f"detect: {len(paths)} frame(s), {sum(counts)} detection(s) -> {out / 'detections'}")
    return EXIT_OK


def _load_gt_dir(labels_dir: str) -> dict[str, list]:
    gts = {}
    for p in sorted(Path(labels_dir).glob("*.txt")):
        gts[p.stem] = read_labels(p)
    if not gts:
        raise FileNotFoundError(f"no label files under {labels_dir}")
    return gts


def _cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "labels")
    out = _prepare_out_dir(cfg, "reports")
    gts = _load_gt_dir(cfg.labels)

    frame_sizes: dict[str, tuple[int, int]] = {}
    dets_by_frame: dict[str, Detections] = {}
    if cfg.values.get("dets"):
        for p in sorted(Path(cfg.dets).glob("*.txt")):
            fid, d = parse_detections(p.read_text())
            dets_by_frame[fid] = d
        if not dets_by_frame:
            raise FileNotFoundError(f"no detection records under {cfg.dets}")
        if cfg.values.get("images"):
            for p in list_frames(cfg.images):
                f = load_frame(p)
                frame_sizes[f.source_id] = (f.width, f.height)
    else:
        _require(cfg, "model", "images")
        model = load_any_model(cfg.model)
        size = cfg.size or model.input_size

        def run(path: Path):
            frame = load_frame(path)
            dets = detect_frame(model, frame, size, 0.001, cfg.iou)
            return frame.source_id, (frame.width, frame.height), dets

        for fid, fsize, dets in _map_frames(run, list_frames(cfg.images), cfg.threads):
            frame_sizes[fid] = fsize
            dets_by_frame[fid] = dets

    sizes = frame_sizes if frame_sizes else tuple(cfg.frame_size or (640, 480))
    report = evaluate(
        dets_by_frame, gts, sizes, THERMAL_CLASS_NAMES,
        conf_threshold=cfg.conf, iou_match=cfg.iou_match,
    )
    write_report(report, out / "reports" / "report.json", "structured")
    write_report(report, out / "reports" / "report.csv", "tabular")
    write_report(report, out / "reports" / "pr_curves.svg", "pr_plot")
    print(
        f"eval: map50 {report.map50:.4f} | precision {report.precision:.4f} "
        f"| recall {report.recall:.4f} | best F1 {report.best_f1:.4f} "
        f"@ conf {report.best_confidence:.3f}"
    )
    return EXIT_OK


def _cmd_quantize(cfg: RunConfig) -> int:
    _require(cfg, "model", "calib")
    out = _prepare_out_dir(cfg, "models")
    g = load_model(cfg.model)
    frames = [load_frame(p) for p in list_frames(cfg.calib)]
    stats = calibrate(g, frames, mode=cfg.mode, percentile=cfg.percentile)
    qm = quantize_model(g, stats)
    out_path = Path(cfg.out) if cfg.values.get("out") else out / "models" / "model.tyq"
    save_quantized(qm, out_path)
    src_size = Path(cfg.model).stat().st_size
    dst_size = out_path.stat().st_size
    summary = {
        "source": str(cfg.model),
        "output": str(out_path),
        "calibration_frames": stats.frame_count,
        "mode": cfg.mode,
        "source_bytes": src_size,
        "quantized_bytes": dst_size,
        "compression": round(src_size / dst_size, 3),
        "activation_tensors": len(qm.act_params),
    }
    (out / "models" / "quantize_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(
        f"quantize: {src_size} -> {dst_size} bytes "
        f"({summary['compression']}x) over {stats.frame_count} calibration frame(s)"
    )
    return EXIT_OK


def _label_dims_px(cfg: RunConfig) -> np.ndarray:
    """Ground-truth (w, h) pairs mapped to the network input resolution."""
    gts = _load_gt_dir(cfg.labels)
    sizes: dict[str, tuple[int, int]] = {}
    if cfg.values.get("images"):
        for p in list_frames(cfg.images):
            f = load_frame(p)
            sizes[f.source_id] = (f.width, f.height)
    fallback = tuple(cfg.frame_size or (640, 480))
    dims = []
    for fid, labels in gts.items():
        w, h = sizes.get(fid, fallback)
        scale = cfg.size / max(w, h)
        for b in labels:
            dims.append((b.w * w * scale, b.h * h * scale))
    if not dims:
        raise ConfigError("no labels found to fit anchors against")
    return np.array(dims, dtype=np.float32)


def _cmd_anchors(cfg: RunConfig) -> int:
    _require(cfg, "labels")
    out = _prepare_out_dir(cfg)
    dims = _label_dims_px(cfg)
    model = load_model(cfg.model) if cfg.values.get("model") else None
    current = _scaled_anchors(model, cfg.size) if model else default_anchors(cfg.size)

    report = anchor_fit(dims, current, cfg.ratio_threshold)
    print(
        f"anchors: {report.anchors_per_target:.2f} anchors/target, "
        f"{report.bpr:.3f} best possible recall (BPR)"
    )
    result = autoanchor(dims, current, bpr_keep=cfg.bpr_keep, seed=cfg.seed,
                        ratio_threshold=cfg.ratio_threshold)
    if result is current:
        print(f"anchors: current anchors fit the dataset (BPR >= {cfg.bpr_keep}), kept")
    else:
        new_report = anchor_fit(dims, result, cfg.ratio_threshold)
        print(f"anchors: recomputed (BPR {report.bpr:.3f} -> {new_report.bpr:.3f})")
    (out / "anchors.json").write_text(
        json.dumps({"anchors": result.anchors.tolist(), "strides": list(result.strides),
                    "bpr": anchor_fit(dims, result, cfg.ratio_threshold).bpr}, indent=2) + "\n"
    )
    if cfg.values.get("out"):
        if model is None:
            raise ConfigError("--out requires --model (anchors are written into a model file)")
        scale_back = model.input_size / cfg.size
        model.anchors = AnchorSet(result.anchors * scale_back, result.strides)
        save_model(model, cfg.out)
        print(f"anchors: wrote updated model -> {cfg.out}")
    return EXIT_OK


def _cmd_bench(cfg: RunConfig) -> int:
    _require(cfg, "model")
    out = _prepare_out_dir(cfg, "bench")
    model = load_any_model(cfg.model)
    size = cfg.size or model.input_size
    if cfg.values.get("pipeline"):
        _require(cfg, "images")
        frames = [load_frame(p) for p in list_frames(cfg.images)]
        stats = bench_pipeline(model, frames, conf_threshold=0.25, iou_threshold=0.45,
                               warmup=min(cfg.warmup, 5))
        name = f"pipeline_{size}"
    else:
        stats = bench_forward(model, size, runs=cfg.runs, warmup=cfg.warmup, seed=cfg.seed)
        name = f"forward_{size}"
    (out / "bench" / f"{name}.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    # fps is strictly 1000/avg; vendor FPS readings that disagree are not reproduced
    (out / "bench" / f"{name}.txt").write_text(stats.table_line() + "\n")
    print(f"bench[{name}]: {stats.table_line()}")
    return EXIT_OK


def _cmd_augment(cfg: RunConfig) -> int:
    _require(cfg, "images", "labels", "kind")
    out = _prepare_out_dir(cfg, "augmented")
    paths = list_frames(cfg.images)
    frames = [load_frame(p) for p in paths]
    labels = []
    for p in paths:
        lp = Path(cfg.labels) / f"{p.stem}.txt"
        labels.append(read_labels(lp) if lp.exists() else [])
    params = {}
    if cfg.values.get("angle") is not None:
        params["angle"] = cfg.angle
    if cfg.values.get("scale") is not None:
        params["scale"] = cfg.scale
    if cfg.kind == "mosaic4":
        params["size"] = cfg.size

    rng = np.random.default_rng(cfg.seed)
    need = 4 if cfg.kind == "mosaic4" else 1
    if len(frames) < need:
        raise ConfigError(f"{cfg.kind} needs at least {need} input frame(s)")
    for i in range(cfg.count):
        pick = rng.choice(len(frames), size=need, replace=len(frames) < need + 1)
        fset = [frames[j] for j in pick]
        lset = [labels[j] for j in pick]
        frame, new_labels = augment(fset, lset, cfg.kind, params, seed=int(rng.integers(2**31)))
        stem = f"{cfg.kind}_{i:04d}"
        save_frame(Frame(frame.width, frame.height, frame.pixels, stem), out / "augmented" / f"{stem}.png")
        write_labels(out / "augmented" / f"{stem}.txt", new_labels)
    print(f"augment: wrote {cfg.count} {cfg.kind} sample(s) -> {out / 'augmented'}")
    return EXIT_OK


def _cmd_split(cfg: RunConfig) -> int:
    if cfg.values.get("list_file"):
        items = [ln.strip() for ln in Path(cfg.list_file).read_text().splitlines() if ln.strip()]
    else:
        _require(cfg, "images")
        items = [p.stem for p in list_frames(cfg.images)]
    out = _prepare_out_dir(cfg, "splits")
    train, val = split_dataset(items, cfg.fraction, cfg.seed)
    (out / "splits" / "train.txt").write_text("\n".join(train) + "\n")
    (out / "splits" / "val.txt").write_text("\n".join(val) + "\n")
    print(f"split: {len(train)} train / {len(val)} val -> {out / 'splits'}")
    return EXIT_OK


def _cmd_optim_demo(cfg: RunConfig) -> int:
    out = _prepare_out_dir(cfg, "reports")
    curves = optimizer_comparison(steps=cfg.steps, seed=cfg.seed)
    names = sorted(curves)
    lines = ["step," + ",".join(names)]
    for i in range(len(curves[names[0]])):
        lines.append(f"{i}," + ",".join(f"{curves[n][i]:.8e}" for n in names))
    (out / "reports" / "optim_curves.csv").write_text("\n".join(lines) + "\n")
    finals = ", ".join(f"{n} {curves[n][-1]:.3e}" for n in names)
    print(f"optim-demo: final losses after {cfg.steps} steps: {finals}")
    return EXIT_OK


_COMMANDS = {
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "quantize": _cmd_quantize,
    "anchors": _cmd_anchors,
    "bench": _cmd_bench,
    "augment": _cmd_augment,
    "split": _cmd_split,
    "optim-demo": _cmd_optim_demo,
}


def dispatch(cfg: RunConfig) -> int:
    try:
        return _COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (ModelFormatError, ImageFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except Exception as e:  # noqa: BLE001 - map anything else to a stable code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    return dispatch(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
