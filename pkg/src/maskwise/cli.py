"""Command line front end.

Each subcommand maps onto one library entry point: ``segment``, ``edit``,
``explain``, ``robustness``, ``train-mnist`` and ``serve``. Every JSON
artifact embeds a ``provenance`` block (command, package version, resolved
arguments) so a run can be reproduced from its outputs alone, and files are
written with sorted keys so identical runs produce identical bytes.

Exit codes: 0 success, 2 bad usage or unreadable input, 3 predictor
failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .digits import ensure_dataset, load_any_dataset
from .editor import apply_edits, edit_spec_to_json, parse_edit_spec
from .errors import (
    MaskwiseError,
    NonFiniteLoss,
    NonFiniteOutput,
    ProtocolViolation,
    RemoteUnavailable,
    SingularSystem,
    SolverDiverged,
)
from .explainer import (
    ExplainConfig,
    compare_predictions,
    explain,
    render_overlay,
    trinary_mask,
)
from .imgcore import ImageTensor, decode_image, decode_mask, encode_png, encode_trinary_png
from .predictor import (
    TrainConfig,
    parse_predictor_spec,
    predict_batch,
    save_predictor,
    train_builtin_mlp,
)
from .robustness import SweepConfig, records_to_csv, run_sweep
from .segmentation import SegmentationConfig, auto_segment, segment, suggest_counts

_SOLVER_ERRORS = (SolverDiverged, SingularSystem)
_PREDICTOR_ERRORS = (RemoteUnavailable, ProtocolViolation, NonFiniteOutput, NonFiniteLoss)
_INPUT_ERRORS = (MaskwiseError, ValueError, KeyError, OSError)


def _read_image(path: str) -> ImageTensor:
    return decode_image(Path(path).read_bytes())


def _read_mask(path: str, img: ImageTensor):
    return decode_mask(Path(path).read_bytes(), (img.height, img.width))


def _provenance(args: argparse.Namespace) -> dict:
    echo = {k: v for k, v in vars(args).items()
            if not k.startswith("_") and k not in ("func", "json")}
    return {"command": args._command, "version": __version__, "arguments": echo}


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _seg_config(args: argparse.Namespace, inner_k: int, outer_k: int) -> SegmentationConfig:
    return SegmentationConfig(inner_k, outer_k,
                              spatial_weight=args.spatial_weight, seed=args.seed)


def cmd_segment(args: argparse.Namespace) -> dict:
    img = _read_image(args.image)
    if args.mask:
        mask = _read_mask(args.mask, img)
        inner_k, outer_k = suggest_counts(mask, args.total_k)
        spmap = segment(img, mask, _seg_config(args, inner_k, outer_k))
    else:
        inner_k, outer_k = 0, args.total_k
        spmap = auto_segment(img, args.total_k, _seg_config(args, 1, 0))
    out = _out_dir(args)
    (out / "labels.png").write_bytes(spmap.to_label_png())
    _write_json(out / "segmentation.json", {
        "provenance": _provenance(args),
        "inner_k": inner_k,
        "outer_k": outer_k,
        "superpixels": spmap.to_json_dict(),
    })
    return {"out": str(out), "num_superpixels": spmap.num_superpixels,
            "inner_k": inner_k, "outer_k": outer_k,
            "files": ["labels.png", "segmentation.json"]}


def cmd_explain(args: argparse.Namespace) -> dict:
    img = _read_image(args.image)
    predictor = parse_predictor_spec(args.predictor)
    if args.mask:
        mask = _read_mask(args.mask, img)
        spmap = segment(img, mask, _seg_config(args, args.inner_k, args.outer_k))
    else:
        spmap = auto_segment(img, args.inner_k + args.outer_k, _seg_config(args, 1, 0))
    cfg = ExplainConfig(num_samples=args.samples, num_features=args.features,
                        kernel_width=args.kernel_width, ridge_alpha=args.alpha,
                        occlusion=args.occlusion, target_class=args.target,
                        distance_mode=args.distance, seed=args.seed)
    result = explain(img, spmap, predictor, cfg)
    out = _out_dir(args)
    (out / "overlay.png").write_bytes(encode_png(render_overlay(img, spmap, result)))
    (out / "trinary.png").write_bytes(encode_trinary_png(trinary_mask(spmap, result)))
    _write_json(out / "explanation.json", {
        "provenance": _provenance(args),
        "explanation": result.to_json_dict(spmap),
        "segmentation": {
            "num_superpixels": spmap.num_superpixels,
            "inner_labels": sorted(spmap.inner_labels),
        },
    })
    return {"out": str(out), "target_class": result.target_class,
            "picked": list(result.picked), "r2": result.r2,
            "files": ["explanation.json", "overlay.png", "trinary.png"]}


def cmd_edit(args: argparse.Namespace) -> dict:
    img = _read_image(args.image)
    mask = _read_mask(args.mask, img)
    spec_items = json.loads(Path(args.spec).read_text())
    if isinstance(spec_items, dict):
        spec_items = spec_items["edits"]
    ops = parse_edit_spec(spec_items)
    result = apply_edits(img, mask, ops)
    out = _out_dir(args)
    (out / "edited.png").write_bytes(encode_png(result.image))
    comparison = None
    if args.predictor:
        predictor = parse_predictor_spec(args.predictor)
        before, after = predict_batch(predictor, [img, result.image])
        comparison = compare_predictions(before, after)
    _write_json(out / "report.json", {
        "provenance": _provenance(args),
        "edits": edit_spec_to_json(ops),
        "inpainted_pixels": result.inpainted_pixels,
        "comparison": comparison,
    })
    return {"out": str(out), "inpainted_pixels": result.inpainted_pixels,
            "num_edits": len(ops), "files": ["edited.png", "report.json"]}


def cmd_robustness(args: argparse.Namespace) -> dict:
    sigmas = tuple(float(s) for s in args.sigmas.split(","))
    train, test = load_any_dataset(args.dataset)
    cfg = SweepConfig(sigmas=sigmas, total_k=args.total_k,
                      num_samples=args.samples, seed=args.seed)
    train_metrics = None
    if args.predictor:
        predictor = parse_predictor_spec(args.predictor)
    else:
        predictor, train_metrics = train_builtin_mlp(train, TrainConfig(seed=args.seed),
                                                     test=test)
    xs = np.asarray(test[0], dtype=np.float64)[: args.count]
    if len(xs) < args.count:
        raise ValueError(f"dataset has only {len(xs)} test images, need {args.count}")
    images = [ImageTensor(x[:, :, None] if x.ndim == 2 else x) for x in xs]
    records, summary = run_sweep(images, predictor, cfg, jobs=args.jobs)
    out = _out_dir(args)
    (out / "records.csv").write_text(records_to_csv(records))
    _write_json(out / "summary.json", {
        "provenance": _provenance(args),
        "summary": summary,
        "train_metrics": train_metrics,
    })
    if not args.json:
        for method in sorted(summary):
            per_sigma = summary[method]
            cells = ", ".join(f"{s}: {per_sigma[s]['mean']:.3f}"
                              for s in sorted(per_sigma, key=float))
            print(f"{method:>7} mean distance by sigma | {cells}")
    return {"out": str(out), "num_records": len(records), "summary": summary,
            "train_metrics": train_metrics, "files": ["records.csv", "summary.json"]}


def cmd_train(args: argparse.Namespace) -> dict:
    train, test = ensure_dataset(args.data)
    hyper = TrainConfig(epochs=args.epochs, seed=args.seed)
    predictor, metrics = train_builtin_mlp(train, hyper, test=test)
    save_predictor(predictor, args.out)
    if not args.json:
        print(f"test accuracy: {metrics['test_accuracy']:.4f}")
    return {"out": args.out, **metrics}


def cmd_serve(args: argparse.Namespace) -> None:
    # imported lazily; the other subcommands should not pay for fastapi
    import uvicorn

    from .service import create_app

    predictor = parse_predictor_spec(args.predictor)
    static = args.static
    if static is None:
        bundled = Path(__file__).parent / "static"
        static = str(bundled) if bundled.is_dir() else None
    app = create_app(predictor, static_dir=static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return None


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--json", action="store_true",
                     help="print a machine-readable result to stdout")
    sub.add_argument("--seed", type=int, default=0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskwise",
        description="Interactive region-based explanations for image classifiers.")
    parser.add_argument("--version", action="version", version=f"maskwise {__version__}")
    subs = parser.add_subparsers(dest="_command", required=True, metavar="COMMAND")

    p = subs.add_parser("segment", help="cluster an image into superpixels")
    p.add_argument("--image", required=True, help="input image (PNG/JPEG/BMP)")
    p.add_argument("--mask", help="region mask PNG; omitted means unconstrained clustering")
    p.add_argument("--total-k", type=int, default=15,
                   help="superpixel budget, split by mask area when a mask is given")
    p.add_argument("--spatial-weight", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = subs.add_parser("explain", help="segment, perturb and fit a surrogate")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", help="region mask PNG; omitted means unconstrained clustering")
    p.add_argument("--inner-k", type=int, default=5)
    p.add_argument("--outer-k", type=int, default=10)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--features", type=int, default=5,
                   help="how many superpixels the explanation keeps")
    p.add_argument("--kernel-width", type=float, default=0.25)
    p.add_argument("--alpha", type=float, default=1.0, help="ridge regularizer")
    p.add_argument("--occlusion", choices=("mean-color", "constant-gray"),
                   default="mean-color")
    p.add_argument("--distance", choices=("class", "vector"), default="class")
    p.add_argument("--target", type=int, default=None,
                   help="class index to explain (default: the predicted class)")
    p.add_argument("--spatial-weight", type=float, default=1.0)
    p.add_argument("--predictor", required=True,
                   help="mlp:FILE | linear:FILE | uniform:C@HxWxC | remote:URL@HxWxC")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_explain)

    p = subs.add_parser("edit", help="apply semantic edits to a masked region")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--spec", required=True, help="JSON list of edit operations")
    p.add_argument("--predictor",
                   help="when given, report.json compares predictions before/after")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_edit)

    p = subs.add_parser("robustness",
                        help="compare explanation drift under noise, masked vs auto")
    p.add_argument("--dataset", required=True,
                   help="IDX digit files or a PNG directory with labels.csv")
    p.add_argument("--sigmas", default="0,0.2,0.4,0.6,0.8",
                   help="comma-separated noise levels, ascending, starting at 0")
    p.add_argument("--count", type=int, default=10, help="how many test images to sweep")
    p.add_argument("--samples", type=int, default=SweepConfig.num_samples)
    p.add_argument("--total-k", type=int, default=SweepConfig.total_k)
    p.add_argument("--predictor",
                   help="predictor spec; omitted trains the builtin MLP on the train split")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_robustness)

    p = subs.add_parser("train-mnist", help="train the builtin MLP on a digit dataset")
    p.add_argument("--data", required=True,
                   help="dataset directory; synthesized there when empty")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--out", required=True, help="model file to write")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--predictor", required=True)
    p.add_argument("--static", help="directory with the web UI bundle")
    _add_common(p)
    p.set_defaults(func=cmd_serve)
    return parser


def _fail(args: argparse.Namespace, err: Exception, code: int) -> int:
    kind = getattr(err, "code", None)
    if kind is None:
        kind = "io_error" if isinstance(err, OSError) else "bad_input"
    if getattr(args, "json", False):
        print(json.dumps({"code": kind, "error": str(err)}, sort_keys=True))
    print(f"maskwise: error: {err}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        payload = args.func(args)
    except _SOLVER_ERRORS as err:
        return _fail(args, err, 4)
    except _PREDICTOR_ERRORS as err:
        return _fail(args, err, 3)
    except _INPUT_ERRORS as err:
        return _fail(args, err, 2)
    if args.json and payload is not None:
        print(json.dumps(payload, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
