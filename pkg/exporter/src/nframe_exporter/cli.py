"""Command-line exporter: zoo model (or local checkpoint) -> nframe bundle."""

import argparse
import json
import sys

from .export import ExportError, ExportSpec, export_bundle
from .zoo import ZOO_SPECS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nframe-export",
        description="Convert a torchvision model into an nframe ONNX bundle "
        "with tap tensors promoted to graph outputs.",
    )
    parser.add_argument("--model", required=True, help=f"zoo name: {sorted(ZOO_SPECS)}")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--weights", help="optional checkpoint file (state_dict)")
    parser.add_argument("--accuracy", type=float, help="top-1 accuracy to record")
    parser.add_argument("--input-size", type=int, default=None)
    parser.add_argument("--name", help="bundle name (defaults to the model id)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    input_size = args.input_size or ZOO_SPECS.get(args.model, {}).get("input_size", 224)
    spec = ExportSpec(
        model=args.model,
        input_size=input_size,
        top1_accuracy=args.accuracy,
        weights_file=args.weights,
        extra={"name": args.name} if args.name else {},
    )
    try:
        out = export_bundle(spec, args.out)
    except ExportError as exc:
        print(json.dumps({"error": {"type": "ExportError", "message": str(exc)}}),
              file=sys.stderr)
        return 1
    print(f"exported {args.model} -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
