"""Command line for one-shot feature exports."""

import argparse
import sys

from .backbones import SPECS, SetupError
from .featwrite import WriteError
from .runner import InputError, export


def _parser():
    parser = argparse.ArgumentParser(
        prog="leafexport",
        description="Run a CNN backbone over an image tree and write a "
        "FEATMAT1 feature matrix plus the matching labels CSV.",
    )
    parser.add_argument(
        "--backbone", required=True, choices=sorted(SPECS), help="feature source"
    )
    parser.add_argument("--images", required=True, help="root of the image tree")
    parser.add_argument("--out", required=True, help="output .featmat path")
    parser.add_argument("--labels", required=True, help="output labels CSV path")
    parser.add_argument(
        "--weights",
        choices=("pretrained", "random"),
        default="pretrained",
        help="pretrained weights, or seeded random initialization",
    )
    parser.add_argument(
        "--weights-file", help="state-dict file (required for pretrained darknet53-gap)"
    )
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0, help="random-weights seed")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        result = export(
            args.images,
            args.backbone,
            args.out,
            args.labels,
            weights=args.weights,
            weights_file=args.weights_file,
            batch_size=args.batch_size,
            seed=args.seed,
            device=args.device,
        )
    except (SetupError, InputError, WriteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.rows}x{result.dim} features to {args.out}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} unreadable images", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
