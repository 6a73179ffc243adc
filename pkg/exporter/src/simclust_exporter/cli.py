"""CLI: export an image folder tree to a simclust embedding store.

    simclust-export --images DIR --out DIR [--model NAME] [--batch N]
                    [--weights pretrained|random] [--seed N]
"""

from __future__ import annotations

import argparse
import sys

from .export import DEFAULT_MODEL, MODEL_REGISTRY, ExportSpec, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simclust-export", description=__doc__)
    parser.add_argument("--images", required=True, help="root folder, one subfolder per class")
    parser.add_argument("--out", required=True, help="output directory for manifest + FVEC files")
    parser.add_argument("--model", default=DEFAULT_MODEL, choices=sorted(MODEL_REGISTRY))
    parser.add_argument("--batch", type=int, default=8)
    parser.add_argument("--weights", default="pretrained", choices=["pretrained", "random"],
                        help="'random' = seed-initialized weights for checkpoint-free environments")
    parser.add_argument("--seed", type=int, default=0, help="weight seed for --weights random")
    return parser


def main() -> None:
    args = build_parser().parse_args()
    try:
        spec = ExportSpec(
            images_root=args.images,
            output_dir=args.out,
            model_name=args.model,
            batch_size=args.batch,
            weights=args.weights,
            seed=args.seed,
        )
        manifest = export(spec)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)
    print(f"wrote {manifest}", file=sys.stderr)


if __name__ == "__main__":
    main()
