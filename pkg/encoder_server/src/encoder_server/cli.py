"""Command line entry point: load a checkpoint, serve the endpoints."""

from __future__ import annotations

import argparse
import sys

from .backend import DEFAULT_TEMPLATE, ClipBackend


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ir-encoder-server",
        description="embedding service backed by a CLIP checkpoint",
    )
    p.add_argument("--model", default="openai/clip-vit-large-patch14",
                   help="hub id or local checkpoint path")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--device", default="cpu", help="torch device, e.g. cpu or cuda:0")
    p.add_argument("--template", default=DEFAULT_TEMPLATE,
                   help="class prompt template; must contain {label}")
    p.add_argument("--adapted", action="store_true",
                   help="mark the weights as task-adapted rather than stock "
                        "(recorded in /info and downstream sweep metadata)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if "{label}" not in args.template:
        # checked before the checkpoint load so a typo fails in milliseconds
        print(f"config error: template must contain '{{label}}', "
              f"got {args.template!r}", file=sys.stderr)
        return 1
    try:
        backend = ClipBackend.from_pretrained(
            args.model, device=args.device, template=args.template,
            adapted=args.adapted,
        )
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - loading failures all land here
        print(f"could not load {args.model!r}: {e}", file=sys.stderr)
        return 2

    from .app import create_app

    import uvicorn

    print(f"serving {backend.model_name} (dim {backend.feature_dim}) "
          f"on {args.host}:{args.port}")
    uvicorn.run(create_app(backend), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
