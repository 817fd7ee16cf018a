"""Serve a checkpoint over the wire protocol."""

from __future__ import annotations

import argparse

import uvicorn

from .model import load_model
from .server import create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mdm-bridge", description=__doc__)
    parser.add_argument("--model", required=True, help=".npz tiny checkpoint or HF directory")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8707)
    parser.add_argument("--device", default="cpu", help="device for HF checkpoints")
    parser.add_argument("--mask-id", type=int, default=None,
                        help="the checkpoint's own mask token id (HF checkpoints)")
    parser.add_argument("--max-batch", type=int, default=8)
    args = parser.parse_args(argv)

    model = load_model(args.model, mask_id=args.mask_id, device=args.device)
    app = create_app(model, max_batch=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
