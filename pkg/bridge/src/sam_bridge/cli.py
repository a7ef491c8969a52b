"""Command line entry point: pick a model, bind an address, serve."""

import argparse
import logging
import os
import sys

from sam_bridge.server import serve

MODEL_ENV = "SAM_MODEL_PATH"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sam-bridge",
        description="HTTP segmentation service speaking the /segment protocol.",
    )
    parser.add_argument(
        "--model",
        default=os.environ.get(MODEL_ENV, ""),
        help=f"model checkpoint path, or 'builtin' (default ${MODEL_ENV} or builtin)",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8760)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        serve(args.model, args.host, args.port)
    except KeyboardInterrupt:
        pass
    except (RuntimeError, OSError) as exc:
        print(f"sam-bridge: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
