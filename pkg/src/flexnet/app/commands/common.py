"""
Shared command-line plumbing: common options, output emission and exit codes.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from ..utils.model_io import render_csv, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED_CHECK = 2
EXIT_REJECTED = 3


def add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="Base random seed")
    parser.add_argument("--out", type=Path, default=None, help="Output file (stdout when omitted)")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="Output format")
    parser.add_argument("--verbose", action="store_true", help="Enable verbose logging")


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.name + ".json")


def _dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, default=str)


def emit_json(args: argparse.Namespace, payload: Dict[str, Any]) -> None:
    if args.out is not None:
        write_json(args.out, payload)
        logger.info(f"Wrote {args.out}")
    else:
        sys.stdout.write(_dumps(payload) + "\n")


def emit_frame(args: argparse.Namespace, frame: pd.DataFrame, meta: Optional[Dict[str, Any]] = None) -> None:
    """Table as versioned CSV (meta in a JSON sidecar) or one JSON document"""
    if args.format == "json":
        payload: Dict[str, Any] = {"rows": json.loads(frame.to_json(orient="records"))}
        if meta is not None:
            payload["meta"] = meta
        emit_json(args, payload)
        return
    if args.out is not None:
        write_csv(args.out, frame)
        if meta is not None:
            write_json(sidecar_path(args.out), meta)
    else:
        sys.stdout.write(render_csv(frame))
        if meta is not None:
            logger.info(f"meta: {_dumps(meta)}")


def parse_assignments(text: str) -> Dict[str, float]:
    """'d1=0.5,d2=1' -> {'d1': 0.5, 'd2': 1.0}"""
    out: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected id=rate, got {item!r}")
        out[key.strip()] = float(value)
    return out


def parse_floats(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def parse_ints(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]
