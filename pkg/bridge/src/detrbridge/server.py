"""JSON-lines request loop over stdin/stdout.

Handshake: -> {"op":"hello"}
           <- {"op":"hello","name",...,"supports_attention":true}
Detect:    -> {"op":"detect","id",...}
           <- {"op":"result","id","detections",...} or {"op":"error",...}

Single-flight: one request at a time, loop until EOF. Model exceptions
turn into error replies; the bridge stays alive.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from .model import BridgeConfig, DetrBackend
from .tensorio import write_tensor_file


def serve(backend: DetrBackend, stdin, stdout, workdir: str) -> None:
    os.makedirs(workdir, exist_ok=True)
    counter = 0
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            _send(stdout, {"op": "error", "id": -1,
                           "message": f"malformed request: {e}"})
            continue
        req_id = msg.get("id", -1)
        try:
            op = msg.get("op")
            if op == "hello":
                hk, wk = backend.key_grid
                s = backend.cfg.input_size
                _send(stdout, {"op": "hello", "name": backend.cfg.model,
                               "input_size": [s, s], "key_grid": [hk, wk],
                               "supports_attention": True})
            elif op == "detect":
                result = backend.run(msg["image"], msg.get("crop"))
                attention_file = None
                if msg.get("return_attention"):
                    counter += 1
                    attention_file = os.path.join(workdir,
                                                  f"attn_{counter:06d}.bin")
                    write_tensor_file(attention_file, result.attention,
                                      result.key_grid)
                _send(stdout, {"op": "result", "id": req_id,
                               "detections": result.detections,
                               "attention_file": attention_file,
                               "latency_ms": result.latency_ms})
            else:
                _send(stdout, {"op": "error", "id": req_id,
                               "message": f"unknown op {op!r}"})
        except Exception as e:  # keep serving after model failures
            _send(stdout, {"op": "error", "id": req_id, "message": str(e)})


def _send(stdout, msg: dict) -> None:
    stdout.write(json.dumps(msg) + "\n")
    stdout.flush()


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="detrbridge")
    p.add_argument("--model", default="tiny-random")
    p.add_argument("--input-size", type=int, default=160)
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-threshold", type=float, default=0.05)
    p.add_argument("--workdir", default=None,
                   help="directory for attention tensor files")
    args = p.parse_args(argv)
    cfg = BridgeConfig(model=args.model, input_size=args.input_size,
                       device=args.device, seed=args.seed,
                       score_threshold=args.score_threshold)
    try:
        backend = DetrBackend(cfg)
    except Exception as e:
        print(f"error: model load failed: {e}", file=sys.stderr)
        return 1
    workdir = args.workdir or tempfile.mkdtemp(prefix="detrbridge_")
    serve(backend, sys.stdin, sys.stdout, workdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
