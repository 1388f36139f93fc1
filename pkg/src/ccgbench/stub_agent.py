"""Line-protocol conformance stub, runnable as `python -m ccgbench.stub_agent`.

Speaks the external-agent protocol and plays a trivial strategy. Useful for
protocol conformance tests and as a template for wiring up real agents.

Strategies:
    first        lowest legal index (default)
    first-move   lowest legal non-pass index, else pass
    illegal      always replies 144 (protocol-violation testing)
    hang         never answers an act request (timeout testing)

--die-after N exits abruptly after N act replies (crash testing).
"""

from __future__ import annotations

import argparse
import json
import sys
import time


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stub_agent")
    parser.add_argument("--strategy", default="first", choices=["first", "first-move", "illegal", "hang"])
    parser.add_argument("--name", default="stub")
    parser.add_argument("--die-after", type=int, default=-1, metavar="N")
    args = parser.parse_args(argv)

    acted = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        kind = record.get("type")
        if kind == "hello":
            print(json.dumps({"type": "ready", "name": args.name}), flush=True)
        elif kind == "reset":
            continue
        elif kind == "act":
            if args.strategy == "hang":
                time.sleep(3600)
                return 0
            if 0 <= args.die_after <= acted:
                return 1
            mask = record["mask"]
            if args.strategy == "illegal":
                action = 144
            elif args.strategy == "first-move":
                action = next((i for i, b in enumerate(mask[1:], start=1) if b), 0)
            else:
                action = next(i for i, b in enumerate(mask) if b)
            acted += 1
            print(json.dumps({"action": action}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
