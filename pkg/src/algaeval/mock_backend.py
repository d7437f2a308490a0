"""Reference backend speaking the stdin/stdout wire protocol.

Used by the test-suite and handy as a template for wrapping a real model::

    python -m algaeval.mock_backend --mode baseline
    python -m algaeval.mock_backend --mode empty --sleep-ms 50
"""

import argparse
import json
import sys
import time


def _respond(req, mode):
    image_id = req.get("image_id", "")
    if mode == "empty":
        return {"image_id": image_id, "boxes": [], "scores": [], "classes": [], "num_detections": 0}
    if mode == "mismatch":
        return {"image_id": image_id, "boxes": [[0.1, 0.1, 0.2, 0.2]], "scores": [0.9, 0.8],
                "classes": [1], "num_detections": 1}
    if mode == "padded":
        # two real detections followed by padding rows, like fixed-size model outputs
        return {"image_id": image_id,
                "boxes": [[0.1, 0.1, 0.5, 0.4], [0.6, 0.6, 0.9, 0.9], [0, 0, 0, 0], [0, 0, 0, 0]],
                "scores": [0.9, 0.4, 0.0, 0.0], "classes": [1, 1, 1, 1], "num_detections": 2}
    from .baseline import detect
    from .imageio import read_image

    batch = detect(read_image(req["image_path"]), image_id=image_id)
    return batch.to_wire()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["empty", "baseline", "mismatch", "padded"], default="empty")
    ap.add_argument("--sleep-ms", type=float, default=0.0, help="service time added to every frame")
    ap.add_argument("--slow-frame", type=int, default=None, help="0-based index of one frame to delay")
    ap.add_argument("--slow-ms", type=float, default=0.0, help="extra delay for --slow-frame")
    ap.add_argument("--crash-after", type=int, default=None, help="exit with status 7 after N responses")
    ap.add_argument("--garbage-every", type=int, default=None, help="answer every Nth request with non-JSON")
    args = ap.parse_args(argv)

    served = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        if args.crash_after is not None and served >= args.crash_after:
            print("mock backend: simulated crash", file=sys.stderr)
            sys.exit(7)
        delay = args.sleep_ms + (args.slow_ms if served == args.slow_frame else 0.0)
        if delay:
            time.sleep(delay / 1000.0)
        served += 1
        if args.garbage_every and served % args.garbage_every == 0:
            sys.stdout.write("not json\n")
        else:
            try:
                resp = _respond(req, args.mode)
            except Exception as exc:  # keep serving; report on stderr
                print(f"mock backend: {exc}", file=sys.stderr)
                resp = {"image_id": req.get("image_id", ""), "error": str(exc)}
            sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
