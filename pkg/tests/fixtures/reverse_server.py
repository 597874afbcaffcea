"""Collects ``k`` requests, then answers them in reverse order with ``y = z[0]``."""

import json
import sys

k = int(sys.argv[1])
pending = []
for line in sys.stdin:
    if not line.strip():
        break
    pending.append(json.loads(line))
    if len(pending) == k:
        for msg in reversed(pending):
            print(json.dumps({"id": msg["id"], "y": msg["z"][0]}), flush=True)
        pending = []
