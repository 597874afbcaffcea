"""Misbehaving server: ``bad_server.py range|garbage|die|hang|unknown_id``."""

import json
import sys
import time

mode = sys.argv[1]
for line in sys.stdin:
    if not line.strip():
        break
    msg = json.loads(line)
    if mode == "range":
        print(json.dumps({"id": msg["id"], "y": 1.5}), flush=True)
    elif mode == "garbage":
        print("not json", flush=True)
    elif mode == "die":
        sys.exit(3)
    elif mode == "hang":
        time.sleep(60)
    elif mode == "unknown_id":
        print(json.dumps({"id": msg["id"] + 10**6, "y": 0.5}), flush=True)
