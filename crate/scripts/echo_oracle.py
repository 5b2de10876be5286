#!/usr/bin/env python3
"""Minimal subprocess oracle: predicts from the sum of numeric cells.

Usage: echo_oracle.py [classification|regression]
"""
import json
import math
import sys

task = sys.argv[1] if len(sys.argv) > 1 else "regression"
print(json.dumps({"protocol": "lmte-oracle/1", "task": task}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    sums = [sum(c for c in row if isinstance(c, (int, float))) for row in req["rows"]]
    if task == "classification":
        probs = [1.0 / (1.0 + math.exp(-s)) for s in sums]
        reply = {"id": req["id"], "preds": [float(p >= 0.5) for p in probs], "probs": probs}
    else:
        reply = {"id": req["id"], "preds": sums}
    print(json.dumps(reply), flush=True)
