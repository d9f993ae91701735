"""Line-protocol scorer: each document scores its token count.

With ``--short`` it drops the last score, to exercise length checks.
"""

import json
import sys

short = "--short" in sys.argv
for line in sys.stdin:
    req = json.loads(line)
    scores = [len(d["text"].split()) for d in req["docs"]]
    if short:
        scores = scores[:-1]
    print(json.dumps({"scores": scores}), flush=True)
