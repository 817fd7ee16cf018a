"""Regenerate the golden request/response pair from the committed checkpoint.

The golden file freezes one request and the model's exact rows for it; the
conformance test replays the request over HTTP through the engine client and
compares within 1e-4 per entry.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mdm_bridge.model import TinyMaskedModel

HERE = os.path.dirname(__file__)
CHECKPOINT = os.path.join(HERE, "..", "data", "tiny_checkpoint.npz")
OUT = os.path.join(HERE, "..", "data", "golden_predict.json")

if __name__ == "__main__":
    model = TinyMaskedModel.load(CHECKPOINT)
    m = model.mask_id
    tokens = [3, m, 7, m, m, 0, m, 11]  # mixed observed/masked probe
    golden = {
        "request": {"tokens": tokens, "mask_id": m},
        "vocab_size": model.vocab_size,
        "probs": model.probs(tokens).tolist(),
    }
    with open(OUT, "w", encoding="utf-8") as fh:
        json.dump(golden, fh, indent=2)
        fh.write("\n")
    print(f"wrote {os.path.normpath(OUT)}")
