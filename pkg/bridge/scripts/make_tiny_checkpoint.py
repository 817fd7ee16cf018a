"""Regenerate the committed tiny checkpoint (fixed seed, so byte-stable)."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mdm_bridge.model import TinyMaskedModel

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "tiny_checkpoint.npz")

if __name__ == "__main__":
    model = TinyMaskedModel.random_init(seed=7)
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    model.save(OUT)
    print(f"wrote {os.path.normpath(OUT)} "
          f"(vocab={model.vocab_size}, mask={model.mask_id}, max_len={model.max_len})")
