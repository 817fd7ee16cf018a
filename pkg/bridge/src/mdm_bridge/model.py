"""Model loading for the bridge.

Two loaders share one contract: ``probs(tokens)`` returns one probability row
per position over the engine's content ids 0..vocab_size-1 (softmax over the
non-mask vocabulary), with observed positions coerced to exact point masses,
the same rule the engine applies client-side.

The engine's id convention is content ids dense from 0 with the mask at
id == vocab_size; the bridge owns whatever remapping a real checkpoint needs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class TinyMaskedModel:
    """Small deterministic bidirectional predictor stored as an .npz file.

    Per position: x_i = embed[token_i] + pos[i]; a mean-pooled context vector
    feeds a tanh layer so observed tokens influence masked predictions.
    """

    embed: np.ndarray  # (vocab_size + 1, dim); last row is the mask embedding
    pos: np.ndarray  # (max_len, dim)
    w_token: np.ndarray  # (dim, hidden)
    w_context: np.ndarray  # (dim, hidden)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (hidden, vocab_size)
    b_out: np.ndarray  # (vocab_size,)

    @property
    def vocab_size(self) -> int:
        return self.w_out.shape[1]

    @property
    def mask_id(self) -> int:
        return self.vocab_size

    @property
    def max_len(self) -> int:
        return self.pos.shape[0]

    def probs(self, tokens: list[int]) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.ndim != 1 or len(ids) == 0:
            raise ValueError("tokens must be a non-empty vector")
        if len(ids) > self.max_len:
            raise ValueError(f"sequence length {len(ids)} exceeds max {self.max_len}")
        if ids.min() < 0 or ids.max() > self.mask_id:
            raise ValueError("token id outside the model vocabulary")
        x = self.embed[ids] + self.pos[: len(ids)]
        context = x.mean(axis=0, keepdims=True)
        hidden = np.tanh(x @ self.w_token + context @ self.w_context + self.b_hidden)
        logits = hidden @ self.w_out + self.b_out
        logits -= logits.max(axis=1, keepdims=True)
        rows = np.exp(logits)
        rows /= rows.sum(axis=1, keepdims=True)
        observed = ids != self.mask_id
        rows[observed] = 0.0
        rows[observed, ids[observed]] = 1.0
        return rows

    def probs_batch(self, batch: list[list[int]]) -> list[np.ndarray]:
        return [self.probs(tokens) for tokens in batch]

    @staticmethod
    def random_init(
        seed: int, vocab_size: int = 12, dim: int = 16, hidden: int = 24, max_len: int = 24
    ) -> "TinyMaskedModel":
        rng = np.random.default_rng(seed)
        scale = 0.6
        return TinyMaskedModel(
            embed=rng.normal(0, scale, (vocab_size + 1, dim)),
            pos=rng.normal(0, scale, (max_len, dim)),
            w_token=rng.normal(0, scale, (dim, hidden)),
            w_context=rng.normal(0, scale, (dim, hidden)),
            b_hidden=rng.normal(0, scale, hidden),
            w_out=rng.normal(0, scale, (hidden, vocab_size)),
            b_out=rng.normal(0, scale, vocab_size),
        )

    def save(self, path: str) -> None:
        np.savez(
            path,
            embed=self.embed,
            pos=self.pos,
            w_token=self.w_token,
            w_context=self.w_context,
            b_hidden=self.b_hidden,
            w_out=self.w_out,
            b_out=self.b_out,
        )

    @staticmethod
    def load(path: str) -> "TinyMaskedModel":
        data = np.load(path)
        return TinyMaskedModel(**{key: data[key] for key in data.files})


class HFMaskedModel:
    """Wraps a local transformers masked-LM checkpoint.

    The checkpoint's mask token sits anywhere in its id range; the bridge
    remaps so the engine sees dense content ids with the mask last.  Engine
    content id j corresponds to model id j when j < mask_model_id, else j+1.
    """

    def __init__(self, path: str, mask_model_id: int, device: str = "cpu", max_len: int = 512):
        import torch
        from transformers import AutoModelForMaskedLM

        self._torch = torch
        self.model = AutoModelForMaskedLM.from_pretrained(path).to(device).eval()
        self.device = device
        n = int(self.model.config.vocab_size)
        if not 0 <= mask_model_id < n:
            raise ValueError(f"mask id {mask_model_id} outside model vocab {n}")
        self.mask_model_id = mask_model_id
        self._content_ids = np.array(
            [i for i in range(n) if i != mask_model_id], dtype=np.int64
        )
        self.max_len = max_len

    @property
    def vocab_size(self) -> int:
        return len(self._content_ids)

    @property
    def mask_id(self) -> int:
        return self.vocab_size

    def _to_model_ids(self, tokens: list[int]) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.min() < 0 or ids.max() > self.mask_id:
            raise ValueError("token id outside the bridge vocabulary")
        return np.asarray(
            [self.mask_model_id if t == self.mask_id else int(self._content_ids[t]) for t in ids],
            dtype=np.int64,
        )

    def probs(self, tokens: list[int]) -> np.ndarray:
        if len(tokens) == 0:
            raise ValueError("tokens must be non-empty")
        if len(tokens) > self.max_len:
            raise ValueError(f"sequence length {len(tokens)} exceeds max {self.max_len}")
        return self.probs_batch([tokens])[0]

    def probs_batch(self, batch: list[list[int]]) -> list[np.ndarray]:
        torch = self._torch
        out = []
        with torch.no_grad():
            for tokens in batch:  # lengths may differ; run one at a time
                model_ids = self._to_model_ids(tokens)
                input_ids = torch.tensor(model_ids[None, :], device=self.device)
                logits = self.model(input_ids=input_ids).logits[0]
                content = logits[:, torch.tensor(self._content_ids, device=self.device)]
                rows = torch.softmax(content.double(), dim=-1).cpu().numpy()
                ids = np.asarray(tokens)
                observed = ids != self.mask_id
                rows[observed] = 0.0
                rows[observed, ids[observed]] = 1.0
                out.append(rows)
        return out


def load_model(path: str, mask_id: int | None = None, device: str = "cpu"):
    """Dispatch on the checkpoint format: .npz tiny model or HF directory."""
    if path.endswith(".npz"):
        return TinyMaskedModel.load(path)
    if os.path.isdir(path):
        if mask_id is None:
            raise ValueError("HF checkpoints need an explicit --mask-id (model id)")
        return HFMaskedModel(path, mask_model_id=mask_id, device=device)
    raise ValueError(f"unrecognized model path {path!r} (expected .npz or directory)")
