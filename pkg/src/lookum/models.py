"""Model backends: the exact enumeration oracle, wrappers, and the HTTP client.

A backend maps a SequenceState to a PredictiveField.  Backends must be
deterministic and safe for concurrent predict calls; every implementation here
is stateless apart from read-only parameters and an optional memo table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import requests

from .core import PredictiveField, SequenceState, Vocabulary, masked_indices
from .errors import OracleError, ProtocolError, TransportError


@runtime_checkable
class ModelBackend(Protocol):
    """Contract every decoder consumes: a vocabulary plus a predict function.

    Rows at observed (non-masked) positions must be point masses on the
    observed token; the same state must always yield the same field.
    """

    vocab: Vocabulary

    def predict(self, state: SequenceState) -> PredictiveField:
        ...


class OracleSupport:
    """Explicit weighted set of valid complete sequences.

    Duplicate sequences are aggregated by summing their weights.  The arrays
    are kept read-only so a support can back many concurrent backends.
    """

    def __init__(
        self,
        sequences: Sequence[Sequence[int]],
        weights: Sequence[float] | None = None,
    ) -> None:
        if len(sequences) == 0:
            raise OracleError("support must contain at least one sequence")
        seqs = np.asarray(sequences, dtype=np.int64)
        if seqs.ndim != 2:
            raise OracleError("support sequences must share one length")
        if weights is None:
            w = np.ones(seqs.shape[0], dtype=np.float64)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (seqs.shape[0],):
                raise OracleError("one weight per sequence required")
        if not np.all(w > 0):
            raise OracleError("support weights must be strictly positive")
        uniq, inverse = np.unique(seqs, axis=0, return_inverse=True)
        agg = np.zeros(uniq.shape[0], dtype=np.float64)
        np.add.at(agg, inverse, w)
        self.sequences = uniq
        self.weights = agg
        self.sequences.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.sequences.shape[0])

    @property
    def length(self) -> int:
        return int(self.sequences.shape[1])

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def as_tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(t) for t in row) for row in self.sequences]

    def consistent_mask(self, tokens: Sequence[int], mask_id: int) -> np.ndarray:
        """Boolean row mask of sequences matching every observed token."""
        obs = [(i, t) for i, t in enumerate(tokens) if t != mask_id]
        if not obs:
            return np.ones(self.size, dtype=bool)
        idx = np.fromiter((i for i, _ in obs), dtype=np.intp)
        vals = np.fromiter((t for _, t in obs), dtype=np.int64)
        return (self.sequences[:, idx] == vals).all(axis=1)

    def filtered(self, tokens: Sequence[int], mask_id: int) -> "OracleSupport":
        """Sub-support consistent with the observed tokens of ``tokens``."""
        mask = self.consistent_mask(tokens, mask_id)
        if not mask.any():
            raise OracleError("no support sequence is consistent with the state")
        return OracleSupport(self.sequences[mask], self.weights[mask])


def oracle_predict(
    support: OracleSupport, state: SequenceState, vocab: Vocabulary
) -> PredictiveField:
    """Exact masked predictor for an enumerable support.

    For a masked position i, p(v) is proportional to the total weight of
    support sequences that match every observed token and carry v at i.
    Observed positions get a point mass on the observed token.  When no
    support sequence is consistent with the observed tokens, every masked row
    falls back to uniform and the field is flagged off-support, so decoding
    can continue past a local error.
    """
    if len(state.tokens) != support.length:
        raise OracleError(
            f"state length {len(state.tokens)} != support length {support.length}"
        )
    v = vocab.size
    rows = np.zeros((support.length, v), dtype=np.float64)
    consistent = support.consistent_mask(state.tokens, vocab.mask_id)
    off_support = not bool(consistent.any())
    masked = masked_indices(state.tokens, vocab.mask_id)
    if off_support:
        for i in masked:
            rows[i, :] = 1.0 / v
    else:
        seqs = support.sequences[consistent]
        w = support.weights[consistent]
        total = w.sum()
        for i in masked:
            counts = np.bincount(seqs[:, i], weights=w, minlength=v)
            rows[i, :] = counts / total
    for i, tok in enumerate(state.tokens):
        if tok != vocab.mask_id:
            if not vocab.is_content(tok):
                raise OracleError(f"token {tok} at position {i} outside vocabulary")
            rows[i, tok] = 1.0
    return PredictiveField(rows, off_support=off_support)


@dataclass
class OracleBackend:
    """ModelBackend view of an OracleSupport; optionally memoizes fields."""

    vocab: Vocabulary
    support: OracleSupport
    memoize: bool = True
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.support.sequences.min(initial=0) < 0 or self.support.sequences.max(
            initial=0
        ) >= self.vocab.size:
            raise OracleError("support contains tokens outside the content vocabulary")

    def predict(self, state: SequenceState) -> PredictiveField:
        if not self.memoize:
            return oracle_predict(self.support, state, self.vocab)
        cached = self._memo.get(state.tokens)
        if cached is None:
            cached = oracle_predict(self.support, state, self.vocab)
            self._memo[state.tokens] = cached
        return cached


@dataclass
class TemperatureBackend:
    """Sharpens or flattens masked rows: p -> p**(1/tau), renormalized."""

    inner: ModelBackend
    tau: float

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        self.vocab = self.inner.vocab

    def predict(self, state: SequenceState) -> PredictiveField:
        base = self.inner.predict(state)
        if self.tau == 1.0:
            return base
        rows = np.array(base.rows, copy=True)
        masked = masked_indices(state.tokens, self.vocab.mask_id)
        if masked:
            idx = list(masked)
            sub = rows[idx]
            # log-space to survive extreme tau; zero entries stay zero
            with np.errstate(divide="ignore"):
                logp = np.log(sub)
            logp = (logp - logp.max(axis=1, keepdims=True)) / self.tau
            sub = np.exp(logp)
            rows[idx] = sub / sub.sum(axis=1, keepdims=True)
        return PredictiveField(rows, off_support=base.off_support)


@dataclass
class NoiseBackend:
    """Mixes masked rows with the uniform distribution: (1-eps)*p + eps*u."""

    inner: ModelBackend
    eps: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"noise level must lie in [0, 1], got {self.eps}")
        self.vocab = self.inner.vocab

    def predict(self, state: SequenceState) -> PredictiveField:
        base = self.inner.predict(state)
        if self.eps == 0.0:
            return base
        rows = np.array(base.rows, copy=True)
        masked = masked_indices(state.tokens, self.vocab.mask_id)
        if masked:
            idx = list(masked)
            rows[idx] = (1.0 - self.eps) * rows[idx] + self.eps / self.vocab.size
        return PredictiveField(rows, off_support=base.off_support)


def temperature_wrap(backend: ModelBackend, tau: float) -> TemperatureBackend:
    return TemperatureBackend(backend, tau)


def noise_wrap(backend: ModelBackend, eps: float) -> NoiseBackend:
    return NoiseBackend(backend, eps)


class CountingBackend:
    """Pass-through wrapper counting predict calls (complexity accounting)."""

    def __init__(self, inner: ModelBackend) -> None:
        self.inner = inner
        self.vocab = inner.vocab
        self.calls = 0

    def predict(self, state: SequenceState) -> PredictiveField:
        self.calls += 1
        return self.inner.predict(state)


@dataclass(frozen=True)
class RemoteModelConfig:
    """Connection settings for a server speaking the wire protocol."""

    endpoint: str
    timeout: float = 10.0
    retries: int = 2
    batch_size: int = 4  # max in-flight requests for predict_many

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# Row-sum slack accepted from a remote server before renormalizing; beyond
# REJECT_TOLERANCE the server is considered broken and the row is rejected.
REMOTE_ROW_TOLERANCE = 1e-4
REMOTE_REJECT_TOLERANCE = 1e-2


class RemoteBackend:
    """Client for the HTTP wire protocol.

    POST {endpoint}/v1/predict with {"tokens": [...], "mask_id": m} returns
    {"probs": [[...]; L]} over content ids 0..vocab_size-1.  The health
    endpoint advertises vocab_size and mask_id; this engine requires
    mask_id == vocab_size (content ids dense from 0), which a bridge that
    remaps model ids must guarantee.
    """

    def __init__(
        self,
        config: RemoteModelConfig,
        vocab: Vocabulary | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.config = config
        self._session = session or requests.Session()
        if vocab is None:
            info = self.health()
            if info.get("mask_id") != info.get("vocab_size"):
                raise ProtocolError(
                    "server must advertise mask_id == vocab_size "
                    f"(got {info.get('mask_id')} vs {info.get('vocab_size')})"
                )
            vocab = Vocabulary(size=int(info["vocab_size"]))
        self.vocab = vocab

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        last: Exception | None = None
        for _ in range(self.config.retries + 1):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.config.timeout)
                else:
                    resp = self._session.post(
                        url, json=payload, timeout=self.config.timeout
                    )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = exc
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"{method} {path} returned HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response from {path}") from exc
        raise TransportError(
            f"{url} unreachable after {self.config.retries + 1} attempts"
        ) from last

    def health(self) -> dict:
        info = self._request("GET", "/v1/health")
        if info.get("status") != "ok":
            raise ProtocolError(f"health check failed: {info}")
        return info

    def predict(self, state: SequenceState) -> PredictiveField:
        payload = {"tokens": list(state.tokens), "mask_id": self.vocab.mask_id}
        body = self._request("POST", "/v1/predict", payload)
        return self._parse_field(body, state)

    def predict_many(self, states: Sequence[SequenceState]) -> list[PredictiveField]:
        """Pipeline up to batch_size concurrent requests, preserving order."""
        if len(states) <= 1 or self.config.batch_size == 1:
            return [self.predict(s) for s in states]
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=self.config.batch_size) as pool:
            return list(pool.map(self.predict, states))

    def _parse_field(self, body: dict, state: SequenceState) -> PredictiveField:
        probs = body.get("probs")
        if not isinstance(probs, list) or len(probs) != len(state.tokens):
            got = len(probs) if isinstance(probs, list) else type(probs).__name__
            raise ProtocolError(
                f"expected {len(state.tokens)} probability rows, got {got}"
            )
        try:
            rows = np.asarray(probs, dtype=np.float64)
        except ValueError as exc:
            raise ProtocolError("ragged or non-numeric probability rows") from exc
        if rows.ndim != 2 or rows.shape[1] != self.vocab.size:
            raise ProtocolError(
                f"rows must have {self.vocab.size} entries, got shape {rows.shape}"
            )
        if not np.all(np.isfinite(rows)) or rows.min() < -1e-9:
            raise ProtocolError("non-finite or negative probabilities")
        rows = np.where(rows < 0, 0.0, rows)
        sums = rows.sum(axis=1)
        if np.abs(sums - 1.0).max() > REMOTE_REJECT_TOLERANCE:
            i = int(np.argmax(np.abs(sums - 1.0)))
            raise ProtocolError(
                f"row {i} sums to {sums[i]:.6f}; server normalization is broken"
            )
        rows = rows / sums[:, None]
        for i, tok in enumerate(state.tokens):
            if tok != self.vocab.mask_id:  # coerce observed rows to point masses
                rows[i, :] = 0.0
                rows[i, tok] = 1.0
        return PredictiveField(rows)


def remote_predict(config: RemoteModelConfig, state: SequenceState) -> PredictiveField:
    """One-shot convenience wrapper around RemoteBackend.predict."""
    return RemoteBackend(config).predict(state)
