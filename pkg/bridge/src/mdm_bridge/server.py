"""FastAPI app implementing the wire protocol.

POST /v1/predict  {"tokens": [int; L], "mask_id": int} -> {"probs": [[float; V]; L]}
GET  /v1/health   -> {"status": "ok", "vocab_size": V, "mask_id": V}

Requests are stateless; concurrent requests are funneled through an asyncio
micro-batching queue that runs the model on up to ``max_batch`` sequences at
a time while preserving per-request pairing.
"""

from __future__ import annotations

import asyncio
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field


class PredictRequest(BaseModel):
    tokens: list[int] = Field(min_length=1)
    mask_id: int


class _Batcher:
    """Collects waiting requests and resolves their futures in model order."""

    def __init__(self, model, max_batch: int) -> None:
        self.model = model
        self.max_batch = max_batch
        self.queue: asyncio.Queue = asyncio.Queue()
        self._task: asyncio.Task | None = None

    async def start(self) -> None:
        self._task = asyncio.create_task(self._loop())

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass

    async def _loop(self) -> None:
        while True:
            first = await self.queue.get()
            batch = [first]
            while len(batch) < self.max_batch and not self.queue.empty():
                batch.append(self.queue.get_nowait())
            tokens = [item[0] for item in batch]
            try:
                rows = self.model.probs_batch(tokens)
            except Exception as exc:  # resolve every waiter with the failure
                for _, future in batch:
                    if not future.done():
                        future.set_exception(exc)
                continue
            for (_, future), out in zip(batch, rows):
                if not future.done():
                    future.set_result(out)

    async def predict(self, tokens: list[int]):
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        await self.queue.put((tokens, future))
        return await future


def create_app(model, max_batch: int = 8) -> FastAPI:
    batcher = _Batcher(model, max_batch)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await batcher.start()
        yield
        await batcher.stop()

    app = FastAPI(lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(Exception)
    async def model_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/v1/health")
    async def health():
        return {
            "status": "ok",
            "vocab_size": model.vocab_size,
            "mask_id": model.mask_id,
        }

    @app.post("/v1/predict")
    async def predict(request: PredictRequest):
        if len(request.tokens) > model.max_len:
            return JSONResponse(
                status_code=413,
                content={"error": f"sequence longer than {model.max_len}"},
            )
        if request.mask_id != model.mask_id:
            return JSONResponse(
                status_code=400,
                content={"error": f"mask_id must be {model.mask_id}"},
            )
        bad = [t for t in request.tokens if t < 0 or t > model.mask_id]
        if bad:
            return JSONResponse(
                status_code=400,
                content={"error": f"token ids outside [0, {model.mask_id}]: {bad[:5]}"},
            )
        rows = await batcher.predict(list(request.tokens))
        return {"probs": rows.tolist()}

    return app
