"""HTTP logit service.

Serves raw next-token and masked-position logits from pretrained models over
a small JSON protocol:

* ``GET  /health``        -> ``{"status": "ok"}``
* ``GET  /vocab``         -> ``{"tokens": [str]}``
* ``POST /next_logits``   body ``{"context": [int]}``            -> ``{"logits": [float]}``
* ``POST /masked_logits`` body ``{"tokens": [int], "position": int}`` -> ``{"logits": [float]}``
* ``POST /encode``        body ``{"text": str}``                 -> ``{"ids": [int]}``
  (extension: server-side tokenization without demarcation tokens)

Logits are returned exactly as the model produces them: no clipping, no
temperature, no sampling. Malformed requests get HTTP 400 with a JSON error;
model failures get HTTP 500. One inference runs at a time; concurrent
requests queue on a lock.
"""

from __future__ import annotations

import threading

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from transformers import AutoModelForCausalLM, AutoModelForMaskedLM, AutoTokenizer

from .config import BridgeConfig


class NextLogitsRequest(BaseModel):
    context: list[int]


class MaskedLogitsRequest(BaseModel):
    tokens: list[int]
    position: int


class EncodeRequest(BaseModel):
    text: str


class _Backend:
    """Loaded models plus the single-inference lock."""

    def __init__(self, config: BridgeConfig):
        self.config = config
        self.lock = threading.Lock()
        self.causal = None
        self.masked = None
        tokenizer = None

        if config.causal_model:
            tokenizer = AutoTokenizer.from_pretrained(config.causal_model)
            self.causal = AutoModelForCausalLM.from_pretrained(config.causal_model)
            self.causal.to(config.device)
            self.causal.eval()
        if config.masked_model:
            masked_tokenizer = AutoTokenizer.from_pretrained(config.masked_model)
            self.masked = AutoModelForMaskedLM.from_pretrained(config.masked_model)
            self.masked.to(config.device)
            self.masked.eval()
            if tokenizer is not None and (
                masked_tokenizer.get_vocab() != tokenizer.get_vocab()
            ):
                raise ValueError(
                    "causal and masked models must share one tokenizer vocabulary; "
                    "serve them from separate bridge instances"
                )
            tokenizer = tokenizer or masked_tokenizer
        if tokenizer is None:
            raise ValueError("configure at least one of causal_model/masked_model")
        if self.masked is not None and tokenizer.mask_token_id is None:
            raise ValueError("masked model tokenizer has no mask token")
        self.tokenizer = tokenizer
        self.vocab_size = len(tokenizer)

    def vocab_tokens(self) -> list[str]:
        return self.tokenizer.convert_ids_to_tokens(list(range(self.vocab_size)))

    def next_logits(self, context: list[int]) -> list[float]:
        ids = torch.tensor([context], device=self.config.device)
        with self.lock, torch.no_grad():
            logits = self.causal(input_ids=ids).logits[0, -1]
        return logits.cpu().tolist()

    def masked_logits(self, tokens: list[int], position: int) -> list[float]:
        masked = list(tokens)
        masked[position] = self.tokenizer.mask_token_id
        ids = torch.tensor([masked], device=self.config.device)
        with self.lock, torch.no_grad():
            logits = self.masked(input_ids=ids).logits[0, position]
        return logits.cpu().tolist()


def _bad_request(detail: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": detail})


def create_app(config: BridgeConfig) -> FastAPI:
    backend = _Backend(config)
    app = FastAPI(title="privshift bridge", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _bad_request(str(exc.errors()[:1]))

    @app.exception_handler(Exception)
    async def failure_handler(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/vocab")
    def vocab():
        return {"tokens": backend.vocab_tokens()}

    @app.post("/next_logits")
    def next_logits(body: NextLogitsRequest):
        if backend.causal is None:
            return _bad_request("causal mode not configured on this bridge")
        if not body.context:
            return _bad_request("context must be non-empty")
        if any(not (0 <= t < backend.vocab_size) for t in body.context):
            return _bad_request("context contains a token id outside the vocabulary")
        return {"logits": backend.next_logits(body.context)}

    @app.post("/masked_logits")
    def masked_logits(body: MaskedLogitsRequest):
        if backend.masked is None:
            return _bad_request("masked mode not configured on this bridge")
        if not body.tokens:
            return _bad_request("tokens must be non-empty")
        if any(not (0 <= t < backend.vocab_size) for t in body.tokens):
            return _bad_request("tokens contain an id outside the vocabulary")
        if not (0 <= body.position < len(body.tokens)):
            return _bad_request(
                f"position {body.position} out of range for {len(body.tokens)} tokens"
            )
        return {"logits": backend.masked_logits(body.tokens, body.position)}

    @app.post("/encode")
    def encode(body: EncodeRequest):
        ids = backend.tokenizer(body.text, add_special_tokens=False).input_ids
        return {"ids": [int(i) for i in ids]}

    return app


def serve(config: BridgeConfig, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=config.port, log_level="info")
