"""Generation serving over the shared JSON protocol.

Two transports around one backend: newline-delimited JSON on a byte-stream
pair, and HTTP POST /generate. Requests are ``{"id", "prompt"}`` answered
by ``{"id", "text", "decoding"}``; ``{"op": "ping"}`` answers
``{"ok": true}``. A malformed request produces an error response and the
server keeps running.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import BinaryIO

import torch

from .config import BridgeConfig
from .models import load_generator


class GenerationBackend:
    """Wraps a seq2seq model: prompt string in, single-line answer out."""

    def __init__(self, cfg: BridgeConfig, generator=None, corpus=None):
        self.cfg = cfg
        self.tokenizer, self.model = (
            generator if generator is not None else load_generator(cfg, corpus=corpus)
        )

    def generate(self, prompt: str) -> str:
        encoded = self.tokenizer(
            prompt,
            return_tensors="pt",
            truncation=True,
            max_length=self.cfg.seq2seq.max_source_length,
        )
        encoded = {k: v.to(self.cfg.device) for k, v in encoded.items()}
        with torch.no_grad():
            output = self.model.generate(
                **encoded,
                max_new_tokens=self.cfg.max_new_tokens,
                num_beams=self.cfg.beam_size,
                do_sample=False,
            )
        text = self.tokenizer.decode(output[0], skip_special_tokens=True)
        return text.strip().split("\n", 1)[0]


def handle_request(payload: dict, backend: GenerationBackend) -> dict:
    if payload.get("op") == "ping":
        return {"ok": True}
    if "prompt" not in payload or "id" not in payload:
        response = {"error": "request must carry 'id' and 'prompt'"}
        if "id" in payload:
            response["id"] = payload["id"]
        return response
    try:
        text = backend.generate(str(payload["prompt"]))
    except Exception as exc:  # noqa: BLE001 - generation failure must not kill the server
        return {"id": payload["id"], "error": f"{type(exc).__name__}: {exc}"}
    return {"id": payload["id"], "text": text, "decoding": backend.cfg.decoding}


def serve_stream(backend: GenerationBackend, reader: BinaryIO, writer: BinaryIO) -> None:
    """Answer newline-delimited JSON requests until EOF."""
    for line in iter(reader.readline, b""):
        if not line.strip():
            continue
        try:
            payload = json.loads(line.decode("utf-8"))
            if not isinstance(payload, dict):
                raise ValueError("request is not a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            response = {"error": f"invalid request: {exc}"}
        else:
            response = handle_request(payload, backend)
        writer.write((json.dumps(response) + "\n").encode("utf-8"))
        writer.flush()


def make_http_server(backend: GenerationBackend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """HTTP server bound to (host, port); caller runs serve_forever()."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path != "/generate":
                self._reply(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                if not isinstance(payload, dict):
                    raise ValueError("request is not a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._reply(400, {"error": f"invalid request: {exc}"})
                return
            self._reply(200, handle_request(payload, backend))

        def _reply(self, status: int, body: dict):
            raw = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)
