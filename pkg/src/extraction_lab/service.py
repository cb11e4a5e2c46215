"""HTTP front end for a budgeted oracle, plus the matching client.

The wire format keeps floats as Python `repr` strings (what json emits), so
a probability vector survives a server -> client round trip bit-for-bit and
a remote attack reproduces a local one exactly.

    POST /v1/predict  {"features": [..]} -> {"kind": "soft", "probs": [..]}
                                         |  {"kind": "hard", "label": c}
    GET  /v1/budget   -> {"used": u, "limit": n}
    GET  /v1/meta     -> {"label_mode": .., "num_classes": C, "input_dim": d}

Errors are {"error": code} with code one of budget_exhausted (HTTP 429),
dimension_mismatch (400), malformed_request (400).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .oracle import BudgetExhausted, DimensionMismatch, LocalOracle, OracleResponse

log = logging.getLogger(__name__)


class TransportError(Exception):
    """The server could not be reached or dropped the connection."""


class ProtocolViolation(Exception):
    """The server answered with something outside the wire format."""


class _OracleHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "ExtractionLab/0.1"

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        oracle: LocalOracle = self.server.oracle
        if self.path == "/v1/budget":
            used, limit = oracle.budget_status()
            self._send(200, {"used": used, "limit": limit})
        elif self.path == "/v1/meta":
            self._send(
                200,
                {
                    "label_mode": oracle.label_mode,
                    "num_classes": oracle.num_classes,
                    "input_dim": oracle.input_dim,
                },
            )
        else:
            self._send(404, {"error": "malformed_request"})

    def do_POST(self):
        if self.path != "/v1/predict":
            self._send(404, {"error": "malformed_request"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length))
            features = payload["features"]
            if not isinstance(features, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in features
            ):
                raise TypeError
            sample = np.array(features, dtype=float)
        except (ValueError, KeyError, TypeError):
            self._send(400, {"error": "malformed_request"})
            return

        oracle: LocalOracle = self.server.oracle
        try:
            response = oracle.query(sample)
        except BudgetExhausted as exc:
            self._send(
                429,
                {"error": "budget_exhausted", "used": exc.used, "limit": exc.limit},
            )
            return
        except DimensionMismatch:
            self._send(400, {"error": "dimension_mismatch"})
            return

        if response.kind == "soft":
            self._send(200, {"kind": "soft", "probs": [float(p) for p in response.probs]})
        else:
            self._send(200, {"kind": "hard", "label": int(response.label)})

    def log_message(self, fmt, *args):  # route into logging, keep stderr quiet
        log.debug("%s - %s", self.address_string(), fmt % args)


class _OracleHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    # a burst of concurrent clients must queue at accept(), not get reset;
    # the socketserver default backlog of 5 drops connections under load
    request_queue_size = 128


class OracleServer:
    """Serves one budgeted oracle on a background thread."""

    def __init__(self, oracle: LocalOracle, host: str = "127.0.0.1", port: int = 0):
        self.oracle = oracle
        self._httpd = _OracleHTTPServer((host, port), _OracleHandler)
        self._httpd.oracle = oracle
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "OracleServer":
        if self._thread is not None:
            raise RuntimeError("server already started")
        # short poll interval keeps stop() snappy (serve_forever polls between checks)
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        log.info("oracle listening on %s", self.url)
        return self

    def stop(self) -> None:
        if self._thread is None:
            return
        self._httpd.shutdown()
        self._thread.join()
        self._httpd.server_close()
        self._thread = None

    def __enter__(self) -> "OracleServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class RemoteOracle:
    """Client with the same surface as LocalOracle: query, budget_status,
    num_classes, input_dim. Budget and dimension errors come back as the
    exceptions the local oracle would have raised."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        meta = self._get("/v1/meta")
        try:
            self.label_mode = meta["label_mode"]
            self._num_classes = int(meta["num_classes"])
            self._input_dim = int(meta["input_dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"bad /v1/meta payload: {meta!r}") from exc

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def input_dim(self) -> int:
        return self._input_dim

    def _request(self, req: urllib.request.Request) -> tuple[int, dict]:
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                return exc.code, json.loads(exc.read())
            except (ValueError, TypeError):
                raise ProtocolViolation(f"non-json error body (HTTP {exc.code})") from exc
        except urllib.error.URLError as exc:
            raise TransportError(str(exc.reason)) from exc
        except (ConnectionError, TimeoutError, OSError) as exc:
            raise TransportError(str(exc)) from exc
        except ValueError as exc:
            raise ProtocolViolation("response body is not json") from exc

    def _get(self, path: str) -> dict:
        status, payload = self._request(
            urllib.request.Request(self.base_url + path, method="GET")
        )
        if status != 200:
            raise ProtocolViolation(f"HTTP {status} from {path}: {payload!r}")
        return payload

    def query(self, sample: np.ndarray) -> OracleResponse:
        body = json.dumps({"features": [float(v) for v in np.asarray(sample).ravel()]})
        req = urllib.request.Request(
            self.base_url + "/v1/predict",
            data=body.encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        status, payload = self._request(req)
        if status == 200:
            kind = payload.get("kind")
            if kind == "soft" and "probs" in payload:
                probs = np.array(payload["probs"], dtype=float)
                if len(probs) != self._num_classes:
                    raise ProtocolViolation(
                        f"expected {self._num_classes} probabilities, got {len(probs)}"
                    )
                return OracleResponse(kind="soft", probs=probs)
            if kind == "hard" and "label" in payload:
                return OracleResponse(kind="hard", label=int(payload["label"]))
            raise ProtocolViolation(f"unrecognized prediction payload: {payload!r}")
        error = payload.get("error") if isinstance(payload, dict) else None
        if status == 429 and error == "budget_exhausted":
            used, limit = self.budget_status()
            raise BudgetExhausted(used, limit)
        if status == 400 and error == "dimension_mismatch":
            raise DimensionMismatch(
                f"oracle expects {self._input_dim}-dimensional samples"
            )
        raise ProtocolViolation(f"HTTP {status}: {payload!r}")

    def budget_status(self) -> tuple[int, int]:
        payload = self._get("/v1/budget")
        try:
            return int(payload["used"]), int(payload["limit"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"bad /v1/budget payload: {payload!r}") from exc


def serve_oracle(
    teacher, label_mode: str, budget_limit: int, host: str = "127.0.0.1", port: int = 0
) -> OracleServer:
    """Wraps a teacher network in a budgeted oracle and starts serving it."""
    oracle = LocalOracle(teacher, label_mode=label_mode, budget_limit=budget_limit)
    return OracleServer(oracle, host=host, port=port).start()


@dataclass
class ServiceConfig:
    checkpoint_path: str
    label_mode: str = "soft"
    budget_limit: int = 1
    host: str = "127.0.0.1"
    port: int = 0

    def __post_init__(self):
        if self.budget_limit < 1:
            raise ValueError("budget_limit must be >= 1")


def serve(config: ServiceConfig) -> OracleServer:
    """Loads the checkpoint and serves it; the budget lives as long as the
    server object. Raises CheckpointError for a bad checkpoint and OSError
    when the port is taken."""
    from .network import load_checkpoint

    teacher = load_checkpoint(config.checkpoint_path)
    return serve_oracle(
        teacher, config.label_mode, config.budget_limit, config.host, config.port
    )
