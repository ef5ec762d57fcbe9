"""HTTP activation service and its client.

Routes:
    GET  /v1/blobs/{serial}  -> 200 {"serial", "blob"} | 404 {"error": "SerialUnknown"}
    POST /v1/provision       -> 201 {"serial", "blob", "secret"}; body {"width": int}
    GET  /v1/healthz         -> 200 "ok"
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .activation import ActivationBlob, SerialRegistry, generate_secret, provision_disc
from .errors import BindFailure, MalformedText, SerialUnknown, ServiceUnreachable, WidthMismatch
from .model import VisibleSerial
from .storage import b64, save_registry, unb64

log = logging.getLogger(__name__)


class _Handler(BaseHTTPRequestHandler):
    server_version = "tagdrive/1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, body, content_type="application/json"):
        data = body.encode("utf-8") if isinstance(body, str) else json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type + "; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
        self.server.service._record(data)

    def do_GET(self):
        svc = self.server.service
        path = urllib.parse.urlsplit(self.path).path
        if path == "/v1/healthz":
            return self._send(200, "ok", "text/plain")
        if path.startswith("/v1/blobs/"):
            raw = urllib.parse.unquote(path[len("/v1/blobs/"):])
            try:
                serial = VisibleSerial(raw)
            except MalformedText:
                return self._send(404, {"error": "SerialUnknown"})
            entry = svc.registry.get(serial)
            if entry is None:
                return self._send(404, {"error": "SerialUnknown"})
            return self._send(200, {"serial": serial.text, "blob": b64(entry.blob.to_bytes())})
        self._send(404, {"error": "NotFound"})

    def do_POST(self):
        svc = self.server.service
        path = urllib.parse.urlsplit(self.path).path
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if path != "/v1/provision":
            return self._send(404, {"error": "NotFound"})
        try:
            req = json.loads(raw or b"{}")
            width = req["width"]
            if not isinstance(width, int) or isinstance(width, bool):
                raise ValueError("width must be an integer")
        except (ValueError, KeyError, TypeError) as exc:
            return self._send(400, {"error": "BadRequest", "detail": str(exc)})
        try:
            serial, secret, blob = svc.provision(width)
        except WidthMismatch:
            return self._send(400, {"error": "WidthMismatch"})
        self._send(201, {"serial": serial.text, "blob": b64(blob.to_bytes()), "secret": secret.text})


class ActivationService:
    """Serves a registry. GETs read the current snapshot without locking; provisions are serialized.

    ``tag_sink(serial, tag)`` receives each freshly minted tag in-process, standing
    in for the factory line that writes it; tags never cross the wire.
    """

    def __init__(self, registry: SerialRegistry, bind=("127.0.0.1", 0), registry_path=None,
                 tag_sink=None, capture_responses: bool = False):
        self.registry = registry
        self.registry_path = registry_path
        self.tag_sink = tag_sink
        self._provision_lock = threading.Lock()
        self._capture = capture_responses
        self._capture_lock = threading.Lock()
        self.responses: list[bytes] = []
        try:
            self.httpd = ThreadingHTTPServer(bind, _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {bind[0]}:{bind[1]}: {exc}") from exc
        self.httpd.daemon_threads = True
        self.httpd.service = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def _record(self, data: bytes):
        if self._capture:
            with self._capture_lock:
                self.responses.append(data)

    def provision(self, width: int):
        with self._provision_lock:
            secret = generate_secret()
            serial, tag, blob = provision_disc(self.registry, width, secret)
            if self.registry_path is not None:
                save_registry(self.registry, self.registry_path)
        if self.tag_sink is not None:
            self.tag_sink(serial, tag)
        return serial, secret, blob

    def start(self) -> "ActivationService":
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="tagdrive-serve", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self.httpd.serve_forever()

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve(registry: SerialRegistry, bind_address=("127.0.0.1", 0), **kwargs) -> ActivationService:
    """Start the service on a background thread and return it."""
    return ActivationService(registry, bind_address, **kwargs).start()


def parse_bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {text!r}")
    return host, int(port)


def _request(url: str, data: bytes | None = None, timeout=10.0):
    req = urllib.request.Request(url, data=data, method="POST" if data is not None else "GET",
                                 headers={"Content-Type": "application/json"} if data is not None else {})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise ServiceUnreachable(f"{url}: {exc}") from exc


def fetch_blob(base_url: str, serial: VisibleSerial, timeout=10.0) -> ActivationBlob:
    status, body = _request(f"{base_url.rstrip('/')}/v1/blobs/{urllib.parse.quote(str(serial))}", timeout=timeout)
    if status == 404:
        raise SerialUnknown(str(serial))
    if status != 200:
        raise ServiceUnreachable(f"unexpected status {status}")
    return ActivationBlob.from_bytes(unb64(json.loads(body)["blob"]))


def request_provision(base_url: str, width: int, timeout=10.0) -> dict:
    status, body = _request(f"{base_url.rstrip('/')}/v1/provision", json.dumps({"width": width}).encode(), timeout)
    doc = json.loads(body)
    if status != 201:
        if doc.get("error") == "WidthMismatch":
            raise WidthMismatch(f"service rejected width {width}")
        raise ServiceUnreachable(f"provision failed with status {status}: {doc}")
    return doc


def healthz(base_url: str, timeout=5.0) -> bool:
    status, body = _request(f"{base_url.rstrip('/')}/v1/healthz", timeout=timeout)
    return status == 200 and body == b"ok"
