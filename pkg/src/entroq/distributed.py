"""Two-device harness: a rho device and a sigma device behind newline-delimited JSON over TCP.

Wire format, one message per line::

    request   {"id": u64, "family": "...", "circuit": {...}, "params": [...], "shots": u64, "seed": u64}
    response  {"id": u64, "probs": [...], "shots": u64}
    error     {"id": u64, "error": "CODE", "detail": "..."}

plus ``{"id": u64, "op": "info"}`` -> ``{"id": u64, "role": "rho", "dim": d}`` so a
coordinator can learn the register size.  Floats are written with ``repr``
precision, so probabilities survive the round trip bit for bit and a
distributed run reproduces the in-process one exactly.

The rho device answers ``v_basis`` and ``swap_test``; the sigma device answers
``u_dagger_basis``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import itertools
import json
import logging
import socket
import socketserver
import threading
import time
from typing import Sequence

import numpy as np

from .errors import EstimationError, ValidationError
from .linalg import MAX_DIM
from .sampling import FAMILIES, FAMILY_STATE, SampleRequest, UnitaryCache, evaluate_request, request_dim
from .states import as_state

log = logging.getLogger(__name__)

ROLES = ("rho", "sigma")
MAX_LINE = 1 << 22

E_MALFORMED = "MALFORMED_REQUEST"
E_UNSUPPORTED = "UNSUPPORTED_FAMILY"
E_DIMENSION = "DIMENSION_MISMATCH"
E_OVERSIZE = "OVERSIZE_DIMENSION"
E_INTERNAL = "INTERNAL_ERROR"


class DeviceError(EstimationError):
    def __init__(self, code: str, detail: str, trace=None):
        self.code = code
        super().__init__(f"{code}: {detail}", trace)


def parse_address(addr) -> tuple:
    """'host:port', ':port' or a (host, port) pair."""
    if isinstance(addr, tuple):
        return str(addr[0]), int(addr[1])
    host, sep, port = str(addr).rpartition(":")
    if not sep:
        raise ValidationError(f"address {addr!r} needs host:port")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ValidationError(f"bad port in address {addr!r}") from None


def _dumps(obj) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


def handle_message(state: np.ndarray, role: str, obj, cache: UnitaryCache | None = None,
                   circuit_cache: dict | None = None) -> dict:
    """Answer one decoded message; never raises."""
    rid = obj.get("id", 0) if isinstance(obj, dict) else 0
    try:
        rid = int(rid)
    except (TypeError, ValueError):
        rid = 0
    if not isinstance(obj, dict):
        return {"id": rid, "error": E_MALFORMED, "detail": "message is not a JSON object"}
    if obj.get("op") == "info":
        return {"id": rid, "role": role, "dim": int(state.shape[0])}
    fam = obj.get("family")
    if fam not in FAMILIES:
        return {"id": rid, "error": E_UNSUPPORTED, "detail": f"unknown family {fam!r}"}
    if FAMILY_STATE[fam] != role:
        return {"id": rid, "error": E_UNSUPPORTED, "detail": f"{fam} needs the {FAMILY_STATE[fam]} device"}
    try:
        req = SampleRequest.from_json(obj, circuit_cache)
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        return {"id": rid, "error": E_MALFORMED, "detail": str(exc)}
    dim = request_dim(req)
    if dim > MAX_DIM:
        return {"id": rid, "error": E_OVERSIZE, "detail": f"dimension {dim} exceeds {MAX_DIM}"}
    if dim != state.shape[0]:
        return {"id": rid, "error": E_DIMENSION, "detail": f"circuit dimension {dim}, hosted state {state.shape[0]}"}
    try:
        p = evaluate_request(state, req, cache)
    except ValidationError as exc:
        return {"id": rid, "error": E_MALFORMED, "detail": str(exc)}
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("request %s failed", rid)
        return {"id": rid, "error": E_INTERNAL, "detail": str(exc)}
    return {"id": rid, "probs": [float(x) for x in p], "shots": int(req.shots)}


class _Handler(socketserver.StreamRequestHandler):
    disable_nagle_algorithm = True

    def handle(self):
        srv = self.server
        cache = UnitaryCache()
        circuits: dict = {}
        while True:
            try:
                line = self.rfile.readline(MAX_LINE)
            except OSError:
                return
            if not line:
                return
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                reply = {"id": 0, "error": E_MALFORMED, "detail": f"invalid JSON: {exc}"}
            else:
                reply = handle_message(srv.state, srv.role, obj, cache, circuits)
            with srv.count_lock:
                srv.served += 1
            try:
                self.wfile.write(_dumps(reply))
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DeviceServer:
    """A running device; use as a context manager or call :meth:`shutdown`."""

    def __init__(self, state, role: str, bind=("127.0.0.1", 0)):
        if role not in ROLES:
            raise ValidationError(f"role must be one of {ROLES}, got {role!r}")
        st = as_state(state, relaxed_trace=True)
        if st.dim > MAX_DIM:
            raise ValidationError(f"hosted state dimension {st.dim} exceeds {MAX_DIM}")
        self._srv = _Server(parse_address(bind), _Handler)
        self._srv.state = np.asarray(st.matrix)
        self._srv.role = role
        self._srv.served = 0
        self._srv.count_lock = threading.Lock()
        self._thread = threading.Thread(target=self._srv.serve_forever, name=f"entroq-{role}", daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple:
        return self._srv.server_address[:2]

    @property
    def served(self) -> int:
        return self._srv.served

    def shutdown(self) -> None:
        self._srv.shutdown()
        self._srv.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_device(state, bind=("127.0.0.1", 0), role: str = "rho") -> DeviceServer:
    """Start a device in a background thread and return it."""
    return DeviceServer(state, role, bind)


class _Connection:
    def __init__(self, addr: tuple, timeout: float):
        self.sock = socket.create_connection(addr, timeout=timeout)
        self.sock.settimeout(timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.reader = self.sock.makefile("rb")

    def exchange(self, lines: Sequence[bytes]) -> list:
        self.sock.sendall(b"".join(lines))
        out = []
        for _ in lines:
            line = self.reader.readline(MAX_LINE)
            if not line:
                raise ConnectionError("device closed the connection")
            out.append(json.loads(line))
        return out

    def close(self) -> None:
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class RemoteDevice:
    """Client for one device; one connection per calling thread, with reconnect on failure."""

    def __init__(self, addr, timeout: float = 30.0, retries: int = 3, backoff: float = 0.2):
        self.addr = parse_address(addr)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._local = threading.local()
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()

    def _conn(self) -> _Connection:
        c = getattr(self._local, "conn", None)
        if c is None:
            c = self._local.conn = _Connection(self.addr, self.timeout)
        return c

    def _drop(self) -> None:
        c = getattr(self._local, "conn", None)
        if c is not None:
            c.close()
        self._local.conn = None

    def _next_ids(self, n: int) -> list:
        with self._id_lock:
            return [next(self._ids) for _ in range(n)]

    def call(self, messages: Sequence[dict]) -> list:
        """Send ``messages`` (ids are assigned here) and return the replies in order."""
        ids = self._next_ids(len(messages))
        lines = [_dumps(dict(m, id=i)) for m, i in zip(messages, ids)]
        last = None
        for attempt in range(self.retries + 1):
            try:
                replies = self._conn().exchange(lines)
                break
            except (OSError, ConnectionError, ValueError) as exc:
                last = exc
                self._drop()
                if attempt < self.retries:
                    log.warning("device %s:%s attempt %d failed: %s", *self.addr, attempt + 1, exc)
                    time.sleep(self.backoff * (attempt + 1))
        else:
            raise DeviceError("UNREACHABLE", f"device {self.addr[0]}:{self.addr[1]} failed after "
                                             f"{self.retries} retries: {last}")
        by_id = {int(r.get("id", -1)): r for r in replies}
        return [by_id.get(i, {"id": i, "error": E_INTERNAL, "detail": "missing reply"}) for i in ids]

    def info(self) -> dict:
        reply = self.call([{"op": "info"}])[0]
        if "error" in reply:
            raise DeviceError(reply["error"], reply.get("detail", ""))
        return reply

    def close(self) -> None:
        self._drop()


class RemoteBackend:
    """Estimator backend whose probabilities come from a rho device and a sigma device."""

    def __init__(self, rho_addr, sigma_addr, timeout: float = 30.0, retries: int = 3):
        self.devices = {"rho": RemoteDevice(rho_addr, timeout, retries), "sigma": RemoteDevice(sigma_addr, timeout, retries)}
        dims = {}
        for role, dev in self.devices.items():
            info = dev.info()
            if info.get("role") != role:
                raise ValidationError(f"device at {dev.addr} hosts {info.get('role')!r}, expected {role!r}")
            dims[role] = int(info["dim"])
        if dims["rho"] != dims["sigma"]:
            raise ValidationError(f"device dimensions differ: {dims}")
        self._dim = dims["rho"]
        self.counts = {"rho": 0, "sigma": 0}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=2)

    @property
    def dim(self) -> int:
        return self._dim

    def run(self, requests: Sequence[SampleRequest]) -> list:
        groups = {"rho": [], "sigma": []}
        for k, req in enumerate(requests):
            groups[FAMILY_STATE[req.family]].append(k)
        out = [None] * len(requests)

        def send(role):
            idx = groups[role]
            if not idx:
                return role, []
            return role, self.devices[role].call([requests[k].to_json() for k in idx])

        futures = [self._pool.submit(send, role) for role in ("rho", "sigma")]
        results = [f.result() for f in futures]
        for role, replies in results:
            for k, rep in zip(groups[role], replies):
                if "error" in rep:
                    raise DeviceError(rep["error"], rep.get("detail", ""))
                out[k] = np.asarray(rep["probs"], dtype=float)
        with self._lock:
            for role in groups:
                self.counts[role] += len(groups[role])
        return out

    def request_counts(self) -> dict:
        return dict(self.counts)

    def close(self) -> None:
        self._pool.shutdown()
        for dev in self.devices.values():
            dev.close()


def distributed_estimate(rho_addr, sigma_addr, kind: str, config=None, *, t: float | None = None,
                         alpha: float | None = None, rule=None, workers: int = 1, timeout: float = 30.0,
                         retries: int = 3):
    """Run an estimator against two devices; same numerics as the in-process estimators.

    ``kind`` is ``"ft"`` (needs ``t``), ``"relent"`` or ``"petz"`` (needs ``alpha``).
    """
    from .vqa import EstimationReport, FtConfig, estimate_petz, estimate_relative_entropy, train_node

    config = config or FtConfig()
    backend = RemoteBackend(rho_addr, sigma_addr, timeout, retries)
    try:
        if kind == "relent":
            return estimate_relative_entropy(None, None, config, rule, backend=backend, workers=workers)
        if kind == "petz":
            if alpha is None:
                raise ValidationError("petz estimation needs alpha")
            return estimate_petz(None, None, alpha, config, rule, backend=backend, workers=workers)
        if kind == "ft":
            if t is None:
                raise ValidationError("ft estimation needs t")
            res = train_node(backend, t, config, 0)
            return EstimationReport("ft", [res], None, res.value, requests=backend.request_counts(),
                                    config=config.to_json())
        raise ValidationError(f"kind must be ft, relent or petz, got {kind!r}")
    finally:
        backend.close()
