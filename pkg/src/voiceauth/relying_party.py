"""Relying-party service: stores public keys, issues single-use challenges,
and verifies signed assertions. It never sees biometric material.

Persistence is an append-only JSON-lines file: one credential record per
line, flushed and fsynced before the caller gets an acknowledgment, so a
crash can at worst leave one torn trailing line, which recovery skips.
Compaction rewrites via atomic rename. Challenges are deliberately
in-memory: they are short-lived and must not survive a restart anyway.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from .credentials import b64url, b64url_decode, verify_signature
from .exceptions import (RegistrationConflictError, UnknownUserError,
                         VoiceAuthError)

DEFAULT_CHALLENGE_TTL = 60.0
NONCE_BYTES = 32


@dataclass(frozen=True)
class CredentialRecord:
    user_id: str
    service_id: str
    public_key: bytes
    algorithm: str
    created_at: float


@dataclass
class Challenge:
    nonce: bytes
    user_id: str
    expires_at: float
    consumed: bool = False


@dataclass
class VerifyOutcome:
    accepted: bool
    reason: str


class RelyingParty:
    """Core registration/challenge/verify logic behind the HTTP layer."""

    def __init__(self, store_path: str | Path, service_id: str = "default",
                 challenge_ttl: float = DEFAULT_CHALLENGE_TTL,
                 clock: Callable[[], float] = time.time):
        self.store_path = Path(store_path)
        self.service_id = service_id
        self.challenge_ttl = challenge_ttl
        self.clock = clock
        self._lock = threading.Lock()
        self._credentials: dict[str, CredentialRecord] = {}
        self._challenges: dict[bytes, Challenge] = {}
        self._load()

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        if not self.store_path.exists():
            return
        for line in self.store_path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                self._credentials[rec["user_id"]] = CredentialRecord(
                    user_id=rec["user_id"], service_id=rec["service_id"],
                    public_key=b64url_decode(rec["public_key_b64"]),
                    algorithm=rec["alg"], created_at=rec["created_at"])
            except (json.JSONDecodeError, KeyError):
                # torn write from a crash between append and ack
                continue

    def _append(self, record: CredentialRecord) -> None:
        line = json.dumps({
            "user_id": record.user_id, "service_id": record.service_id,
            "public_key_b64": b64url(record.public_key),
            "alg": record.algorithm, "created_at": record.created_at,
        }, sort_keys=True)
        with open(self.store_path, "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def compact(self) -> None:
        """Rewrite the store with one line per live record, atomically."""
        with self._lock:
            tmp = self.store_path.with_suffix(".compact.tmp")
            with open(tmp, "w") as fh:
                for record in self._credentials.values():
                    fh.write(json.dumps({
                        "user_id": record.user_id,
                        "service_id": record.service_id,
                        "public_key_b64": b64url(record.public_key),
                        "alg": record.algorithm,
                        "created_at": record.created_at,
                    }, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            tmp.replace(self.store_path)

    # -- operations ----------------------------------------------------------

    def register_credential(self, user_id: str, public_key: bytes,
                            algorithm: str = "ed25519") -> CredentialRecord:
        """Persist a public key; idempotent for the identical key, conflict
        otherwise."""
        if not user_id:
            raise VoiceAuthError("user_id must be non-empty")
        if algorithm == "ed25519" and len(public_key) != 32:
            raise VoiceAuthError("malformed ed25519 public key")
        with self._lock:
            existing = self._credentials.get(user_id)
            if existing is not None:
                if existing.public_key == public_key:
                    return existing
                raise RegistrationConflictError(
                    f"user '{user_id}' already registered with a different key")
            record = CredentialRecord(user_id=user_id,
                                      service_id=self.service_id,
                                      public_key=public_key,
                                      algorithm=algorithm,
                                      created_at=self.clock())
            self._append(record)
            self._credentials[user_id] = record
            return record

    def get_credential(self, user_id: str) -> CredentialRecord:
        record = self._credentials.get(user_id)
        if record is None:
            raise UnknownUserError(f"no credential for user '{user_id}'")
        return record

    def issue_challenge(self, user_id: str) -> Challenge:
        """Fresh single-use nonce for a registered user."""
        self.get_credential(user_id)
        challenge = Challenge(nonce=secrets.token_bytes(NONCE_BYTES),
                              user_id=user_id,
                              expires_at=self.clock() + self.challenge_ttl)
        with self._lock:
            self._challenges[challenge.nonce] = challenge
        return challenge

    def verify_assertion(self, user_id: str, payload: bytes, nonce: bytes,
                         signature: bytes) -> VerifyOutcome:
        """Accept iff the nonce is live and the signature covers payload||nonce.

        The nonce is consumed by the attempt itself, pass or fail, so no
        assertion can ever verify twice.
        """
        record = self.get_credential(user_id)
        with self._lock:
            challenge = self._challenges.get(nonce)
            if challenge is None:
                return VerifyOutcome(False, "unknown or already-used nonce")
            if challenge.consumed:
                return VerifyOutcome(False, "nonce already consumed")
            challenge.consumed = True
            if challenge.user_id != user_id:
                return VerifyOutcome(False, "nonce was issued to another user")
            if self.clock() > challenge.expires_at:
                return VerifyOutcome(False, "challenge expired")
        try:
            ok = verify_signature(record.public_key, payload, nonce, signature)
        except VoiceAuthError as exc:
            return VerifyOutcome(False, f"malformed assertion: {exc}")
        if not ok:
            return VerifyOutcome(False, "signature check failed")
        return VerifyOutcome(True, "ok")


class _Handler(BaseHTTPRequestHandler):
    rp: RelyingParty  # set by make_server

    def log_message(self, *args):  # quiet by default
        pass

    def _reply(self, status: int, body: dict) -> None:
        blob = json.dumps(body, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def do_POST(self):  # noqa: N802 - http.server API
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._reply(400, {"error": "malformed JSON body"})
            return
        try:
            if self.path == "/register":
                record = self.rp.register_credential(
                    body["user_id"], b64url_decode(body["public_key_b64"]),
                    body.get("alg", "ed25519"))
                self._reply(200, {"registered": True,
                                  "service_id": record.service_id})
            elif self.path == "/challenge":
                challenge = self.rp.issue_challenge(body["user_id"])
                self._reply(200, {"nonce_b64": b64url(challenge.nonce),
                                  "expires_at": challenge.expires_at})
            elif self.path == "/verify":
                outcome = self.rp.verify_assertion(
                    body["user_id"], b64url_decode(body["payload_b64"]),
                    b64url_decode(body["nonce_b64"]),
                    b64url_decode(body["sig_b64"]))
                self._reply(200, {"accepted": outcome.accepted,
                                  "reason": outcome.reason})
            else:
                self._reply(404, {"error": f"no such endpoint {self.path}"})
        except KeyError as exc:
            self._reply(400, {"error": f"missing field {exc}"})
        except UnknownUserError as exc:
            self._reply(404, {"error": str(exc)})
        except RegistrationConflictError as exc:
            self._reply(409, {"error": str(exc)})
        except VoiceAuthError as exc:
            self._reply(400, {"error": str(exc)})


def make_server(rp: RelyingParty, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """HTTP server bound to (host, port); port 0 picks a free one."""
    handler = type("BoundHandler", (_Handler,), {"rp": rp})
    return ThreadingHTTPServer((host, port), handler)


def serve(store_path: str | Path, host: str = "127.0.0.1", port: int = 8799,
          service_id: str = "default") -> None:
    """Run the relying party until interrupted."""
    rp = RelyingParty(store_path, service_id=service_id)
    server = make_server(rp, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
