"""Per-service signing credentials derived from the enrollment template.

Seed = HMAC-SHA256(device_salt, template_bytes || 0x00 || service_id); the
seed expands to an Ed25519 key pair. Keys are a deterministic function of
(template, salt, service), so distinct services get unlinkable credentials
and a deleted credential can always be re-derived. Private material is
never persisted: the store holds only the salt and public keys. Signing is
gated on a live accepting authentication decision.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey, Ed25519PublicKey)
from cryptography.hazmat.primitives.serialization import (
    Encoding, PublicFormat)

from .exceptions import LockedCredentialError, VoiceAuthError
from .identity import EnrollmentTemplate

KEY_ALGORITHM = "ed25519"
SALT_BYTES = 32


def canonical_json(obj) -> bytes:
    """Sorted-key, no-whitespace JSON encoding used for anything signed."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode().rstrip("=")


def b64url_decode(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


@dataclass(frozen=True)
class QuantizedTemplate:
    """Fixed-length bytes from the enrollment mean embedding.

    Each component of the unit vector is snapped to a signed 8-bit grid
    over [-1, 1]. Only the stored template is ever quantized, never a
    per-utterance embedding.
    """

    data: bytes

    @classmethod
    def from_template(cls, template: EnrollmentTemplate) -> "QuantizedTemplate":
        vec = template.mean_embedding.vector
        grid = np.clip(np.round(vec * 127.0), -127, 127).astype(np.int8)
        return cls(data=grid.tobytes())


@dataclass(frozen=True)
class CredentialKeyPair:
    """Deterministic per-service signing keys; locked until a live accept."""

    seed: bytes
    public_key: bytes
    service_id: str
    algorithm: str = KEY_ALGORITHM
    unlocked: bool = False

    def private(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.seed)


@dataclass(frozen=True)
class SignedPayload:
    payload: bytes
    signature: bytes
    public_key: bytes
    nonce: bytes = b""


def generate_device_salt() -> bytes:
    """One-time per-device salt from the OS CSPRNG."""
    return secrets.token_bytes(SALT_BYTES)


def derive_seed(template: QuantizedTemplate, device_salt: bytes,
                service_id: str) -> bytes:
    """32-byte signing seed, bit-exact HMAC-SHA256 of template and service."""
    if not service_id:
        raise VoiceAuthError("service_id must be non-empty")
    if len(device_salt) != SALT_BYTES:
        raise VoiceAuthError(f"device salt must be {SALT_BYTES} bytes")
    message = template.data + b"\x00" + service_id.encode()
    return hmac.new(device_salt, message, hashlib.sha256).digest()


def keypair_from_seed(seed: bytes, service_id: str = "",
                      unlocked: bool = False) -> CredentialKeyPair:
    """Expand a 32-byte seed into an Ed25519 key pair."""
    if len(seed) != 32:
        raise VoiceAuthError("seed must be exactly 32 bytes")
    private = Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return CredentialKeyPair(seed=seed, public_key=public,
                             service_id=service_id, unlocked=unlocked)


def unlock_keypair(kp: CredentialKeyPair, decision) -> CredentialKeyPair:
    """Unlock signing with an accepting fused decision; reject otherwise."""
    if not getattr(decision, "accept", False):
        raise LockedCredentialError(
            "credential stays locked: no accepting authentication decision")
    return replace(kp, unlocked=True)


def sign_payload(kp: CredentialKeyPair, payload: bytes,
                 nonce: bytes | None = None) -> SignedPayload:
    """Sign payload || nonce. Ed25519 is deterministic, so identical inputs
    produce identical signatures."""
    if not kp.unlocked:
        raise LockedCredentialError(
            "credential locked: authenticate before signing")
    nonce = nonce or b""
    signature = kp.private().sign(payload + nonce)
    return SignedPayload(payload=payload, signature=signature,
                         public_key=kp.public_key, nonce=nonce)


def verify_signature(public_key: bytes, payload: bytes,
                     nonce: bytes | None, signature: bytes) -> bool:
    """True iff the signature covers payload || nonce under the public key."""
    if len(public_key) != 32:
        raise VoiceAuthError("ed25519 public key must be 32 bytes")
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(
            signature, payload + (nonce or b""))
        return True
    except InvalidSignature:
        return False


def registration_message(user_id: str, kp: CredentialKeyPair) -> dict:
    """Registration body sent to the relying party: public material only."""
    return {"user_id": user_id,
            "public_key_b64": b64url(kp.public_key),
            "alg": kp.algorithm}


def assertion_message(user_id: str, signed: SignedPayload) -> dict:
    """Assertion body for /verify: payload, nonce, signature, nothing else."""
    return {"user_id": user_id,
            "payload_b64": b64url(signed.payload),
            "nonce_b64": b64url(signed.nonce),
            "sig_b64": b64url(signed.signature)}


@dataclass
class CredentialStore:
    """Local JSON store: device salt plus public keys per (user, service).

    Private seeds are never written; they are re-derived from the stored
    quantized template and salt on demand.
    """

    path: Path
    salt: bytes = b""
    users: dict = field(default_factory=dict)

    @classmethod
    def open(cls, path: str | Path) -> "CredentialStore":
        path = Path(path)
        if path.exists():
            data = json.loads(path.read_text())
            if data.get("version") != 1:
                raise VoiceAuthError(f"unsupported credential store: {path}")
            return cls(path=path, salt=b64url_decode(data["salt_b64"]),
                       users=data["users"])
        store = cls(path=path, salt=generate_device_salt(), users={})
        store.save()
        return store

    def save(self) -> None:
        payload = {"version": 1, "salt_b64": b64url(self.salt),
                   "users": self.users}
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=1) + "\n")
        tmp.replace(self.path)

    def add_credential(self, user_id: str, kp: CredentialKeyPair) -> None:
        self.users.setdefault(user_id, {})[kp.service_id] = {
            "salt_ref": "device",
            "public_key_b64": b64url(kp.public_key),
            "algorithm": kp.algorithm,
        }
        self.save()

    def derive(self, user_id: str, service_id: str,
               template: QuantizedTemplate) -> CredentialKeyPair:
        """Re-derive the key pair; checks it matches the stored public key."""
        seed = derive_seed(template, self.salt, service_id)
        kp = keypair_from_seed(seed, service_id)
        stored = self.users.get(user_id, {}).get(service_id)
        if stored and stored["public_key_b64"] != b64url(kp.public_key):
            raise VoiceAuthError(
                "re-derived public key does not match the stored credential "
                "(template or salt changed)")
        return kp
