"""Canonical byte encoding, SHA-256 digests and keyed signatures.

Every hash in the ledger is taken over :func:`canonical_encode` output, so the
encoding must never change shape: sorted keys, no whitespace, UTF-8, decimal
integers.  Digests travel as 64 lowercase hex characters.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from typing import Any, Mapping

DIGEST_SIZE = 32


class EncodingError(TypeError):
    """Raised for values that have no canonical encoding."""


@dataclass(frozen=True, order=True)
class Digest:
    raw: bytes

    def __post_init__(self):
        if not isinstance(self.raw, bytes) or len(self.raw) != DIGEST_SIZE:
            raise ValueError(f"digest must be exactly {DIGEST_SIZE} bytes")

    def hex(self) -> str:
        return self.raw.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        if len(text) != 2 * DIGEST_SIZE or text.lower() != text:
            raise ValueError(f"not a lowercase 64-hex digest: {text!r}")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex()

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:12]}…)"


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


def _normalise(value: Any) -> Any:
    if isinstance(value, Digest):
        return value.hex()
    if isinstance(value, bool):
        # bool is an int subclass; refuse it rather than silently emit true/false
        raise EncodingError("booleans have no canonical encoding")
    if value is None or isinstance(value, (str, int)):
        return value
    if isinstance(value, Mapping):
        out = {}
        for key, item in value.items():
            if not isinstance(key, str):
                raise EncodingError(f"map keys must be strings, got {type(key).__name__}")
            out[key] = _normalise(item)
        return out
    if isinstance(value, (list, tuple)):
        return [_normalise(item) for item in value]
    to_canonical = getattr(value, "to_canonical", None)
    if callable(to_canonical):
        return _normalise(to_canonical())
    raise EncodingError(f"cannot canonically encode {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Encode a tree of maps, lists, strings, integers and digests.

    ``None`` is accepted as the absent marker.  Objects exposing a
    ``to_canonical()`` method are encoded through it.
    """
    # Python orders str keys by code point, which matches UTF-8 byte order.
    text = json.dumps(
        _normalise(value),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )
    return text.encode("utf-8")


def canonical_decode(data: bytes | str) -> Any:
    """Inverse of :func:`canonical_encode`; digests come back as hex strings."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def digest(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


def hash_value(value: Any) -> Digest:
    """Shorthand for ``digest(canonical_encode(value))``."""
    return digest(canonical_encode(value))


@dataclass(frozen=True)
class KeyedSignature:
    """Accountability marker: ``mac = sha256(secret || content)``."""

    signer: str
    mac: Digest

    def to_canonical(self) -> dict:
        return {"signer": self.signer, "mac": self.mac.hex()}

    @classmethod
    def from_canonical(cls, data: Mapping) -> "KeyedSignature":
        return cls(signer=data["signer"], mac=Digest.from_hex(data["mac"]))


def sign(secret: bytes, content: bytes, signer: str) -> KeyedSignature:
    if not secret:
        raise ValueError("signing secret must be non-empty")
    if not signer:
        raise ValueError("signer id must be non-empty")
    return KeyedSignature(signer=signer, mac=digest(secret + content))


def verify(signature: KeyedSignature, secret: bytes, content: bytes, signer: str | None = None) -> bool:
    """Check a signature; when ``signer`` is given it must match as well."""
    if signer is not None and signature.signer != signer:
        return False
    if not secret:
        return False
    expected = digest(secret + content)
    return hmac.compare_digest(expected.raw, signature.mac.raw)


def derive_secret(seed: int | str, signer: str) -> bytes:
    """Deterministic per-identity secret, so test vectors and replays reproduce."""
    return digest(canonical_encode({"seed": str(seed), "signer": signer})).raw
