"""HS256 bearer tokens (JWT compact form) with a fixed 24-hour lifetime."""

from __future__ import annotations

import base64
import hashlib
import hmac
import json

TOKEN_LIFETIME_S = 24 * 3600
_HEADER = {"alg": "HS256", "typ": "JWT"}


class AuthError(Exception):
    pass


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _unb64(text: str) -> bytes:
    try:
        return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except (ValueError, TypeError) as exc:
        raise AuthError("bad token encoding") from exc


def _sign(signing_input: str, secret: bytes) -> str:
    return _b64(hmac.new(secret, signing_input.encode("ascii"), hashlib.sha256).digest())


def issue_token(subject: str, secret: bytes, issued_at: int) -> str:
    claims = {"sub": subject, "iat": int(issued_at), "exp": int(issued_at) + TOKEN_LIFETIME_S}
    head = _b64(json.dumps(_HEADER, separators=(",", ":")).encode())
    body = _b64(json.dumps(claims, separators=(",", ":"), sort_keys=True).encode())
    signing_input = f"{head}.{body}"
    return f"{signing_input}.{_sign(signing_input, secret)}"


def verify_token(token: str, secret: bytes, now: float) -> dict:
    """Return the claims of a valid, unexpired token; raise AuthError otherwise."""
    if not isinstance(token, str) or token.count(".") != 2:
        raise AuthError("malformed token")
    head, body, sig = token.split(".")
    try:
        signing_input = f"{head}.{body}"
        expected = _sign(signing_input, secret)
    except UnicodeEncodeError:
        raise AuthError("malformed token") from None
    if not hmac.compare_digest(expected.encode(), sig.encode("utf-8", "surrogatepass")):
        raise AuthError("bad signature")
    try:
        header = json.loads(_unb64(head))
        claims = json.loads(_unb64(body))
    except (ValueError, UnicodeDecodeError) as exc:
        raise AuthError("malformed token") from exc
    if not isinstance(header, dict) or header.get("alg") != "HS256" or not isinstance(claims, dict):
        raise AuthError("unsupported token")
    exp, iat = claims.get("exp"), claims.get("iat")
    if not isinstance(exp, int) or not isinstance(iat, int) or exp - iat != TOKEN_LIFETIME_S:
        raise AuthError("invalid claims")
    if now >= exp:
        raise AuthError("token expired")
    return claims


def bearer(headers: dict) -> str | None:
    for key, value in headers.items():
        if key.lower() == "authorization" and isinstance(value, str) and value.startswith("Bearer "):
            return value[len("Bearer "):].strip()
    return None
