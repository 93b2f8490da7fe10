"""Email/password authentication with token-based sessions.

Failures are uniform (no user-enumeration distinction) and throttled per
email after repeated attempts.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import Optional

from .errors import AuthenticationError
from .models import AccountRole, UserAccount
from .store import Store

TOKEN_TTL_MS = 12 * 3600 * 1000
THROTTLE_AFTER = 5
THROTTLE_WINDOW_MS = 60_000


def hash_password(password: str, salt: Optional[str] = None) -> str:
    salt = salt or secrets.token_hex(8)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt.encode(), 50_000).hex()
    return f"{salt}${digest}"


def verify_password(password: str, credential: str) -> bool:
    try:
        salt, _ = credential.split("$", 1)
    except ValueError:
        return False
    return secrets.compare_digest(hash_password(password, salt), credential)


@dataclass
class SessionToken:
    token: str
    user_id: str
    expires_at: int
    role: AccountRole


class AuthService:
    def __init__(self, store: Store):
        self.store = store
        self.tokens: dict[str, SessionToken] = {}
        self._failures: dict[str, list[int]] = {}

    def authenticate(self, email: str, password: str, now: int) -> SessionToken:
        recent = [t for t in self._failures.get(email, []) if now - t < THROTTLE_WINDOW_MS]
        self._failures[email] = recent
        if len(recent) >= THROTTLE_AFTER:
            raise AuthenticationError("too many attempts, retry later")
        user = self.store.user_by_email(email)
        if user is None or not user.credential or not verify_password(password, user.credential):
            self._failures.setdefault(email, []).append(now)
            raise AuthenticationError("invalid credentials")
        token = SessionToken(
            token=secrets.token_urlsafe(24),
            user_id=user.id,
            expires_at=now + TOKEN_TTL_MS,
            role=user.account_role,
        )
        self.tokens[token.token] = token
        return token

    def revoke(self, token: str) -> None:
        self.tokens.pop(token, None)

    def resolve(self, token: str, now: int) -> UserAccount:
        record = self.tokens.get(token)
        if record is None or now >= record.expires_at:
            raise AuthenticationError("invalid or expired token")
        user = self.store.users.get(record.user_id)
        if user is None:
            raise AuthenticationError("unknown account")
        return user
