# utils/auth.py
"""
Credential utilities
- API keys are stored hashed, never in clear
- Constant-time comparison of presented keys
- Credential guard used by the client-side components
"""

import hashlib
import hmac
import secrets

from utils.errors import MissingCredentials


# -------------------------
# API key hashing
# -------------------------
def hash_api_key(api_key: str) -> str:
    return hashlib.sha256(api_key.encode("utf-8")).hexdigest()


def verify_api_key(api_key: str, api_key_hash: str) -> bool:
    if not api_key or not api_key_hash:
        return False
    return hmac.compare_digest(hash_api_key(api_key), api_key_hash)


def generate_api_key() -> str:
    return secrets.token_urlsafe(24)


# -------------------------
# Require credentials (guard)
# -------------------------
def require_credentials(actor_id: str, api_key: str):
    """Both the actor id and its API key must be filled out before anything is sent."""
    missing = [name for name, value in (("actor", actor_id), ("auth_token", api_key)) if not value]
    if missing:
        raise MissingCredentials(f"credentials required: {', '.join(missing)}")
    return actor_id, api_key
