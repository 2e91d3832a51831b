# utils/errors.py
"""
Exception hierarchy for the Edge Zero Trust framework
- One root (ZTAError) so callers at the surface can catch everything
- Grouped by concern: requester format, validation, infrastructure,
  consensus, ledger, tokens / persistence managers, access, harness
"""


class ZTAError(Exception):
    """Base class for every error raised by the framework."""


class ConfigurationError(ZTAError):
    pass


# --------------------------
# X-Requester format
# --------------------------
class RequesterFormatError(ZTAError):
    pass


class MissingField(RequesterFormatError):
    def __init__(self, name: str):
        super().__init__(f"missing field: {name}")
        self.name = name


class UnknownField(RequesterFormatError):
    def __init__(self, name: str):
        super().__init__(f"unknown field: {name}")
        self.name = name


class MalformedSyntax(RequesterFormatError):
    pass


# --------------------------
# Validation inputs
# --------------------------
class ValidationFailure(ZTAError):
    pass


class MissingCategory(ZTAError):
    pass


# --------------------------
# Infrastructure
# --------------------------
class InfrastructureError(ZTAError):
    pass


class StoreUnavailable(InfrastructureError):
    pass


class HistoryUnavailable(InfrastructureError):
    pass


class PMUnreachable(InfrastructureError):
    pass


class BrokerUnavailable(InfrastructureError):
    pass


class LedgerUnavailable(InfrastructureError):
    pass


# --------------------------
# Consensus
# --------------------------
class NoEngines(ZTAError):
    pass


class ConsensusFailed(ZTAError):
    def __init__(self, request_id: str, votes: dict, abstentions: int = 0):
        super().__init__(
            f"no majority for {request_id}: votes={votes} abstentions={abstentions}"
        )
        self.request_id = request_id
        self.votes = votes
        self.abstentions = abstentions


class ValidationTimeout(ConsensusFailed):
    """Round left undecided because engines missed the response deadline."""


# --------------------------
# Ledger
# --------------------------
class UnauthorizedPeer(ZTAError):
    pass


class DuplicateTransaction(ZTAError):
    pass


class OrdererUnavailable(ZTAError):
    pass


class PeerDown(ZTAError):
    pass


class CorruptChain(ZTAError):
    """An exported chain line that cannot be read back as a block."""

    def __init__(self, index: int, reason: str):
        super().__init__(index, reason)
        self.index = index
        self.reason = reason

    def __str__(self):
        return f"block {self.index}: {self.reason}"


# --------------------------
# Tokens & persistence managers
# --------------------------
class TokenError(ZTAError):
    pass


class UnknownToken(TokenError):
    pass


class ExpiredToken(TokenError):
    pass


class InsufficientRights(TokenError):
    pass


class PMRejectedToken(ZTAError):
    pass


class DuplicateActor(ZTAError):
    pass


class UnknownActor(ZTAError):
    pass


# --------------------------
# Access
# --------------------------
class Forbidden(ZTAError):
    pass


class Unauthorized(ZTAError):
    def __init__(self, message: str, failures=()):
        super().__init__(message)
        self.failures = tuple(failures)


class MissingCredentials(ZTAError):
    pass


# --------------------------
# Harness
# --------------------------
class UnknownEngine(ZTAError):
    pass


class TestSetupFailure(ZTAError):
    __test__ = False  # keep pytest from collecting it


class DeploymentConflict(ZTAError):
    pass


class StartupTimeout(ZTAError):
    pass
