"""Exception hierarchy shared by every navgraph module."""

from __future__ import annotations


class NavGraphError(Exception):
    """Base class for all errors raised by navgraph."""


# -- environment / episode files -------------------------------------------

class ParseError(NavGraphError):
    """A file could not be decoded or does not match the expected layout."""


class ValidationError(NavGraphError, ValueError):
    """Input parsed but violates an invariant.

    ``offending`` carries the id (or value) that broke the rule, so callers
    can report it without scraping the message.
    """

    def __init__(self, message: str, offending: object = None):
        super().__init__(message)
        self.offending = offending


class UnknownViewpoint(NavGraphError, LookupError):
    def __init__(self, viewpoint_id: str):
        super().__init__(f"unknown viewpoint {viewpoint_id!r}")
        self.viewpoint_id = viewpoint_id


# -- geometry / evaluation -------------------------------------------------

class DegenerateDirection(NavGraphError, ValueError):
    """Bearing requested between two points with the same x-y projection."""


class Unreachable(NavGraphError):
    def __init__(self, source: str, target: str):
        super().__init__(f"{target!r} is not reachable from {source!r}")
        self.source = source
        self.target = target


class EmptyInput(NavGraphError, ValueError):
    pass


# -- observation / prompts -------------------------------------------------

class MissingSummaries(NavGraphError):
    """No stored direction summary and no summarizer to produce one."""


class EmptySummary(NavGraphError):
    """The summarizer returned blank text."""


class TemplateError(NavGraphError, ValueError):
    pass


class ArityError(TemplateError):
    pass


class EmptyHistory(NavGraphError, ValueError):
    pass


# -- backends --------------------------------------------------------------

class BackendError(NavGraphError):
    """Any failure while obtaining a completion."""


class AuthError(BackendError):
    pass


class BackendTimeoutError(BackendError, TimeoutError):
    pass


class RateLimitExhausted(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class ReplayExhausted(BackendError):
    pass


class NoCandidates(BackendError):
    pass


# -- response parsing ------------------------------------------------------

class ResponseParseError(NavGraphError):
    """The model's reply could not be turned into a legal decision."""


class MissingAction(ResponseParseError):
    pass


class EmptyActionToken(ResponseParseError):
    pass


class HallucinatedViewpoint(ResponseParseError):
    def __init__(self, token: str, candidates):
        self.token = token
        self.candidates = tuple(sorted(candidates))
        legal = ", ".join(self.candidates) or "none"
        super().__init__(f"viewpoint {token!r} is not a candidate (legal: {legal})")
