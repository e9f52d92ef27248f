"""
Exception hierarchy shared by every loftsim module.

All errors subclass ``ValueError`` as well as ``LoftSimError`` so callers that
only know about ``ValueError`` keep working.
"""


class LoftSimError(Exception):
    """Base class for every error raised by loftsim"""


class ConfigurationError(LoftSimError, ValueError):
    """Invalid topology, scenario configuration or prefix map"""


class DomainError(LoftSimError, ValueError):
    """Input outside the mathematical domain of an operation"""


class DuplicateRuleError(LoftSimError, ValueError):
    """A rule was installed for a key that is already present"""


class RoutingError(LoftSimError, ValueError):
    """Unknown host, address or unreachable destination"""


class ProbeError(LoftSimError, ValueError):
    """Reconnaissance cannot proceed against the probed network"""


class ModelError(LoftSimError, ValueError):
    """Malformed model document or missing feature at prediction time"""
