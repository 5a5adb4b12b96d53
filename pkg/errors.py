"""
Error taxonomy for adslite.

Every error carries a machine-readable ``reason`` (the class name) and a
human-readable ``detail``. The HTTP layer and the CLI render both.
"""

from typing import Dict


class AdsLiteError(Exception):
    status = 400

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    @property
    def reason(self) -> str:
        return type(self).__name__

    def to_dict(self) -> Dict[str, str]:
        return {"status": "error", "reason": self.reason, "detail": self.detail}

    def __str__(self) -> str:
        return f"{self.reason}: {self.detail}" if self.detail else self.reason


# corpus
class MalformedBibcode(AdsLiteError):
    pass


class DuplicateBibcode(AdsLiteError):
    pass


class NonEmptyDatabasesRequired(AdsLiteError):
    pass


class EmptyAuthorList(AdsLiteError):
    pass


class UnknownDatabaseId(AdsLiteError):
    pass


class MalformedRecord(AdsLiteError):
    pass


# index
class SynonymTableError(AdsLiteError):
    pass


# query
class EmptyQuery(AdsLiteError):
    pass


class MalformedDate(AdsLiteError):
    pass


class InvalidQuery(AdsLiteError):
    pass


class UnknownGroup(AdsLiteError):
    pass


# classify
class EmptyDatabase(AdsLiteError):
    pass


class UnknownDatabase(AdsLiteError):
    pass


# tokens
class UnknownToken(AdsLiteError):
    status = 404


# libraries
class EmptyLibraryName(AdsLiteError):
    pass


# service
class ConfigError(AdsLiteError):
    pass
