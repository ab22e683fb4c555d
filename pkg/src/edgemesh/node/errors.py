"""Errors raised by node components and carried over the wire.

Every error has a stable ``code`` (the class name) and an HTTP status, so the
client side can rebuild the same exception from a JSON error body.
"""

from __future__ import annotations


class NodeError(Exception):
    status = 500

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_body(self) -> dict:
        return {"error": self.code, "message": str(self)}


class Unreachable(NodeError):
    status = 503


class Refused(NodeError):
    status = 409


class RuntimeFailure(NodeError):
    status = 500


class NotFound(NodeError):
    status = 404


class UnknownSensor(NodeError):
    status = 404


class NoSampleYet(NodeError):
    status = 409


class UnknownSubscription(NodeError):
    status = 404


class UnknownActuator(NodeError):
    status = 404


class BadRequest(NodeError):
    status = 400


ERRORS = {
    cls.__name__: cls
    for cls in (
        Unreachable,
        Refused,
        RuntimeFailure,
        NotFound,
        UnknownSensor,
        NoSampleYet,
        UnknownSubscription,
        UnknownActuator,
        BadRequest,
    )
}


def from_body(body: dict, default=NodeError) -> NodeError:
    cls = ERRORS.get(str(body.get("error")), default)
    return cls(body.get("message", ""))
