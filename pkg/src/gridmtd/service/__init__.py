"""HTTP service wrapping the workflow stages."""

from .app import app, create_app, resolve_request
from .workflows import COMPONENT_ERRORS, ComponentError

__all__ = ["app", "create_app", "resolve_request",
           "COMPONENT_ERRORS", "ComponentError"]
