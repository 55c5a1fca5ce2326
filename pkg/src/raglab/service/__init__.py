"""FastAPI service exposing the retrieval, prompting, and experiment
pipeline over HTTP. The CLI drives this app in-process by default; pointing
it at a remote server changes nothing but the transport."""

from .app import create_app

__all__ = ["create_app"]
