"""Black-box REST API fuzzing guided by a property graph of schemas and operations."""

__version__ = "0.1.0"
