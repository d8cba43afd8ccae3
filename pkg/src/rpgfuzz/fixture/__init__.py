"""In-process Petstore service used as the deterministic test target."""

from pathlib import Path

from .petstore import FixtureState, handle, remove_pet, serve

SPEC_PATH = Path(__file__).with_name("petstore.yaml")

__all__ = ["FixtureState", "SPEC_PATH", "handle", "remove_pet", "serve"]
