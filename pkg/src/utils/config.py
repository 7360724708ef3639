"""
Configuration Base

Every configuration object in the project is an immutable pydantic model built
on ConfigModel, so invalid values surface as ConfigError and configs can be
hashed and shared between threads.
"""

from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from utils.errors import ConfigError
from utils.utils import load_json, save_json

T = TypeVar("T", bound="ConfigModel")


class ConfigModel(BaseModel):
    """Frozen pydantic model that raises ConfigError on invalid input."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    def __init__(self, **data: Any):
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid {type(self).__name__}: {e}") from e

    @classmethod
    def from_dict(cls: Type[T], data: Dict[str, Any]) -> T:
        """
        Build a config from a plain dictionary.

        Args:
            data: Field values (nested configs as dictionaries)

        Returns:
            The validated config
        """
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid {cls.__name__}: {e}") from e

    @classmethod
    def from_json(cls: Type[T], file_path: Union[str, Path]) -> T:
        """
        Load a config from a JSON file.

        Args:
            file_path: Path to the JSON file

        Returns:
            The validated config
        """
        return cls.from_dict(load_json(file_path))

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to JSON-compatible primitives (aliases used for field names)."""
        return self.model_dump(mode="json", by_alias=True)

    def save(self, file_path: Union[str, Path]) -> None:
        """
        Save the config as JSON.

        Args:
            file_path: Path to the output file
        """
        save_json(self.to_dict(), file_path)

    def updated(self: T, **changes: Any) -> T:
        """
        Return a validated copy with some fields replaced.

        Args:
            changes: Field values to replace

        Returns:
            The new config
        """
        data = self.model_dump()
        data.update(changes)
        return type(self).from_dict(data)
