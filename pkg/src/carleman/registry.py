from typing import Callable, Dict, Generic, List, Optional, TypeVar

from carleman.errors import UnknownBuiltin
from carleman.logging import logger

T = TypeVar("T")


class BuiltinRegistry(Generic[T]):
    """Named factories addressable from the command line.

    Names are either plain (``factorial``) or parametrised (``gevrey:2``); the
    text after the first colon is handed to the factory as its argument.
    """

    def __init__(self, kind: str):
        self.kind = kind
        self._factories: Dict[str, Callable[..., T]] = {}
        self._parametrised: Dict[str, bool] = {}

    def builtin(self, name: str, parametrised: bool = False):
        """A decorator to register a factory under ``name``."""

        def decorator(factory: Callable[..., T]) -> Callable[..., T]:
            self.add(name, factory, parametrised)
            return factory

        return decorator

    def add(self, name: str, factory: Callable[..., T], parametrised: bool = False):
        if name in self._factories:
            logger.warning(f"Builtin '{name}' is already registered. Overwriting.")
        self._factories[name] = factory
        self._parametrised[name] = parametrised
        logger.debug("Registered builtin", kind=self.kind, name=name)

    def remove(self, name: str) -> None:
        if name in self._factories:
            del self._factories[name]
            del self._parametrised[name]
        else:
            logger.warning(f"Attempted to remove builtin '{name}' which was not found.")

    def names(self) -> List[str]:
        return sorted(
            f"{name}:<param>" if self._parametrised[name] else name
            for name in self._factories
        )

    def __contains__(self, spec: str) -> bool:
        name, _ = _split(spec)
        return name in self._factories

    def resolve(self, spec: str, **kwargs) -> T:
        name, param = _split(spec)
        if name not in self._factories:
            logger.error(f"Unknown {self.kind} builtin", spec=spec, known=self.names())
            raise UnknownBuiltin(f"{self.kind} builtin '{spec}' not found.", spec=spec)
        factory = self._factories[name]
        if self._parametrised[name]:
            if param is None:
                raise UnknownBuiltin(
                    f"{self.kind} builtin '{name}' needs a parameter ('{name}:<param>').",
                    spec=spec,
                )
            return factory(param, **kwargs)
        if param is not None:
            raise UnknownBuiltin(
                f"{self.kind} builtin '{name}' takes no parameter.", spec=spec
            )
        return factory(**kwargs)


def _split(spec: str):
    name, sep, param = spec.strip().partition(":")
    return name, (param if sep else None)


SEQUENCES: BuiltinRegistry = BuiltinRegistry("sequence")
WEIGHT_FUNCTIONS: BuiltinRegistry = BuiltinRegistry("weight function")
TEST_FUNCTIONS: BuiltinRegistry = BuiltinRegistry("test function")
