"""Statistical and behavioral metadata attached to process elements.

Costs, selectivities, branch probabilities and behavioral flags live in a
JSON sidecar file keyed by element id, so the process model files stay
untouched. Entries are sparse; anything not given explicitly falls back to
the catalog defaults (cost 0, selectivity 1, pipelining, not parallelizable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

__all__ = ["StatEntry", "StatsCatalog", "StatsError", "load_stats", "loads_stats"]


class StatsError(ValueError):
    """Raised when a stats document is malformed or violates an invariant."""


@dataclass(frozen=True)
class StatEntry:
    """Fully resolved metadata for one element.

    ``cost`` is the average time units per invocation, ``selectivity`` the
    average ratio of output to input tokens. The optional fields only make
    sense for specific element kinds (gateway branches, loops, boundary
    events, timers) and stay ``None`` when not applicable.
    """

    cost: float = 0.0
    selectivity: float = 1.0
    branch_probability: float | None = None
    loop_count: float | None = None
    interrupted_cost: float | None = None
    wait_duration: float | None = None
    pipelining: bool = True
    parallelizable: bool = False
    max_degree: int = 1

    def __post_init__(self) -> None:
        if self.cost < 0:
            raise StatsError(f"cost must be >= 0, got {self.cost}")
        if self.selectivity <= 0:
            raise StatsError(f"selectivity must be > 0, got {self.selectivity}")
        if self.branch_probability is not None and not 0.0 <= self.branch_probability <= 1.0:
            raise StatsError(
                f"branch_probability must be in [0, 1], got {self.branch_probability}"
            )
        if self.loop_count is not None and self.loop_count < 1:
            raise StatsError(f"loop_count must be >= 1, got {self.loop_count}")
        if self.interrupted_cost is not None and self.interrupted_cost < 0:
            raise StatsError(f"interrupted_cost must be >= 0, got {self.interrupted_cost}")
        if self.wait_duration is not None and self.wait_duration < 0:
            raise StatsError(f"wait_duration must be >= 0, got {self.wait_duration}")
        if self.max_degree < 1:
            raise StatsError(f"max_degree must be >= 1, got {self.max_degree}")


_FIELD_NAMES = tuple(f.name for f in fields(StatEntry))
_BOOL_FIELDS = {"pipelining", "parallelizable"}
_INT_FIELDS = {"max_degree"}


def _check_fields(raw: dict, where: str) -> dict:
    """Validate raw field types for one entry dict; returns a clean copy."""
    if not isinstance(raw, dict):
        raise StatsError(f"{where}: expected an object, got {type(raw).__name__}")
    clean = {}
    for key, value in raw.items():
        if key not in _FIELD_NAMES:
            raise StatsError(f"{where}: unknown field {key!r}")
        if key in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise StatsError(f"{where}: field {key!r} must be true/false")
            clean[key] = value
        elif key in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise StatsError(f"{where}: field {key!r} must be an integer")
            clean[key] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise StatsError(f"{where}: field {key!r} must be a number")
            clean[key] = float(value)
    return clean


class StatsCatalog:
    """Per-element statistics with field-wise fallback to defaults.

    Entries keep only the fields that were given explicitly; ``resolve``
    merges them over the defaults so lookups always return a complete
    :class:`StatEntry`. Immutable after construction.
    """

    def __init__(self, entries: dict[str, dict] | None = None, defaults: dict | None = None):
        self._defaults_raw = _check_fields(defaults or {}, "defaults")
        self._defaults = StatEntry(**self._defaults_raw)
        self._entries: dict[str, dict] = {}
        for element_id, raw in (entries or {}).items():
            clean = _check_fields(raw, f"entries[{element_id!r}]")
            # Construct the merged entry eagerly so invariants fail at load time.
            StatEntry(**{**self._defaults_raw, **clean})
            self._entries[element_id] = clean

    @property
    def defaults(self) -> StatEntry:
        return self._defaults

    @property
    def element_ids(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def has_entry(self, element_id: str) -> bool:
        return element_id in self._entries

    def resolve(self, element_id: str) -> StatEntry:
        """Return the fully populated entry for ``element_id``.

        Total: unknown ids resolve to the defaults, partial entries are
        merged field-wise over the defaults.
        """
        raw = self._entries.get(element_id)
        if raw is None:
            return self._defaults
        return StatEntry(**{**self._defaults_raw, **raw})

    def given_fields(self, element_id: str) -> frozenset[str]:
        """Names of the fields explicitly present for ``element_id``."""
        return frozenset(self._entries.get(element_id, ()))

    def to_dict(self) -> dict:
        return {
            "defaults": dict(self._defaults_raw),
            "entries": {eid: dict(raw) for eid, raw in self._entries.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StatsCatalog):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def loads_stats(text: str | bytes) -> StatsCatalog:
    """Parse a stats sidecar document from its JSON text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StatsError(f"stats document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise StatsError("stats document must be a JSON object")
    unknown = set(doc) - {"defaults", "entries"}
    if unknown:
        raise StatsError(f"unknown top-level keys: {sorted(unknown)}")
    entries = doc.get("entries", {})
    if not isinstance(entries, dict):
        raise StatsError("'entries' must be an object keyed by element id")
    return StatsCatalog(entries=entries, defaults=doc.get("defaults"))


def load_stats(source) -> StatsCatalog:
    """Load a stats sidecar from a path or a readable binary/text stream."""
    if hasattr(source, "read"):
        return loads_stats(source.read())
    with open(source, "rb") as handle:
        return loads_stats(handle.read())
