"""
Artifact stores
===============

A uniform key-value interface for the artifacts a run produces: the manifest,
JSON reports and CSV curves.

Key Concepts:
-------------
- ArtifactStore: minimal interface (get, set, delete, all) over text artifacts.
- InMemoryArtifactStore: ephemeral, used by tests and by library callers.
- FileArtifactStore: one run directory, one file per key.

Usage Examples:
---------------
store = FileArtifactStore("runs/divide-001")
store.write_model("report.json", report)
store.write_csv("curves.csv", ["eps", "delta"], rows)
manifest = RunConfig.from_json(store.get("manifest.json"))

Design Notes:
-------------
- Floats are written with ``repr`` so reruns are byte-identical.
"""

import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from carleman.logging import logger


class ArtifactStore:
    """Minimal key-value artifact store interface."""

    def get(self, key: str) -> Optional[str]:
        raise NotImplementedError

    def set(self, key: str, value: str) -> None:
        raise NotImplementedError

    def delete(self, key: str) -> None:
        raise NotImplementedError

    def all(self) -> Dict[str, str]:
        raise NotImplementedError

    def write_model(self, key: str, model: BaseModel) -> str:
        text = model.model_dump_json(indent=2)
        self.set(key, text)
        return text

    def write_json(self, key: str, payload) -> str:
        text = json.dumps(payload, indent=2, sort_keys=True)
        self.set(key, text)
        return text

    def write_csv(
        self, key: str, header: Sequence[str], rows: Iterable[Sequence[float]]
    ) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        text = buf.getvalue()
        self.set(key, text)
        return text

    def read_csv(self, key: str) -> List[Dict[str, str]]:
        text = self.get(key)
        if text is None:
            raise KeyError(f"Artifact '{key}' not found.")
        return list(csv.DictReader(io.StringIO(text)))


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class InMemoryArtifactStore(ArtifactStore):
    def __init__(self):
        self._store: Dict[str, str] = {}

    def get(self, key: str) -> Optional[str]:
        return self._store.get(key)

    def set(self, key: str, value: str) -> None:
        self._store[key] = value

    def delete(self, key: str) -> None:
        if key in self._store:
            del self._store[key]

    def all(self) -> Dict[str, str]:
        return dict(self._store)


class FileArtifactStore(ArtifactStore):
    """Stores each artifact as a file inside one run directory."""

    def __init__(self, dir_path):
        self.dir_path = Path(dir_path)
        self.dir_path.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        if Path(key).name != key:
            raise ValueError(f"Artifact key must be a plain file name: {key!r}")
        return self.dir_path / key

    def get(self, key: str) -> Optional[str]:
        path = self._path(key)
        if not path.exists():
            return None
        return path.read_text()

    def set(self, key: str, value: str) -> None:
        self._path(key).write_text(value)
        logger.debug("Artifact written", path=str(self._path(key)), size=len(value))

    def delete(self, key: str) -> None:
        path = self._path(key)
        if path.exists():
            path.unlink()

    def all(self) -> Dict[str, str]:
        return {
            p.name: p.read_text()
            for p in sorted(self.dir_path.iterdir())
            if p.is_file() and p.suffix in (".json", ".csv")
        }
