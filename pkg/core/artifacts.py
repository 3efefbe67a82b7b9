import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import funcy as fu
import numpy as np
import pandas as pd

from core.errors import MissingArtifact, _raise_error

logger = logging.getLogger(__name__)

__all__ = (
    "config_hash",
    "ArtifactWriter",
    "read_table",
    "read_header",
)

FLOAT_FORMAT = "%.17g"

# the output block only says where files go, not what they contain
UNHASHED_BLOCKS = ("output",)


def _canonical(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def config_hash(document: Mapping[str, Any]) -> str:
    payload = fu.omit(dict(document), UNHASHED_BLOCKS)
    payload_str = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload_str.encode("utf-8")).hexdigest()


def _render(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for column in frame.columns:
        if frame[column].dtype == bool:
            frame[column] = frame[column].map({True: "true", False: "false"})
    return frame


class ArtifactWriter:
    """Atomic writer for one command's output files.

    Used as a context manager: if the block raises, every file written
    through the writer is removed again.
    """

    def __init__(
        self,
        directory: Union[str, Path],
        config_hash: str,
        seed: int,
        tool: str = "regrowth",
        version: str = "0",
    ):
        self.directory = Path(directory)
        self.config_hash = config_hash
        self.seed = seed
        self.tool = tool
        self.version = version
        self.written: List[Path] = []

    def __enter__(self) -> "ArtifactWriter":
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            self.discard()
        return False

    def discard(self) -> None:
        for path in self.written:
            try:
                path.unlink()
                logger.info(f"Removed partial artifact {path}")
            except FileNotFoundError:
                pass
        self.written = []

    def header(self, name: str) -> str:
        return "".join(
            f"# {key}: {value}\n"
            for key, value in (
                ("tool", self.tool),
                ("version", self.version),
                ("config_hash", self.config_hash),
                ("seed", self.seed),
                ("file", name),
            )
        )

    def _atomic_write(self, name: str, payload: bytes) -> Path:
        target = self.directory / name
        fd, tmp_name = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        self.written.append(target)
        logger.debug(f"Wrote {target}", extra={"artifact": name, "bytes": len(payload)})
        return target

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        body = _render(frame).to_csv(index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
        return self._atomic_write(name, (self.header(name) + body).encode("utf-8"))

    def write_svg(self, name: str, payload: bytes) -> Path:
        """Write an SVG with the header lines as an XML comment after the declaration."""
        stamp = f"<!--\n{self.header(name)}-->\n".encode("utf-8")
        if payload.startswith(b"<?xml"):
            declaration, _, body = payload.partition(b"\n")
            return self._atomic_write(name, declaration + b"\n" + stamp + body)
        return self._atomic_write(name, stamp + payload)


def read_header(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        _raise_error(MissingArtifact, error_details={str(path): ["file not found; run the producing command first"]})

    meta = {}
    with open(path, "r") as f:
        for line in f:
            if not meta and line.startswith(("<?xml", "<!--")):
                continue
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
    return meta


def read_table(path: Union[str, Path], expected_hash: Optional[str] = None) -> pd.DataFrame:
    meta = read_header(path)
    if expected_hash is not None and meta.get("config_hash") != expected_hash:
        _raise_error(MissingArtifact, error_details={
            str(path): [f"written for config {meta.get('config_hash', '?')[:12]}, not {expected_hash[:12]}"],
        })
    return pd.read_csv(path, comment="#")
