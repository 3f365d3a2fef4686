import io
import os
import csv
import json
import shutil
import hashlib
import logging

from pathlib import Path
from contextlib import contextmanager
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Union

from app.errors import SchemaError

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def get_content_hash(content: bytes) -> str:
    """Generate a content hash for fingerprints and manifests"""
    return hashlib.sha256(content).hexdigest()


def canonical_json(obj: Any) -> str:
    """Key-sorted compact JSON used wherever a stable fingerprint is needed"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def ensure_output_directory(path: PathLike) -> Path:
    """Ensure the output directory exists"""
    directory = Path(path)
    if not directory.exists():
        logger.debug(f"💾 Creating directory: {directory}")
        directory.mkdir(parents=True)
    return directory


def _write_text(path: PathLike, text: str) -> None:
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True)
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def write_json(path: PathLike, obj: Any, indent: int = 2) -> None:
    _write_text(path, json.dumps(obj, indent=indent, ensure_ascii=False) + "\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise SchemaError(f"Cannot read file: {e.strerror}", path=str(path))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaError(f"Malformed JSON: {e}", path=str(path))


def dumps_jsonl(records: Iterable[Dict[str, Any]]) -> str:
    return "".join(json.dumps(record, ensure_ascii=False) + "\n" for record in records)


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> None:
    _write_text(path, dumps_jsonl(records))


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    records = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                if line.strip():
                    try:
                        records.append(json.loads(line))
                    except json.JSONDecodeError as e:
                        raise SchemaError(f"Malformed JSON line: {e.msg}", path=f"{path}:{number}")
    except OSError as e:
        raise SchemaError(f"Cannot read file: {e.strerror}", path=str(path))
    return records


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    _write_text(path, dumps_csv(header, rows))


def write_text(path: PathLike, text: str) -> None:
    _write_text(path, text)


@contextmanager
def output_guard(*paths: PathLike) -> Iterator[None]:
    """
    Remove every listed output that did not exist before the block if the
    block raises, then re-raise.
    """
    fresh = [Path(p) for p in paths if p is not None and not Path(p).exists()]
    try:
        yield
    except BaseException:
        for target in fresh:
            if target.is_dir():
                logger.warning(f"🧹 Removing partial output directory: {target}")
                shutil.rmtree(target, ignore_errors=True)
            elif target.exists():
                logger.warning(f"🧹 Removing partial output file: {target}")
                os.unlink(target)
        raise
