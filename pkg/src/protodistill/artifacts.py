"""Serialization and integrity layer.

Array containers are ZIP archives of ``.npy`` entries (NPY format v1.0),
readable by :func:`numpy.load`.  Entries are stored uncompressed with a fixed
timestamp so that identical arrays always produce identical bytes, which keeps
SHA-256 digests reproducible across runs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
_CHUNK = 1 << 20

SUPPORTED_KINDS = ("f8", "i8", "U")


def _coerce(name: str, value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype.kind == "f":
        if arr.dtype != np.float64:
            raise FormatError(f"array {name!r}: only 64-bit reals are stored, got {arr.dtype}")
    elif arr.dtype.kind in "iu":
        if arr.dtype != np.int64:
            arr = arr.astype(np.int64)
    elif arr.dtype.kind == "U":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    elif arr.dtype.kind == "b":
        arr = arr.astype(np.int64)
    else:
        raise FormatError(f"array {name!r}: unsupported element type {arr.dtype}")
    return arr if arr.flags.c_contiguous else arr.copy(order="C")


def container_bytes(arrays: Mapping[str, object]) -> bytes:
    """Serialize named arrays into deterministic NPZ bytes."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, value in arrays.items():
            if not name or "/" in name:
                raise FormatError(f"invalid array name {name!r}")
            arr = _coerce(name, value)
            payload = io.BytesIO()
            np.lib.format.write_array(payload, arr, version=(1, 0), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_STORED
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload.getvalue())
    return buf.getvalue()


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_container(arrays: Mapping[str, object], path: str | os.PathLike) -> str:
    """Write ``arrays`` to ``path`` and return the hex SHA-256 of the file."""
    data = container_bytes(arrays)
    atomic_write_bytes(path, data)
    return sha256_bytes(data)


def read_container_bytes(data: bytes) -> dict[str, np.ndarray]:
    if not data:
        raise FormatError("empty container")
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise FormatError(f"not a ZIP container: {exc}") from exc
    out: dict[str, np.ndarray] = {}
    with zf:
        for info in zf.infolist():
            if not info.filename.endswith(".npy"):
                raise FormatError(f"unexpected entry {info.filename!r}")
            name = info.filename[: -len(".npy")]
            if name in out:
                raise FormatError(f"duplicate entry {name!r}")
            try:
                raw = zf.read(info)
                arr = np.lib.format.read_array(io.BytesIO(raw), allow_pickle=False)
            except (zipfile.BadZipFile, ValueError, EOFError, OSError) as exc:
                raise FormatError(f"entry {name!r} is malformed: {exc}") from exc
            if arr.dtype.kind not in "fiU" or (arr.dtype.kind == "f" and arr.dtype != np.float64):
                raise FormatError(f"entry {name!r} has unsupported element type {arr.dtype}")
            out[name] = arr
    return out


def read_container(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return read_container_bytes(Path(path).read_bytes())


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(_CHUNK), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Stable JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | os.PathLike, obj) -> str:
    text = canonical_json(obj)
    atomic_write_text(path, text)
    return sha256_bytes(text.encode("utf-8"))


def read_json(path: str | os.PathLike):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


# -- checksum files ---------------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    path: str
    ok: bool
    reason: str = ""


def format_checksums(entries: Iterable[tuple[str, str]]) -> str:
    """Render ``(digest, relpath)`` pairs in ``sha256sum`` text format."""
    return "".join(f"{digest}  {rel}\n" for digest, rel in entries)


def parse_checksums(text: str) -> list[tuple[str, str]]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        digest, sep, rel = line.partition("  ")
        if not sep:
            # sha256sum binary-mode marker
            digest, sep, rel = line.partition(" *")
        digest = digest.strip().lower()
        if not sep or len(digest) != 64 or any(c not in "0123456789abcdef" for c in digest):
            raise FormatError(f"checksum line {lineno} is malformed: {line!r}")
        entries.append((digest, rel))
    return entries


def update_checksums(sums_path: str | os.PathLike, files: Iterable[str | os.PathLike]) -> None:
    """Add or refresh entries for ``files`` (paths relative to the sums file's dir)."""
    sums_path = Path(sums_path)
    root = sums_path.parent
    current: dict[str, str] = {}
    if sums_path.exists():
        for digest, rel in parse_checksums(sums_path.read_text()):
            current[rel] = digest
    for f in files:
        f = Path(f)
        rel = os.path.relpath(f if f.is_absolute() else root / f, root)
        current[Path(rel).as_posix()] = sha256_file(root / rel)
    atomic_write_text(sums_path, format_checksums((d, r) for r, d in sorted(current.items())))


def verify_checksums(sums_path: str | os.PathLike) -> list[VerifyResult]:
    sums_path = Path(sums_path)
    root = sums_path.parent
    results = []
    for digest, rel in parse_checksums(sums_path.read_text()):
        target = root / rel
        if not target.is_file():
            results.append(VerifyResult(rel, False, "missing"))
            continue
        actual = sha256_file(target)
        results.append(VerifyResult(rel, actual == digest, "" if actual == digest else "digest mismatch"))
    return results


def recorded_digest(path: str | os.PathLike, sums_name: str = "SHA256SUMS") -> str | None:
    """Digest recorded for ``path`` in a sibling checksum file, if any."""
    path = Path(path)
    sums = path.parent / sums_name
    if not sums.is_file():
        return None
    for digest, rel in parse_checksums(sums.read_text()):
        if Path(rel).as_posix() == path.name:
            return digest
    return None


# -- CSV tables -------------------------------------------------------------

def write_csv(path: str | os.PathLike, header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    atomic_write_text(path, text)
    return sha256_bytes(text.encode("utf-8"))


def read_csv(path: str | os.PathLike, header: list[str] | None = None) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if header is not None and reader.fieldnames != header:
            raise FormatError(f"{path}: expected header {header}, got {reader.fieldnames}")
        return list(reader)
