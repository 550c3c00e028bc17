"""Append-only changeset log and snapshot files.

Log format (documented bit-exactly in docs/formats.md): one record per line,

    <length>:<crc32>:<payload>\\n

where payload is compact JSON with sorted keys (UTF-8), length is the decimal
byte length of the payload, and crc32 is the zero-padded 8-digit lowercase
hex CRC-32 of the payload bytes. A record is only readable when its length
and checksum both match, which makes line writes effectively atomic: a crash
mid-append leaves a torn final line that recovery drops, never a torn state.

A defect anywhere before the final line means real corruption and refuses to
load. Snapshots are standalone JSON documents of the full state at one
revision, written every N commits.
"""

from __future__ import annotations

import json
import os
import zlib
from pathlib import Path

from .errors import CorruptLog

SNAPSHOT_PREFIX = "snapshot-"


def dumps_canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode_record(record: dict) -> bytes:
    payload = dumps_canonical(record).encode("utf-8")
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    return b"%d:%08x:" % (len(payload), crc) + payload + b"\n"


def decode_line(line: bytes):
    """Parse one complete log line; returns the record dict or None if damaged."""
    if not line.endswith(b"\n"):
        return None
    body = line[:-1]
    first = body.find(b":")
    second = body.find(b":", first + 1)
    if first <= 0 or second <= first:
        return None
    try:
        length = int(body[:first])
        crc = int(body[first + 1:second], 16)
    except ValueError:
        return None
    payload = body[second + 1:]
    if len(payload) != length or (zlib.crc32(payload) & 0xFFFFFFFF) != crc:
        return None
    try:
        return json.loads(payload.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return None


def read_log(path: Path) -> tuple[list[dict], int]:
    """Read every intact record.

    Returns (records, good_byte_length). A damaged or incomplete final line is
    treated as a torn append and dropped; damage before it raises CorruptLog
    naming the last replayable revision.
    """
    records: list[dict] = []
    good_bytes = 0
    if not path.exists():
        return records, good_bytes
    data = path.read_bytes()
    offset = 0
    while offset < len(data):
        newline = data.find(b"\n", offset)
        chunk = data[offset:] if newline < 0 else data[offset:newline + 1]
        record = decode_line(chunk)
        if record is None:
            is_final = newline < 0 or newline + 1 >= len(data)
            if is_final:
                break
            last_good = records[-1]["rev"] if records else 0
            raise CorruptLog(f"unreadable record at byte {offset}", last_good)
        records.append(record)
        offset = newline + 1
        good_bytes = offset
    return records, good_bytes


def append_record(handle, record: dict, fsync: bool = True) -> None:
    handle.write(encode_record(record))
    handle.flush()
    if fsync:
        os.fsync(handle.fileno())


def snapshot_path(directory: Path, rev: int) -> Path:
    return directory / f"{SNAPSHOT_PREFIX}{rev:08d}.json"


def write_snapshot(directory: Path, rev: int, state: dict) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = snapshot_path(directory, rev)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(dumps_canonical({"rev": rev, **state}) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def read_snapshot(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def list_snapshots(directory: Path) -> list[tuple[int, Path]]:
    if not directory.is_dir():
        return []
    found = []
    for entry in directory.iterdir():
        name = entry.name
        if name.startswith(SNAPSHOT_PREFIX) and name.endswith(".json"):
            try:
                found.append((int(name[len(SNAPSHOT_PREFIX):-5]), entry))
            except ValueError:
                continue
    return sorted(found)
