"""Append-only progress journal with per-line integrity hashes.

Each line is ``<sha256 of body> <json body>\\n``.  A line whose hash does not
match (a torn write from a crash) is ignored with a warning; on the next
writer open the file is truncated back to the last intact line so new
entries never fuse with garbage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from ._runtime import crash_point, fault_injection_active

log = logging.getLogger(__name__)

DONE = "__done__"


@dataclass(frozen=True)
class JournalEntry:
    task: str
    checkpoint: str
    payload_hash: str
    timestamp: float


def payload_digest(*parts):
    """Stable hash of bytes/str parts, used as a checkpoint payload hash."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode()
        h.update(len(part).to_bytes(8, "little"))
        h.update(part)
    return h.hexdigest()


def _encode(entry):
    body = json.dumps(asdict(entry), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(body.encode()).hexdigest()
    return f"{digest} {body}\n".encode()


def _decode(line):
    digest, sep, body = line.partition(" ")
    if not sep or hashlib.sha256(body.encode()).hexdigest() != digest:
        return None
    try:
        return JournalEntry(**json.loads(body))
    except (TypeError, ValueError):
        return None


class Journal:
    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries = None

    def _scan(self):
        """Return (entries, byte offset just past the last intact line)."""
        if not self.path.exists():
            return [], 0
        raw = self.path.read_bytes()
        entries, good_end, offset = [], 0, 0
        for chunk in raw.splitlines(keepends=True):
            offset += len(chunk)
            entry = None
            if chunk.endswith(b"\n"):
                try:
                    entry = _decode(chunk[:-1].decode())
                except UnicodeDecodeError:
                    entry = None
            if entry is None:
                log.warning("journal %s: ignoring corrupt entry at byte %d",
                            self.path, offset - len(chunk))
                continue
            entries.append(entry)
            good_end = offset
        return entries, good_end

    def entries(self):
        with self._lock:
            if self._entries is None:
                self._entries, _ = self._scan()
            return list(self._entries)

    def repair(self):
        """Drop any torn tail so appends start on a clean line boundary."""
        with self._lock:
            entries, good_end = self._scan()
            if self.path.exists() and self.path.stat().st_size != good_end:
                with open(self.path, "r+b") as fh:
                    fh.truncate(good_end)
                    fh.flush()
                    os.fsync(fh.fileno())
            self._entries = entries

    def commit(self, task, checkpoint, payload_hash=""):
        entry = JournalEntry(task, str(checkpoint), payload_hash, time.time())
        data = _encode(entry)
        with self._lock:
            if self._entries is None:
                self._entries, _ = self._scan()
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                if fault_injection_active():
                    half = len(data) // 2
                    os.write(fd, data[:half])
                    crash_point("journal-torn-write")
                    os.write(fd, data[half:])
                else:
                    os.write(fd, data)
                os.fsync(fd)
            finally:
                os.close(fd)
            self._entries.append(entry)
        crash_point("journal-committed")
        return entry

    def checkpoints(self, task):
        return {e.checkpoint: e.payload_hash for e in self.entries() if e.task == task}

    def is_done(self, task):
        return DONE in self.checkpoints(task)

    def mark_done(self, task, payload_hash=""):
        return self.commit(task, DONE, payload_hash)

    def task_states(self):
        states = {}
        for e in self.entries():
            if e.checkpoint == DONE:
                states[e.task] = "done"
            else:
                states.setdefault(e.task, "running")
        return states


class TaskCheckpoints:
    """Checkpoint view of one task, handed to long-running module functions."""

    def __init__(self, journal, task):
        self.journal = journal
        self.task = task
        self._done = journal.checkpoints(task)

    def done(self, checkpoint):
        return str(checkpoint) in self._done

    def ids(self):
        return list(self._done)

    def payload(self, checkpoint):
        return self._done.get(str(checkpoint))

    def commit(self, checkpoint, payload_hash=""):
        self.journal.commit(self.task, checkpoint, payload_hash)
        self._done[str(checkpoint)] = payload_hash
