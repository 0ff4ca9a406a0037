"""Resolve pinned inputs: local directories first, network last, always
checksum-gated.

No unverified bytes ever reach a path that rules can read: files land in
`<build>/inputs/` only after their digest matches the manifest. The
transport is injectable so tests exercise retries and offline behaviour
against in-process stubs; the real transport uses urllib with proxies
taken from explicit configuration only, never from the host environment.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import ssl
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from .errors import (
    ChecksumMismatch,
    DownloadFailed,
    NotFound,
    OfflineAndMissing,
)
from .parser import InputSpec

log = logging.getLogger("lineage_forge.fetch")

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = (1.0, 5.0, 30.0)


@dataclass(frozen=True)
class Mismatch:
    actual_hex: str


def verify_checksum(path: str | Path, algorithm: str, expected_hex: str) -> Mismatch | None:
    """Stream the file and compare digests case-insensitively.

    Returns None when the digest matches, otherwise a Mismatch carrying
    the actual digest.
    """
    h = hashlib.new(algorithm)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    actual = h.hexdigest()
    if actual == expected_hex.lower():
        return None
    return Mismatch(actual)


class TransientNetworkError(Exception):
    """Connection-level or 5xx failure; eligible for retry."""


class TerminalNetworkError(Exception):
    """4xx failure; retrying cannot help."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"HTTP {status}")
        self.status = status


class Transport(Protocol):
    def fetch(self, url: str, sink) -> None:
        """Stream the body of `url` into the writable binary `sink`.

        Raises TransientNetworkError for retryable failures and
        TerminalNetworkError for 4xx responses.
        """


class UrllibTransport:
    """HTTP(S) GET via urllib. Certificate verification is on unless
    `insecure` is set (which is logged loudly)."""

    def __init__(self, proxies: dict[str, str] | None = None, insecure: bool = False,
                 timeout: float = 60.0):
        handlers: list[urllib.request.BaseHandler] = [
            urllib.request.ProxyHandler(proxies or {})
        ]
        if insecure:
            log.warning("TLS certificate verification DISABLED for downloads")
            context = ssl.create_default_context()
            context.check_hostname = False
            context.verify_mode = ssl.CERT_NONE
            handlers.append(urllib.request.HTTPSHandler(context=context))
        self._opener = urllib.request.build_opener(*handlers)
        self._timeout = timeout

    def fetch(self, url: str, sink) -> None:
        try:
            with self._opener.open(url, timeout=self._timeout) as resp:
                shutil.copyfileobj(resp, sink)
        except urllib.error.HTTPError as exc:
            if 400 <= exc.code < 500:
                raise TerminalNetworkError(exc.code, str(exc)) from exc
            raise TransientNetworkError(str(exc)) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransientNetworkError(str(exc)) from exc


def download(
    url: str,
    dest: str | Path,
    transport: Transport,
    retries: int = DEFAULT_RETRIES,
    backoff_seconds: tuple[float, ...] = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
) -> None:
    """Fetch `url` to `dest` atomically (temp file + rename).

    Connection and 5xx failures are retried up to `retries` times with the
    given backoff schedule; a 404 (any 4xx) is terminal immediately. No
    partial file is ever left at `dest`.
    """
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    attempts = 0
    last_error = ""
    for attempt in range(retries + 1):
        attempts += 1
        fd, tmp_name = tempfile.mkstemp(dir=dest.parent, prefix=dest.name + ".part-")
        tmp = Path(tmp_name)
        try:
            with os.fdopen(fd, "wb") as sink:
                transport.fetch(url, sink)
            os.replace(tmp, dest)
            if attempt > 0:
                log.info("download of %s succeeded on attempt %d", url, attempts)
            return
        except TerminalNetworkError as exc:
            tmp.unlink(missing_ok=True)
            if exc.status == 404:
                raise NotFound(url) from exc
            raise DownloadFailed(url, attempts, str(exc)) from exc
        except TransientNetworkError as exc:
            tmp.unlink(missing_ok=True)
            last_error = str(exc)
            log.info("download attempt %d for %s failed: %s", attempts, url, exc)
            if attempt < retries:
                delay = backoff_seconds[min(attempt, len(backoff_seconds) - 1)]
                sleep(delay)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
    raise DownloadFailed(url, attempts, last_error)


class InputResolver:
    """Places verified inputs under `<build>/inputs/`.

    Search order per spec'd pin: already-imported build copy, then the
    optional host input directory, then the network. Per-filename locks
    serialize concurrent resolution of the same file.
    """

    def __init__(
        self,
        build_dir: str | Path,
        input_dir: str | Path | None = None,
        transport: Transport | None = None,
        offline: bool = False,
        retries: int = DEFAULT_RETRIES,
        backoff_seconds: tuple[float, ...] = DEFAULT_BACKOFF,
    ):
        self.inputs_dir = Path(build_dir) / "inputs"
        self.input_dir = Path(input_dir) if input_dir else None
        self.transport = transport
        self.offline = offline
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, filename: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(filename, threading.Lock())

    def resolve(self, spec: InputSpec) -> Path:
        """Return the verified build-directory path for one input pin."""
        with self._lock_for(spec.filename):
            return self._resolve_locked(spec)

    def _resolve_locked(self, spec: InputSpec) -> Path:
        dest = self.inputs_dir / spec.filename

        if dest.exists():
            mismatch = verify_checksum(dest, spec.algorithm, spec.digest)
            if mismatch is None:
                return dest
            raise ChecksumMismatch(str(dest), "build inputs", spec.digest, mismatch.actual_hex)

        if self.input_dir is not None:
            candidate = self.input_dir / spec.filename
            if candidate.exists():
                mismatch = verify_checksum(candidate, spec.algorithm, spec.digest)
                if mismatch is not None:
                    raise ChecksumMismatch(
                        str(candidate), "input directory", spec.digest, mismatch.actual_hex
                    )
                self.inputs_dir.mkdir(parents=True, exist_ok=True)
                tmp = dest.with_name(dest.name + ".copying")
                shutil.copyfile(candidate, tmp)
                os.replace(tmp, dest)
                return dest

        if self.offline:
            raise OfflineAndMissing(spec.name, spec.filename)
        if self.transport is None:
            raise DownloadFailed(spec.url, 0, "no transport configured")

        # Fetch to a staging name so unverified bytes never sit at a path
        # rules can read; only a digest-checked file is moved into place.
        self.inputs_dir.mkdir(parents=True, exist_ok=True)
        staging = dest.with_name(dest.name + ".fetching")
        download(
            spec.url,
            staging,
            self.transport,
            retries=self.retries,
            backoff_seconds=self.backoff_seconds,
        )
        mismatch = verify_checksum(staging, spec.algorithm, spec.digest)
        if mismatch is not None:
            staging.unlink(missing_ok=True)
            raise ChecksumMismatch(spec.url, "download", spec.digest, mismatch.actual_hex)
        os.replace(staging, dest)
        return dest

    def resolve_all(self, specs: list[InputSpec]) -> dict[str, Path]:
        """Resolve every pin; independent files may resolve concurrently."""
        results: dict[str, Path] = {}
        if len(specs) <= 1:
            for spec in specs:
                results[spec.name] = self.resolve(spec)
            return results
        import concurrent.futures as cf

        with cf.ThreadPoolExecutor(max_workers=min(8, len(specs))) as pool:
            futures = {pool.submit(self.resolve, spec): spec for spec in specs}
            for fut in cf.as_completed(futures):
                results[futures[fut].name] = fut.result()
        return results
