"""The verification bottleneck: metadata-filtered digests of project
deliverables compared against a pinned manifest.

Whole-file checksums break on outputs that embed volatile metadata (dates
in comment headers, for example), so entries may carry a strip-comments
filter: every line whose first byte equals the filter's prefix character
is dropped, newline included, before hashing. The manifest is a TSV file
(`path<TAB>algorithm<TAB>digest<TAB>filter`) so it can be re-pinned and
diffed without touching recipes.
"""

from __future__ import annotations

import concurrent.futures as cf
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import DslSyntaxError, FileMissing
from .parser import DIGEST_LENGTHS, _HEX_RE

FILTER_NONE = "none"
FILTER_STRIP = "strip-comments"


@dataclass(frozen=True)
class Filter:
    kind: str = FILTER_NONE
    prefix: str = "#"

    def __post_init__(self) -> None:
        if self.kind not in (FILTER_NONE, FILTER_STRIP):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if len(self.prefix) != 1 or ord(self.prefix) > 127:
            raise ValueError("filter prefix must be a single ASCII character")

    @classmethod
    def parse(cls, text: str) -> "Filter":
        if text == FILTER_NONE:
            return cls(FILTER_NONE)
        if text == FILTER_STRIP:
            return cls(FILTER_STRIP, "#")
        if text.startswith(FILTER_STRIP + ":") and len(text) == len(FILTER_STRIP) + 2:
            return cls(FILTER_STRIP, text[-1])
        raise ValueError(f"unknown filter spec {text!r}")

    def serialize(self) -> str:
        if self.kind == FILTER_NONE:
            return FILTER_NONE
        return f"{FILTER_STRIP}:{self.prefix}"


@dataclass(frozen=True)
class VerificationEntry:
    path: str  # relative to the build directory
    algorithm: str
    expected: str
    filter: Filter = Filter()

    def __post_init__(self) -> None:
        if self.algorithm not in DIGEST_LENGTHS:
            raise ValueError(f"unsupported algorithm {self.algorithm!r}")
        if len(self.expected) != DIGEST_LENGTHS[self.algorithm] or not _HEX_RE.fullmatch(self.expected):
            raise ValueError(
                f"{self.path}: {self.algorithm} digest must be "
                f"{DIGEST_LENGTHS[self.algorithm]} hex chars"
            )


@dataclass(frozen=True)
class EntryResult:
    path: str
    status: str  # "ok" | "mismatch" | "missing"
    actual: str | None = None


@dataclass
class VerificationReport:
    results: list[EntryResult]

    @property
    def ok(self) -> bool:
        return all(r.status == "ok" for r in self.results)

    def failing(self) -> list[EntryResult]:
        return [r for r in self.results if r.status != "ok"]


def filtered_digest(path: str | Path, filt: Filter, algorithm: str) -> str:
    """Digest of the file after applying the metadata filter.

    strip-comments drops every line whose first byte is the prefix
    character (raw byte comparison, no whitespace skipping), so the
    result is deterministic for arbitrary content.
    """
    path = Path(path)
    if not path.is_file():
        raise FileMissing(str(path))
    h = hashlib.new(algorithm)
    if filt.kind == FILTER_NONE:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
        return h.hexdigest()
    prefix = filt.prefix.encode("ascii")
    with open(path, "rb") as fh:
        data = fh.read()
    for line in data.splitlines(keepends=True):
        if line[:1] == prefix:
            continue
        h.update(line)
    return h.hexdigest()


def verify_entry(entry: VerificationEntry, build_dir: str | Path) -> EntryResult:
    full = Path(build_dir) / entry.path
    if not full.is_file():
        return EntryResult(entry.path, "missing")
    actual = filtered_digest(full, entry.filter, entry.algorithm)
    if actual == entry.expected.lower():
        return EntryResult(entry.path, "ok", actual)
    return EntryResult(entry.path, "mismatch", actual)


def verify_all(entries: list[VerificationEntry], build_dir: str | Path) -> VerificationReport:
    """Check every entry, with no short-circuit, so the report names every
    failing file. Order of the report follows the entry list."""
    if len(entries) <= 1:
        return VerificationReport([verify_entry(e, build_dir) for e in entries])
    with cf.ThreadPoolExecutor(max_workers=min(8, len(entries))) as pool:
        results = list(pool.map(lambda e: verify_entry(e, build_dir), entries))
    return VerificationReport(results)


def record_manifest(
    paths: list[str],
    filt: Filter,
    algorithm: str,
    build_dir: str | Path,
) -> str:
    """Pin the given build-relative paths at their current digests.

    Emits manifest text sorted by path; verifying unchanged files against
    it afterwards passes by construction.
    """
    lines = []
    for rel in sorted(set(paths)):
        digest = filtered_digest(Path(build_dir) / rel, filt, algorithm)
        lines.append(f"{rel}\t{algorithm}\t{digest}\t{filt.serialize()}\n")
    return "".join(lines)


def parse_manifest(text: str, origin: str = "verify.conf") -> list[VerificationEntry]:
    """Parse the TSV manifest; blank lines and `#` comments are ignored."""
    entries: list[VerificationEntry] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DslSyntaxError(origin, lineno, "expected path<TAB>algorithm<TAB>digest<TAB>filter")
        path, algorithm, digest, filter_text = parts
        try:
            entries.append(
                VerificationEntry(path, algorithm, digest.lower(), Filter.parse(filter_text))
            )
        except ValueError as exc:
            raise DslSyntaxError(origin, lineno, str(exc)) from None
    return entries


def serialize_manifest(entries: list[VerificationEntry]) -> str:
    lines = [
        f"{e.path}\t{e.algorithm}\t{e.expected}\t{e.filter.serialize()}\n"
        for e in sorted(entries, key=lambda e: e.path)
    ]
    return "".join(lines)
