"""Per-target build state, persisted under `<build>/state/build-state.tsv`.

One line per target: path, epoch seconds of the last successful build,
the target's content digest, and the semicolon-joined digests of its
prerequisites as they were at build time (in rule order). Digests are
lowercase hex SHA-256; digest-mode staleness compares against them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

STATE_RELPATH = "state/build-state.tsv"


def file_digest(path: str | Path, algorithm: str = "sha256") -> str:
    """Streaming content digest, lowercase hex."""
    h = hashlib.new(algorithm)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class TargetRecord:
    target: str
    built_at: int
    target_digest: str
    prereq_digests: tuple[str, ...]


@dataclass
class BuildState:
    records: dict[str, TargetRecord] = field(default_factory=dict)

    def get(self, target: str) -> TargetRecord | None:
        return self.records.get(target)

    def put(self, record: TargetRecord) -> None:
        self.records[record.target] = record

    def forget(self, target: str) -> None:
        self.records.pop(target, None)

    @classmethod
    def load(cls, build_dir: str | Path) -> "BuildState":
        path = Path(build_dir) / STATE_RELPATH
        state = cls()
        if not path.is_file():
            return state
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            target, epoch, tdigest, prereqs = (line.split("\t") + ["", "", "", ""])[:4]
            state.put(
                TargetRecord(
                    target=target,
                    built_at=int(epoch),
                    target_digest=tdigest,
                    prereq_digests=tuple(d for d in prereqs.split(";") if d),
                )
            )
        return state

    def save(self, build_dir: str | Path) -> None:
        path = Path(build_dir) / STATE_RELPATH
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = []
        for target in sorted(self.records):
            rec = self.records[target]
            lines.append(
                "\t".join(
                    [
                        rec.target,
                        str(rec.built_at),
                        rec.target_digest,
                        ";".join(rec.prereq_digests),
                    ]
                )
            )
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
