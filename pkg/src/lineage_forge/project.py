"""Project lifecycle: configure, load, make, verify, dist, clean.

A project is a directory tree with a workflow entry file at
`reproduce/analysis/make/top.wf` which includes configuration files and
stage workflow files in order. Everything the engine builds lives under
an external build directory reachable through the `.build` symlink, so
rule paths stay relative and the project stays relocatable.
"""

from __future__ import annotations

import grp
import logging
import os
import shutil
import tarfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import __version__
from .errors import (
    BuildDirNotWritable,
    ChecksumMismatch,
    LineageError,
    MissingStageMacroFile,
    UnknownGoal,
    VerificationFailed,
)
from .executor import TIMESTAMP, EnvPolicy, ExecutionReport, execute
from .fetch import InputResolver, Transport, UrllibTransport
from .graph import BUILT, LineageGraph, Origin, Rule, ancestors, build_graph
from .parser import (
    DEFAULT_ENTRY,
    INPUTS_MANIFEST,
    VERIFY_MANIFEST,
    ConfigParam,
    InputSpec,
    build_env,
    flatten_statements,
    instantiate_rules,
    parse_config,
    parse_inputs_manifest,
    serialize_config,
)
from .provenance import (
    acknowledgment_text,
    aggregate_macros,
    builtin_macros,
    git_state,
    machine_info,
)
from .software import TARGETS_RELPATH, parse_targets, verify_tarballs, version_macros
from .state import BuildState
from .verify import (
    Filter,
    VerificationEntry,
    VerificationReport,
    filtered_digest,
    parse_manifest,
    serialize_manifest,
    verify_all,
)

log = logging.getLogger("lineage_forge.project")

LOCAL_CONFIG = ".local-config"
BUILD_LINK = ".build"
GOAL_ALIAS = "all"
BUILD_SUBDIRS = ("inputs", "logs", "state", "tex")
AGGREGATE_RELPATH = "tex/project.tex"

EventCallback = Callable[[dict], None]


@dataclass
class LocalConfig:
    """Host-specific settings recorded by `configure`; never committed."""

    build_dir: str
    input_dir: str | None = None
    software_dir: str | None = None
    group: str | None = None
    jobs: int = 1
    tool_path: str = ""
    proxy: str | None = None

    @classmethod
    def load(cls, root: str | Path) -> "LocalConfig":
        path = Path(root) / LOCAL_CONFIG
        if not path.is_file():
            raise LineageError(
                f"project at {root} is not configured (missing {LOCAL_CONFIG}); "
                "run `configure` first"
            )
        values = {p.key: p.value for p in parse_config(path.read_text(encoding="utf-8"),
                                                       LOCAL_CONFIG)}
        if "build-dir" not in values:
            raise LineageError(f"{LOCAL_CONFIG} does not record build-dir")
        return cls(
            build_dir=values["build-dir"],
            input_dir=values.get("input-dir") or None,
            software_dir=values.get("software-dir") or None,
            group=values.get("group") or None,
            jobs=int(values.get("jobs", "1")),
            tool_path=values.get("path", os.defpath),
            proxy=values.get("proxy") or None,
        )

    def save(self, root: str | Path) -> None:
        params = [("build-dir", self.build_dir)]
        if self.input_dir:
            params.append(("input-dir", self.input_dir))
        if self.software_dir:
            params.append(("software-dir", self.software_dir))
        if self.group:
            params.append(("group", self.group))
        params.append(("jobs", str(self.jobs)))
        params.append(("path", self.tool_path))
        if self.proxy:
            params.append(("proxy", self.proxy))
        text = serialize_config(
            [ConfigParam(k, v, Origin(LOCAL_CONFIG, i + 1)) for i, (k, v) in enumerate(params)]
        )
        (Path(root) / LOCAL_CONFIG).write_text(text, encoding="utf-8")

    def resolve_dir(self, root: str | Path, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(root) / p


@dataclass
class Project:
    """A parsed project: statements, environment, rules and graph."""

    root: Path
    entry: str
    env: dict[str, str]
    rules: list[Rule]
    graph: LineageGraph
    goal: str
    stages: list[str] = field(default_factory=list)
    input_specs: list[InputSpec] = field(default_factory=list)

    @classmethod
    def load(cls, root: str | Path, entry: str = DEFAULT_ENTRY) -> "Project":
        root = Path(root)
        files, statements = flatten_statements(entry, root)
        env = build_env(statements, builtins={"BDIR": BUILD_LINK})
        all_rules = instantiate_rules(statements, env)

        goal = None
        rules: list[Rule] = []
        for rule in all_rules:
            if rule.target == GOAL_ALIAS and not rule.recipe and goal is None:
                if len(rule.prerequisites) != 1:
                    raise LineageError(
                        f"{rule.origin}: the '{GOAL_ALIAS}' goal alias must name exactly "
                        "one prerequisite"
                    )
                goal = rule.prerequisites[0]
                continue
            rules.append(rule)
        if goal is None:
            if not rules:
                raise LineageError(f"{entry}: project defines no rules")
            goal = rules[0].target

        graph = build_graph(rules)
        entry_suffix = Path(entry).suffix
        stages = [
            Path(f.path).stem
            for f in files
            if f.path != entry and Path(f.path).suffix == entry_suffix
        ]

        inputs_params: list[ConfigParam] = []
        for loaded in files:
            if loaded.path == INPUTS_MANIFEST:
                latest: dict[str, ConfigParam] = {}
                for param in loaded.parsed.assignments:
                    latest[param.key] = param
                inputs_params = list(latest.values())
        input_specs = parse_inputs_manifest(inputs_params) if inputs_params else []

        return cls(
            root=root,
            entry=entry,
            env=env,
            rules=rules,
            graph=graph,
            goal=goal,
            stages=stages,
            input_specs=input_specs,
        )

    def stage_macro_files(self) -> list[tuple[str, str]]:
        """(stage, build-relative macro path) for every stage that must
        publish one: all but the final (report) stage."""
        return [(s, f"tex/{s}.tex") for s in self.stages[:-1]]

    def macro_targets_declared(self) -> None:
        """Enforce the macro-file convention before running anything."""
        for stage, rel in self.stage_macro_files():
            target = f"{BUILD_LINK}/{rel}"
            if target not in self.graph.rules:
                raise MissingStageMacroFile(stage, target)


def configure(
    root: str | Path,
    build_dir: str | Path,
    input_dir: str | None = None,
    software_dir: str | None = None,
    group: str | None = None,
    jobs: int = 1,
    strict_software: bool = False,
    on_event: EventCallback | None = None,
) -> LocalConfig:
    """Record local directories, create the build tree and the `.build`
    symlink, and verify the pinned software manifest. Idempotent."""
    root = Path(root)
    build_path = Path(build_dir).expanduser()
    if not build_path.is_absolute():
        build_path = (root / build_path).resolve()
    try:
        build_path.mkdir(parents=True, exist_ok=True)
        probe = build_path / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError:
        raise BuildDirNotWritable(str(build_path)) from None
    for sub in BUILD_SUBDIRS:
        (build_path / sub).mkdir(parents=True, exist_ok=True)

    link = root / BUILD_LINK
    if link.is_symlink() or link.exists():
        if link.is_symlink() and Path(os.readlink(link)) == build_path:
            pass
        else:
            if link.is_symlink() or link.is_file():
                link.unlink()
            else:
                raise LineageError(f"{link} exists and is not a symlink")
            link.symlink_to(build_path)
    else:
        link.symlink_to(build_path)

    group_gid: int | None = None
    if group:
        group_gid = grp.getgrnam(group).gr_gid
        for directory in [build_path, *(build_path / s for s in BUILD_SUBDIRS)]:
            try:
                os.chown(directory, -1, group_gid)
            except (PermissionError, OSError):
                log.warning("could not change group of %s to %s", directory, group)
            mode = directory.stat().st_mode
            os.chmod(directory, mode | 0o2070)  # setgid + group rwx

    config = LocalConfig(
        build_dir=str(build_path),
        input_dir=input_dir,
        software_dir=software_dir,
        group=group,
        jobs=jobs,
        tool_path=os.environ.get("PATH", os.defpath),
    )
    config.save(root)
    _ensure_ignored(root, [LOCAL_CONFIG, BUILD_LINK])

    targets_file = root / TARGETS_RELPATH
    if targets_file.is_file():
        entries = parse_targets(targets_file.read_text(encoding="utf-8"))
        tarball_dir = config.resolve_dir(root, software_dir) or (root / "tarballs-unset")
        report = verify_tarballs(entries, tarball_dir)
        for result in report.results:
            if on_event:
                on_event({"event": "software", "name": result.name, "status": result.status})
        mismatches = report.mismatches()
        if mismatches:
            first = mismatches[0]
            entry = next(e for e in entries if e.name == first.name)
            raise ChecksumMismatch(entry.tarball, "software tarball", entry.sha512,
                                   first.actual or "")
        missing = report.missing()
        if missing:
            names = ", ".join(r.name for r in missing)
            if strict_software:
                raise LineageError(f"software tarballs missing (strict mode): {names}")
            log.warning("software tarballs not present locally: %s", names)
    return config


def _ensure_ignored(root: Path, entries: list[str]) -> None:
    ignore = root / ".gitignore"
    existing = ignore.read_text(encoding="utf-8").splitlines() if ignore.is_file() else []
    additions = [e for e in entries if e not in existing]
    if additions:
        text = "".join(line + "\n" for line in existing + additions)
        ignore.write_text(text, encoding="utf-8")


@dataclass
class MakeResult:
    report: ExecutionReport
    verification: VerificationReport | None
    aggregate_path: Path | None
    goal: str


BIBTEX_DIR = "reproduce/software/bibtex"


def _software_builtins(root: Path) -> tuple[str, list, list]:
    targets_file = root / TARGETS_RELPATH
    if not targets_file.is_file():
        return "", [], []
    entries = parse_targets(targets_file.read_text(encoding="utf-8"))
    text, _keys = acknowledgment_text(entries)
    return text, version_macros(entries), entries


def _emit_bibliography(root: Path, build_dir: Path, entries: list) -> Path | None:
    """Concatenate per-software .bib fragments, verbatim, in name order."""
    chunks: list[str] = []
    for entry in entries:
        fragment = root / BIBTEX_DIR / f"{entry.name}.bib"
        if fragment.is_file():
            chunks.append(fragment.read_text(encoding="utf-8"))
    if not chunks:
        return None
    out = build_dir / "tex" / "software.bib"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(chunks), encoding="utf-8")
    return out


def run_make(
    root: str | Path,
    jobs: int | None = None,
    mode: str = TIMESTAMP,
    offline: bool = False,
    serial_verify: bool = False,
    goal: str | None = None,
    transport: Transport | None = None,
    insecure: bool = False,
    on_event: EventCallback | None = None,
) -> MakeResult:
    """The full pipeline: parse, resolve inputs, execute the DAG, verify
    all deliverables, then aggregate the narrative macros."""
    root = Path(root)
    config = LocalConfig.load(root)
    build_dir = Path(config.build_dir)
    project = Project.load(root)
    project.macro_targets_declared()

    the_goal = goal or project.goal
    if the_goal not in project.graph.nodes:
        raise UnknownGoal(the_goal)
    # The verification bottleneck and macro aggregation gate the project's
    # final deliverable; an explicit sub-target build stops after execution.
    partial = the_goal != project.goal

    if project.input_specs:
        if transport is None and not offline:
            proxies = {"http": config.proxy, "https": config.proxy} if config.proxy else {}
            transport = UrllibTransport(proxies=proxies, insecure=insecure)
        resolver = InputResolver(
            build_dir,
            config.resolve_dir(root, config.input_dir),
            transport=transport,
            offline=offline,
        )
        resolved = resolver.resolve_all(project.input_specs)
        if on_event:
            for name in sorted(resolved):
                on_event({"event": "input", "name": name, "path": str(resolved[name])})

    group_gid = grp.getgrnam(config.group).gr_gid if config.group else None
    env_policy = EnvPolicy.hermetic(build_dir, config.tool_path, root)
    n_jobs = jobs if jobs is not None else config.jobs

    state = BuildState.load(build_dir)
    try:
        report = execute(
            project.graph,
            the_goal,
            n_jobs,
            env_policy,
            state,
            mode=mode,
            root=root,
            build_dir=build_dir,
            on_event=on_event,
            group_gid=group_gid,
        )
    finally:
        state.save(build_dir)
    if on_event:
        for target in report.skipped_fresh:
            on_event({"event": "fresh", "target": target})

    if partial:
        return MakeResult(report, None, None, the_goal)

    verification = _verify_stage(root, build_dir, on_event)
    if verification is not None and not verification.ok and serial_verify and n_jobs > 1:
        log.warning("verification failed after a parallel build; retrying serially")
        _remove_built(project, the_goal, root, state)
        state.save(build_dir)
        report = execute(
            project.graph, the_goal, 1, env_policy, state,
            mode=mode, root=root, build_dir=build_dir,
            on_event=on_event, group_gid=group_gid,
        )
        state.save(build_dir)
        verification = _verify_stage(root, build_dir, on_event)
    if verification is not None and not verification.ok:
        raise VerificationFailed([r.path for r in verification.failing()])

    aggregate_path = _aggregate_stage(root, project, build_dir, group_gid, on_event)
    return MakeResult(report, verification, aggregate_path, the_goal)


def _verify_stage(root: Path, build_dir: Path,
                  on_event: EventCallback | None) -> VerificationReport | None:
    manifest = root / VERIFY_MANIFEST
    if not manifest.is_file():
        return None
    entries = parse_manifest(manifest.read_text(encoding="utf-8"), VERIFY_MANIFEST)
    report = verify_all(entries, build_dir)
    if on_event:
        for result in report.results:
            on_event({"event": "verify", "path": result.path, "status": result.status})
    return report


def _aggregate_stage(
    root: Path,
    project: Project,
    build_dir: Path,
    group_gid: int | None,
    on_event: EventCallback | None,
) -> Path:
    software_text, sw_macros, sw_entries = _software_builtins(root)
    builtins = builtin_macros(
        git_state(root),
        machine_info(__version__),
        software_text,
        upstream_commit=project.env.get("upstream-commit"),
    )
    builtins.extend(sw_macros)
    _emit_bibliography(root, build_dir, sw_entries)
    macro_files = [
        (stage, build_dir / rel) for stage, rel in project.stage_macro_files()
    ]
    text = aggregate_macros(macro_files, builtins)
    out = build_dir / AGGREGATE_RELPATH
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    if group_gid is not None:
        try:
            os.chown(out, -1, group_gid)
        except (PermissionError, OSError):
            pass
        os.chmod(out, out.stat().st_mode | 0o060)
    if on_event:
        on_event({"event": "aggregate", "path": str(out)})
    return out


def _remove_built(project: Project, goal: str, root: Path, state: BuildState) -> None:
    """Drop all built files in the goal's closure (serial re-verify path)."""
    for node in ancestors(project.graph, goal):
        if project.graph.nodes[node] == BUILT:
            (root / node).unlink(missing_ok=True)
            state.forget(node)


def run_verify(root: str | Path, on_event: EventCallback | None = None) -> VerificationReport:
    """Standalone verification against the pinned manifest."""
    root = Path(root)
    config = LocalConfig.load(root)
    manifest = root / VERIFY_MANIFEST
    if not manifest.is_file():
        raise LineageError(f"no verification manifest at {VERIFY_MANIFEST}")
    entries = parse_manifest(manifest.read_text(encoding="utf-8"), VERIFY_MANIFEST)
    report = verify_all(entries, Path(config.build_dir))
    if on_event:
        for result in report.results:
            on_event({"event": "verify", "path": result.path, "status": result.status})
    return report


def run_record(
    root: str | Path,
    paths: list[str] | None = None,
    filt: Filter | None = None,
    algorithm: str = "sha256",
) -> list[VerificationEntry]:
    """(Re-)pin the verification manifest.

    With `paths`, those build-relative files are added or re-pinned using
    `filt`/`algorithm`; without, every existing entry is re-pinned
    keeping its own algorithm and filter.
    """
    root = Path(root)
    config = LocalConfig.load(root)
    build_dir = Path(config.build_dir)
    manifest = root / VERIFY_MANIFEST
    entries: dict[str, VerificationEntry] = {}
    if manifest.is_file():
        for entry in parse_manifest(manifest.read_text(encoding="utf-8"), VERIFY_MANIFEST):
            entries[entry.path] = entry
    if paths:
        use_filter = filt or Filter()
        for rel in paths:
            digest = filtered_digest(build_dir / rel, use_filter, algorithm)
            entries[rel] = VerificationEntry(rel, algorithm, digest, use_filter)
    else:
        for rel, entry in list(entries.items()):
            digest = filtered_digest(build_dir / rel, entry.filter, entry.algorithm)
            entries[rel] = VerificationEntry(rel, entry.algorithm, digest, entry.filter)
    result = sorted(entries.values(), key=lambda e: e.path)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    manifest.write_text(serialize_manifest(result), encoding="utf-8")
    return result


def clean(root: str | Path) -> list[str]:
    """Delete built targets (and execution byproducts); keep inputs."""
    root = Path(root)
    config = LocalConfig.load(root)
    build_dir = Path(config.build_dir)
    project = Project.load(root)
    removed: list[str] = []
    for target in project.graph.built():
        path = root / target
        if path.exists():
            path.unlink()
            removed.append(target)
        failed = Path(str(path) + ".failed")
        if failed.exists():
            failed.unlink()
    aggregate = build_dir / AGGREGATE_RELPATH
    if aggregate.exists():
        aggregate.unlink()
        removed.append(str(aggregate))
    state_file = build_dir / "state" / "build-state.tsv"
    if state_file.exists():
        state_file.unlink()
    logs = build_dir / "logs"
    if logs.is_dir():
        shutil.rmtree(logs)
        logs.mkdir()
    return removed


def _tracked_files(root: Path) -> list[str]:
    """Source files for dist: Git's view when available, else a filtered walk."""
    from .provenance import _git

    listing = _git(root, "ls-files")
    if listing is not None:
        return sorted(line for line in listing.splitlines() if line.strip())
    files: list[str] = []
    skip_names = {".git", BUILD_LINK, LOCAL_CONFIG}
    for path in root.rglob("*"):
        rel = path.relative_to(root)
        if any(part in skip_names for part in rel.parts):
            continue
        if path.is_symlink() or not path.is_file():
            continue
        if rel.parts and rel.parts[0].endswith(".tar.gz"):
            continue
        if path.name.endswith(".failed"):
            continue
        files.append(str(rel))
    return sorted(files)


def make_dist(root: str | Path, output: str | Path | None = None) -> Path:
    """Deterministic tar.gz of the project's source files.

    Entries are sorted, timestamps fixed at the epoch, ownership zeroed
    and the gzip header carries no mtime, so two runs on the same tree
    produce byte-identical archives.
    """
    import gzip

    root = Path(root)
    git = git_state(root)
    version = git.version if git else "nogit"
    name = f"{root.resolve().name}-{version}"
    out = Path(output) if output else root / f"{name}.tar.gz"
    files = _tracked_files(root)

    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as raw:
        with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as gz:
            with tarfile.open(fileobj=gz, mode="w", format=tarfile.USTAR_FORMAT) as tar:
                for rel in files:
                    full = root / rel
                    info = tarfile.TarInfo(name=f"{name}/{rel}")
                    info.size = full.stat().st_size
                    info.mtime = 0
                    info.uid = 0
                    info.gid = 0
                    info.uname = ""
                    info.gname = ""
                    info.mode = 0o755 if os.access(full, os.X_OK) else 0o644
                    with open(full, "rb") as fh:
                        tar.addfile(info, fh)
    return out


def export_project_graph(root: str | Path, fmt: str) -> str:
    from .provenance import export_graph

    project = Project.load(Path(root))
    return export_graph(project.graph, fmt)
