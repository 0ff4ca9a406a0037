"""Incremental, parallel recipe execution with a scrubbed environment.

Staleness follows classic rebuild semantics: in `timestamp` mode a target
is stale when missing or older than any prerequisite; in `digest` mode
when missing or when any prerequisite's content digest differs from the
digest recorded at the target's last successful build. Staleness always
propagates downstream. Recipes run under an environment constructed
strictly from an EnvPolicy; nothing leaks in from the host.
"""

from __future__ import annotations

import concurrent.futures as cf
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import (
    MissingSource,
    RecipeFailed,
    ShellNotFound,
    TargetNotProduced,
    UnknownGoal,
)
from .graph import BUILT, SOURCE, LineageGraph, Rule, ancestors
from .state import BuildState, TargetRecord, file_digest

TIMESTAMP = "timestamp"
DIGEST = "digest"

OUTPUT_TAIL_CHARS = 2000


@dataclass(frozen=True)
class EnvPolicy:
    """Recipe environment: fixed variables plus explicit passthrough only."""

    fixed: dict[str, str]
    passthrough: tuple[str, ...] = ()
    workdir: str = "."
    shell: str = "/bin/sh"

    @classmethod
    def hermetic(cls, build_dir: str | Path, tool_path: str, workdir: str | Path,
                 passthrough: tuple[str, ...] = ()) -> "EnvPolicy":
        return cls(
            fixed={
                "HOME": str(build_dir),
                "PATH": tool_path,
                "LC_ALL": "C",
                "TZ": "UTC0",
            },
            passthrough=passthrough,
            workdir=str(workdir),
        )

    def environment(self) -> dict[str, str]:
        env = dict(self.fixed)
        for name in self.passthrough:
            if name in os.environ:
                env[name] = os.environ[name]
        return env


@dataclass(frozen=True)
class ExecutedTarget:
    target: str
    status: int
    seconds: float
    started: float
    finished: float


@dataclass(frozen=True)
class FailedTarget:
    target: str
    status: int
    output_tail: str
    kind: str  # "recipe" | "not-produced"


@dataclass
class ExecutionReport:
    executed: list[ExecutedTarget] = field(default_factory=list)
    skipped_fresh: list[str] = field(default_factory=list)
    failed: FailedTarget | None = None
    jobs: int = 1

    def executed_targets(self) -> list[str]:
        return [e.target for e in self.executed]


def run_recipe(rule: Rule, env: EnvPolicy) -> tuple[int, str]:
    """Run a rule's recipe lines one by one, stopping at the first failure.

    Each line goes through the policy's POSIX shell with `-e`, so a
    multi-command line also aborts at its first failing command. Returns
    the last exit status and the combined captured output.
    """
    chunks: list[str] = []
    environment = env.environment()
    for line in rule.recipe:
        try:
            proc = subprocess.run(
                [env.shell, "-e", "-c", line],
                cwd=env.workdir,
                env=environment,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
            )
        except FileNotFoundError:
            raise ShellNotFound(env.shell) from None
        if proc.stdout:
            chunks.append(proc.stdout)
        if proc.returncode != 0:
            return proc.returncode, "".join(chunks)
    return 0, "".join(chunks)


def _mtime(path: Path) -> int | None:
    try:
        return path.stat().st_mtime_ns
    except FileNotFoundError:
        return None


def stale_set(
    graph: LineageGraph,
    goal: str,
    state: BuildState,
    mode: str = TIMESTAMP,
    root: str | Path = ".",
) -> set[str]:
    """Built nodes in the goal's closure that need rebuilding.

    Raises MissingSource for any source file in the closure that does not
    exist on disk.
    """
    if goal not in graph.nodes:
        raise UnknownGoal(goal)
    root = Path(root)
    closure = ancestors(graph, goal)

    for node in sorted(closure):
        if graph.nodes[node] == SOURCE and not (root / node).exists():
            raise MissingSource(node)

    digest_cache: dict[str, str] = {}

    def current_digest(path: str) -> str:
        if path not in digest_cache:
            digest_cache[path] = file_digest(root / path)
        return digest_cache[path]

    memo: dict[str, bool] = {}

    def stale(target: str) -> bool:
        if target in memo:
            return memo[target]
        memo[target] = False  # acyclic graph; placeholder is never observed
        rule = graph.rules[target]
        tpath = root / target
        result = False
        if not tpath.exists():
            result = True
        if not result:
            for prereq in rule.prerequisites:
                if graph.nodes[prereq] == BUILT and stale(prereq):
                    result = True
                    break
        if not result and mode == TIMESTAMP:
            tmtime = _mtime(tpath)
            for prereq in rule.prerequisites:
                pmtime = _mtime(root / prereq)
                if pmtime is not None and tmtime is not None and pmtime > tmtime:
                    result = True
                    break
        if not result and mode == DIGEST:
            rec = state.get(target)
            if rec is None or len(rec.prereq_digests) != len(rule.prerequisites):
                result = True
            else:
                for prereq, recorded in zip(rule.prerequisites, rec.prereq_digests):
                    if current_digest(prereq) != recorded:
                        result = True
                        break
        memo[target] = result
        return result

    return {t for t in closure if graph.nodes[t] == BUILT and stale(t)}


def _log_path(build_dir: Path, target: str) -> Path:
    rel = target
    if rel.startswith(".build/"):
        rel = rel[len(".build/"):]
    return build_dir / "logs" / (rel + ".log")


def execute(
    graph: LineageGraph,
    goal: str,
    jobs: int,
    env: EnvPolicy,
    state: BuildState,
    mode: str = TIMESTAMP,
    root: str | Path = ".",
    build_dir: str | Path | None = None,
    on_event: Callable[[dict], None] | None = None,
    group_gid: int | None = None,
    raise_on_error: bool = True,
) -> ExecutionReport:
    """Bring the goal up to date, running stale recipes with `jobs` workers.

    A recipe starts only once all its prerequisites are fresh. On the
    first failure no new work is scheduled; running recipes drain. Each
    target's output is captured to `<build>/logs/<target>.log`, and the
    build state records content digests for the digest staleness mode.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    root = Path(root)
    build_path = Path(build_dir) if build_dir else None

    stale = stale_set(graph, goal, state, mode, root)
    closure_built = {n for n in ancestors(graph, goal) if graph.nodes[n] == BUILT}
    report = ExecutionReport(jobs=jobs)
    report.skipped_fresh = sorted(closure_built - stale)

    if not stale:
        return report

    pending: dict[str, int] = {}
    dependents: dict[str, list[str]] = {t: [] for t in stale}
    for target in stale:
        rule = graph.rules[target]
        count = 0
        for prereq in set(rule.prerequisites):
            if prereq in stale:
                count += 1
                dependents[prereq].append(target)
        pending[target] = count

    ready = sorted((t for t, c in pending.items() if c == 0), reverse=True)
    failure: FailedTarget | None = None
    failure_exc: Exception | None = None

    def work(target: str) -> tuple[str, int, str, float, float]:
        started = time.monotonic()
        status, output = run_recipe(graph.rules[target], env)
        finished = time.monotonic()
        return target, status, output, started, finished

    with cf.ThreadPoolExecutor(max_workers=jobs) as pool:
        running: dict[cf.Future, str] = {}

        def submit_ready() -> None:
            while ready and len(running) < jobs and failure is None:
                target = ready.pop()
                running[pool.submit(work, target)] = target

        submit_ready()
        while running:
            done, _ = cf.wait(running, return_when=cf.FIRST_COMPLETED)
            for fut in done:
                target = running.pop(fut)
                try:
                    _, status, output, started, finished = fut.result()
                except ShellNotFound:
                    raise
                rule = graph.rules[target]
                if build_path is not None:
                    log_file = _log_path(build_path, target)
                    log_file.parent.mkdir(parents=True, exist_ok=True)
                    log_file.write_text(output, encoding="utf-8")
                tpath = root / target
                if status != 0:
                    if failure is None:
                        failure = FailedTarget(
                            target, status, output[-OUTPUT_TAIL_CHARS:], "recipe"
                        )
                        failure_exc = RecipeFailed(target, status, output[-OUTPUT_TAIL_CHARS:])
                    if tpath.exists():
                        tpath.rename(str(tpath) + ".failed")
                    if on_event:
                        on_event({"event": "failed", "target": target, "status": status})
                    continue
                if rule.recipe and not tpath.exists():
                    if failure is None:
                        failure = FailedTarget(target, 0, output[-OUTPUT_TAIL_CHARS:], "not-produced")
                        failure_exc = TargetNotProduced(target)
                    if on_event:
                        on_event({"event": "failed", "target": target, "status": 0})
                    continue
                seconds = finished - started
                report.executed.append(
                    ExecutedTarget(target, status, seconds, started, finished)
                )
                if group_gid is not None and tpath.exists():
                    _apply_group(tpath, group_gid)
                _record(state, graph.rules[target], root, tpath)
                if on_event:
                    on_event({"event": "built", "target": target, "seconds": round(seconds, 4)})
                for dep in sorted(dependents.get(target, ())):
                    pending[dep] -= 1
                    if pending[dep] == 0:
                        ready.append(dep)
                ready.sort(reverse=True)
            submit_ready()

    report.failed = failure
    if failure is not None and raise_on_error:
        assert failure_exc is not None
        failure_exc.report = report  # type: ignore[attr-defined]
        raise failure_exc
    return report


def _record(state: BuildState, rule: Rule, root: Path, tpath: Path) -> None:
    target_digest = file_digest(tpath) if tpath.exists() else ""
    prereq_digests = []
    for prereq in rule.prerequisites:
        ppath = root / prereq
        prereq_digests.append(file_digest(ppath) if ppath.exists() else "")
    state.put(
        TargetRecord(
            target=rule.target,
            built_at=int(time.time()),
            target_digest=target_digest,
            prereq_digests=tuple(prereq_digests),
        )
    )


def _apply_group(path: Path, gid: int) -> None:
    try:
        os.chown(path, -1, gid)
    except (PermissionError, OSError):
        pass
    mode = path.stat().st_mode
    os.chmod(path, mode | 0o060)  # group rw
