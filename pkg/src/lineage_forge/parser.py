"""Parser for the plain-text lineage DSL.

The DSL is a deliberately small subset of Makefile syntax: `key = value`
assignments, `include <glob>` lines, plain `target: prereq...` rules with
TAB-prefixed recipe lines, `$(NAME)` variable references and the `$@`,
`$<`, `$^` automatic variables inside recipes. No pattern rules, no
functions, no conditionals. Files are UTF-8 with LF line endings.

Automatic variables are only live inside recipes; everywhere else they
pass through literally, like any `$` followed by something other than
`(` or `$`, which keeps expansion idempotent on already-expanded text
("$$HOME" expands to "$HOME" and stays that way).
"""

from __future__ import annotations

import glob as globmod
import logging
import posixpath
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AmbiguousDigest,
    DslSyntaxError,
    DuplicateInclude,
    ExpansionDepthExceeded,
    IncludeCycle,
    IncludeNotFound,
    InputError,
    MalformedDigest,
    MissingDigest,
    MissingFilename,
    MissingURL,
    UndefinedVariable,
)
from .graph import Origin, Rule, normalize_path

log = logging.getLogger("lineage_forge.parser")

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*")
ASSIGNMENT_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_-]*)\s*=(.*)$")

MAX_EXPANSION_DEPTH = 16

DIGEST_LENGTHS = {"md5": 32, "sha256": 64, "sha512": 128}
_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")

# Default project layout (all relative to the project root).
DEFAULT_ENTRY = "reproduce/analysis/make/top.wf"
DEFAULT_CONFIG_GLOB = "reproduce/analysis/config/*.conf"
INPUTS_MANIFEST = "reproduce/analysis/config/INPUTS.conf"
VERIFY_MANIFEST = "reproduce/analysis/config/verify.conf"


@dataclass(frozen=True)
class ConfigParam:
    key: str
    value: str
    origin: Origin


@dataclass(frozen=True)
class InputSpec:
    """Pin for one external input file."""

    name: str
    filename: str
    algorithm: str
    digest: str
    url: str
    size_hint: str | None = None


@dataclass(frozen=True)
class RuleTemplate:
    """A rule as written: targets/prereqs still unexpanded and unsplit."""

    target_text: str
    prereq_text: str
    recipe: tuple[str, ...]
    origin: Origin


@dataclass(frozen=True)
class IncludeDirective:
    pattern: str
    optional: bool
    origin: Origin


@dataclass
class ParsedFile:
    """One DSL file, statements kept in source order."""

    path: str
    items: list[object] = field(default_factory=list)

    @property
    def rules(self) -> list[RuleTemplate]:
        return [i for i in self.items if isinstance(i, RuleTemplate)]

    @property
    def includes(self) -> list[IncludeDirective]:
        return [i for i in self.items if isinstance(i, IncludeDirective)]

    @property
    def assignments(self) -> list[ConfigParam]:
        return [i for i in self.items if isinstance(i, ConfigParam)]


def _reject_carriage_returns(text: str, origin: str) -> None:
    if "\r" in text:
        lineno = text[: text.index("\r")].count("\n") + 1
        raise DslSyntaxError(origin, lineno, "CR line ending (files must use LF)")


def _is_comment_or_blank(line: str) -> bool:
    stripped = line.lstrip()
    return not stripped or stripped.startswith("#")


def parse_config(text: str, origin: str) -> list[ConfigParam]:
    """Parse a configuration file of `key = value` lines.

    Blank lines and `#` comments are ignored. A key assigned twice keeps
    its last value; the override is logged. Anything else is an error.
    """
    _reject_carriage_returns(text, origin)
    params: dict[str, ConfigParam] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if _is_comment_or_blank(line):
            continue
        match = ASSIGNMENT_RE.match(line.strip())
        if not match:
            raise DslSyntaxError(origin, lineno, f"expected 'key = value', got {line.strip()!r}")
        key, value = match.group(1), match.group(2).strip()
        if key in params:
            log.info(
                "%s:%d: '%s' overrides earlier value from %s",
                origin, lineno, key, params[key].origin,
            )
        params[key] = ConfigParam(key, value, Origin(origin, lineno))
    return list(params.values())


def serialize_config(params: list[ConfigParam]) -> str:
    """Render params back to `key = value` lines (round-trips parse_config)."""
    return "".join(f"{p.key} = {p.value}\n" for p in params)


def parse_workflow(text: str, origin: str) -> ParsedFile:
    """Parse a workflow file into assignments, includes and rule templates.

    Statement forms, in order of recognition per line: blank/comment,
    `include <glob>` (suffix the glob with `?` to tolerate zero matches),
    `key = value`, and `target...: prereq...` opening a rule whose recipe
    is the run of immediately following TAB lines. A TAB line outside a
    rule and a rule line with an empty target are syntax errors.
    """
    _reject_carriage_returns(text, origin)
    parsed = ParsedFile(path=origin)
    current_rule: dict | None = None

    def flush_rule() -> None:
        nonlocal current_rule
        if current_rule is not None:
            parsed.items.append(
                RuleTemplate(
                    target_text=current_rule["target"],
                    prereq_text=current_rule["prereqs"],
                    recipe=tuple(current_rule["recipe"]),
                    origin=current_rule["origin"],
                )
            )
            current_rule = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("\t"):
            if current_rule is None:
                raise DslSyntaxError(origin, lineno, "recipe line outside a rule")
            current_rule["recipe"].append(line[1:])
            continue

        # Any non-TAB line ends the rule currently being collected.
        flush_rule()

        if _is_comment_or_blank(line):
            continue

        stripped = line.strip()
        if stripped.startswith("include "):
            rest = stripped[len("include "):].strip()
            if not rest:
                raise DslSyntaxError(origin, lineno, "include without a pattern")
            if len(rest.split()) != 1:
                raise DslSyntaxError(origin, lineno, "include takes exactly one pattern")
            optional = rest.endswith("?")
            pattern = rest[:-1] if optional else rest
            parsed.items.append(IncludeDirective(pattern, optional, Origin(origin, lineno)))
            continue

        match = ASSIGNMENT_RE.match(stripped)
        if match:
            parsed.items.append(
                ConfigParam(match.group(1), match.group(2).strip(), Origin(origin, lineno))
            )
            continue

        if ":" in stripped:
            target_text, _, prereq_text = stripped.partition(":")
            if not target_text.strip():
                raise DslSyntaxError(origin, lineno, "rule with empty target")
            current_rule = {
                "target": target_text.strip(),
                "prereqs": prereq_text.strip(),
                "recipe": [],
                "origin": Origin(origin, lineno),
            }
            continue

        raise DslSyntaxError(origin, lineno, f"unrecognized statement: {stripped!r}")

    flush_rule()
    return parsed


@dataclass
class LoadedFile:
    path: str  # relative to project root
    parsed: ParsedFile


def resolve_includes(
    entry: str,
    root: str | Path,
    exclude: frozenset[str] = frozenset({VERIFY_MANIFEST}),
) -> list[LoadedFile]:
    """Load `entry` and, depth-first and in order, everything it includes.

    Glob matches are sorted lexicographically. Each physical file may be
    loaded once: including it again is DuplicateInclude, including a file
    that is still being expanded is IncludeCycle. A pattern with zero
    matches is IncludeNotFound unless it was suffixed with `?`.

    Paths in `exclude` (by default the verification manifest, which is
    TSV, not DSL) are silently dropped from glob expansions.
    """
    root = Path(root)
    loaded: list[LoadedFile] = []
    done: set[str] = set()
    in_progress: list[str] = []

    def load(rel: str, via: Origin | None) -> None:
        if rel in in_progress:
            raise IncludeCycle(in_progress + [rel])
        if rel in done:
            raise DuplicateInclude(rel, str(via) if via else rel)
        full = root / rel
        if not full.is_file():
            raise IncludeNotFound(rel, str(via) if via else rel)
        try:
            text = full.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            raise DslSyntaxError(rel, 1, "file is not valid UTF-8") from None
        parsed = parse_workflow(text, rel)
        in_progress.append(rel)
        done.add(rel)
        loaded.append(LoadedFile(rel, parsed))
        for item in parsed.items:
            if isinstance(item, IncludeDirective):
                matches = sorted(globmod.glob(item.pattern, root_dir=root))
                matches = [posixpath.normpath(m) for m in matches]
                matches = [m for m in matches if m not in exclude]
                if not matches and not item.optional:
                    raise IncludeNotFound(item.pattern, str(item.origin))
                for match in matches:
                    load(match, item.origin)
        in_progress.pop()

    load(posixpath.normpath(entry), None)
    return loaded


def flatten_statements(
    entry: str,
    root: str | Path,
    exclude: frozenset[str] = frozenset({VERIFY_MANIFEST}),
) -> tuple[list[LoadedFile], list[object]]:
    """resolve_includes plus the statement stream in effective order.

    The stream interleaves statements exactly as an include-expanding
    reader would see them, so a `key = value` written after an include
    line overrides the included file's value.
    """
    files = resolve_includes(entry, root, exclude)
    by_path = {f.path: f.parsed for f in files}
    emitted: set[str] = set()

    def walk(rel: str) -> list[object]:
        emitted.add(rel)
        out: list[object] = []
        for item in by_path[rel].items:
            if isinstance(item, IncludeDirective):
                matches = sorted(globmod.glob(item.pattern, root_dir=root))
                matches = [posixpath.normpath(m) for m in matches]
                for match in matches:
                    if match in by_path and match not in emitted:
                        out.extend(walk(match))
            else:
                out.append(item)
        return out

    return files, walk(posixpath.normpath(entry))


def build_env(
    statements: list[object],
    builtins: dict[str, str] | None = None,
) -> dict[str, str]:
    """Fold assignments into a name->value map, last definition winning."""
    env: dict[str, str] = dict(builtins or {})
    for item in statements:
        if isinstance(item, ConfigParam):
            if item.key in env:
                log.info("%s: '%s' overrides earlier value", item.origin, item.key)
            env[item.key] = item.value
    return env


def expand(
    template: str,
    env: dict[str, str],
    rule_ctx: Rule | None = None,
    origin: str = "?",
    _depth: int = 0,
) -> str:
    """Expand `$(NAME)`, `$$` and (inside recipes) `$@`, `$<`, `$^`.

    Variable values are themselves expanded, up to 16 levels deep.
    """
    if _depth > MAX_EXPANSION_DEPTH:
        raise ExpansionDepthExceeded(template, MAX_EXPANSION_DEPTH)

    out: list[str] = []
    i = 0
    n = len(template)
    while i < n:
        ch = template[i]
        if ch != "$":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            out.append("$")
            break
        nxt = template[i + 1]
        if nxt == "$":
            out.append("$")
            i += 2
        elif nxt == "(":
            end = template.find(")", i + 2)
            if end == -1:
                raise UndefinedVariable(template[i:], origin)
            name = template[i + 2:end]
            if not IDENT_RE.fullmatch(name):
                raise UndefinedVariable(name, origin)
            if name not in env:
                raise UndefinedVariable(name, origin)
            out.append(expand(env[name], env, rule_ctx, origin, _depth + 1))
            i = end + 1
        elif nxt in "@<^" and rule_ctx is not None:
            if nxt == "@":
                out.append(rule_ctx.target)
            elif nxt == "<":
                out.append(rule_ctx.prerequisites[0] if rule_ctx.prerequisites else "")
            else:
                out.append(" ".join(rule_ctx.prerequisites))
            i += 2
        else:
            # Unrecognized escape: pass the '$' through literally.
            out.append("$")
            i += 1
    return "".join(out)


def instantiate_rules(
    statements: list[object],
    env: dict[str, str],
) -> list[Rule]:
    """Expand and split rule templates into concrete single-target rules.

    Target and prerequisite fields are expanded, whitespace-split and
    path-normalized; a template whose target text expands to several
    tokens yields one rule per token (all sharing prerequisites and
    recipe). Recipes are expanded against the rule they belong to, so
    `$@`/`$<`/`$^` resolve per target.
    """
    rules: list[Rule] = []
    for item in statements:
        if not isinstance(item, RuleTemplate):
            continue
        origin = item.origin
        targets = expand(item.target_text, env, None, str(origin)).split()
        if not targets:
            raise DslSyntaxError(origin.path, origin.line, "rule target expands to nothing")
        prereqs = tuple(
            normalize_path(p, origin)
            for p in expand(item.prereq_text, env, None, str(origin)).split()
        )
        for target in targets:
            skeleton = Rule(
                target=normalize_path(target, origin),
                prerequisites=prereqs,
                recipe=(),
                origin=origin,
            )
            recipe = tuple(
                expand(line, env, skeleton, str(origin)) for line in item.recipe
            )
            rules.append(
                Rule(
                    target=skeleton.target,
                    prerequisites=prereqs,
                    recipe=recipe,
                    origin=origin,
                )
            )
    return rules


_SUFFIX_ALGOS = ("MD5", "SHA256", "SHA512")
_SUFFIX_OTHER = ("SIZE", "URL")


def parse_inputs_manifest(params: list[ConfigParam]) -> list[InputSpec]:
    """Group input-manifest params into pinned InputSpec records.

    Convention: `NAME = filename`, `NAME-MD5|SHA256|SHA512 = digest`
    (exactly one), `NAME-SIZE = hint` (optional), `NAME-URL = url`.
    """
    base: dict[str, str] = {}
    digests: dict[str, list[tuple[str, str]]] = {}
    sizes: dict[str, str] = {}
    urls: dict[str, str] = {}
    order: list[str] = []

    def note(name: str) -> None:
        if name not in order:
            order.append(name)

    for param in params:
        matched = False
        for algo in _SUFFIX_ALGOS:
            if param.key.endswith(f"-{algo}"):
                name = param.key[: -len(algo) - 1]
                digests.setdefault(name, []).append((algo.lower(), param.value))
                note(name)
                matched = True
                break
        if matched:
            continue
        if param.key.endswith("-SIZE"):
            name = param.key[:-5]
            sizes[name] = param.value
            note(name)
        elif param.key.endswith("-URL"):
            name = param.key[:-4]
            urls[name] = param.value
            note(name)
        else:
            base[param.key] = param.value
            note(param.key)

    specs: list[InputSpec] = []
    for name in order:
        if name not in base:
            raise MissingFilename(name)
        filename = base[name]
        if "/" in filename or "\\" in filename:
            raise InputError(f"input '{name}': filename {filename!r} contains a path separator")
        entries = digests.get(name, [])
        if not entries:
            raise MissingDigest(name)
        if len(entries) > 1:
            raise AmbiguousDigest(name, [a for a, _ in entries])
        algorithm, digest = entries[0]
        digest = digest.lower()
        if not _HEX_RE.fullmatch(digest):
            raise MalformedDigest(name, f"digest is not hexadecimal: {digest!r}")
        if len(digest) != DIGEST_LENGTHS[algorithm]:
            raise MalformedDigest(
                name,
                f"{algorithm} digest must be {DIGEST_LENGTHS[algorithm]} hex chars, "
                f"got {len(digest)}",
            )
        if name not in urls:
            raise MissingURL(name)
        specs.append(
            InputSpec(
                name=name,
                filename=filename,
                algorithm=algorithm,
                digest=digest,
                url=urls[name],
                size_hint=sizes.get(name),
            )
        )
    specs.sort(key=lambda s: s.name)
    return specs
