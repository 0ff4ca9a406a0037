"""Generator for the bundled demonstration project.

The demo mirrors the canonical project layout: a six-stage workflow
(initialize, download, format, demo-plot, verify, paper) over a small
synthetic CSV of papers per year. Its verification manifest is pinned at
generation time against the exact bytes the recipes produce, and the
pins cover only files that do not depend on `demo-year.conf`, so editing
that parameter re-runs just its descendants and still verifies.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

# Synthetic papers-per-year table. Arbitrary values, fixed forever so the
# demo's pinned digests stay valid.
YEAR_ROWS = {
    1990: 18, 1991: 23, 1992: 19, 1993: 26, 1994: 31, 1995: 37,
    1996: 47, 1997: 42, 1998: 55, 1999: 61, 2000: 68,
}

DEMO_YEAR = 1996
INPUT_FILENAME = "demo-papers.csv"
INPUT_URL = "https://example.org/datasets/demo-papers.csv"

TOP_WF = """\
# Demo project entry point: defines the goal and loads everything in order.

all: $(BDIR)/report.txt

include reproduce/analysis/config/*.conf

include reproduce/analysis/make/initialize.wf
include reproduce/analysis/make/download.wf
include reproduce/analysis/make/format.wf
include reproduce/analysis/make/demo-plot.wf
include reproduce/analysis/make/verify.wf
include reproduce/analysis/make/paper.wf
"""

INITIALIZE_WF = """\
# Engine warm-up stage: publishes a status macro.

$(BDIR)/tex/initialize.tex:
\tprintf '\\\\newcommand{\\\\demoenginestatus}{ready}\\n' > $@
"""

DOWNLOAD_WF = """\
# Import the pinned input into the working data area.

$(BDIR)/demo/papers.csv: $(BDIR)/inputs/demo-papers.csv
\tmkdir -p $(BDIR)/demo
\tcp $< $@

$(BDIR)/tex/download.tex: $(BDIR)/demo/papers.csv
\tprintf '\\\\newcommand{\\\\demodatasource}{%s}\\n' '$(DEMOPAPERS-URL)' > $@
"""

FORMAT_WF = """\
# Convert the CSV into a whitespace table. The header comment carries a
# timestamp on purpose: verification uses a strip-comments digest.

$(BDIR)/demo/papers-formatted.txt: $(BDIR)/demo/papers.csv
\t{ printf '# formatted %s\\n' "$$(date -u +%Y-%m-%dT%H:%M:%SZ)"; tail -n +2 $< | tr ',' ' '; } > $@

$(BDIR)/tex/format.tex: $(BDIR)/demo/papers-formatted.txt
\tv=$$(grep -cv '^#' $<); printf '\\\\newcommand{\\\\demonumpapers}{%s}\\n' "$$v" > $@
"""

DEMO_PLOT_WF = """\
# Aggregate rows per year and report the count for the configured year.

$(BDIR)/demo/papers-per-year.txt: $(BDIR)/demo/papers-formatted.txt
\tgrep -v '^#' $< | awk '{count[$$1]++} END {for (y in count) printf "%s %s\\n", y, count[y]}' | sort > $@

$(BDIR)/tex/demo-plot.tex: $(BDIR)/demo/papers-per-year.txt reproduce/analysis/config/demo-year.conf
\tv=$$(awk -v y=$(demo-year) '$$1 == y {print $$2}' $<); printf '\\\\newcommand{\\\\demoyearcount}{%s}\\n' "$$v" > $@
"""

VERIFY_WF = """\
# Bottleneck stage: depends on every deliverable so nothing downstream
# runs before all stages have produced their outputs.

$(BDIR)/tex/verify.tex: $(BDIR)/tex/initialize.tex $(BDIR)/tex/download.tex $(BDIR)/tex/format.tex $(BDIR)/tex/demo-plot.tex $(BDIR)/demo/papers-per-year.txt
\tprintf '\\\\newcommand{\\\\demodeliverables}{five}\\n' > $@
"""

PAPER_WF = """\
# Final stage: assemble the plain-text report from the stage macros.

$(BDIR)/report.txt: $(BDIR)/tex/verify.tex
\t{ printf '%s\\n' 'demo analysis report'; cat $(BDIR)/tex/initialize.tex $(BDIR)/tex/download.tex $(BDIR)/tex/format.tex $(BDIR)/tex/demo-plot.tex $(BDIR)/tex/verify.tex; } > $@
"""

DEMO_YEAR_CONF = f"""\
# Which year the demo-plot stage reports on. Change it and re-run make:
# only the dependent steps re-execute.
demo-year = {DEMO_YEAR}
"""

README_MD = """\
# Demo project

A six-stage synthetic analysis: count papers per year from a pinned CSV
and assemble a plain-text report with provenance macros.

    lineage-forge configure --build-dir <dir> --input-dir data
    lineage-forge make

Edit `reproduce/analysis/config/demo-year.conf` and run `make` again to
see the incremental rebuild: only the demo-plot stage and everything
downstream of it re-runs.
"""

TARGETS_CONF_NAMES = [
    ("demo-toolkit", "1.0", "demo-toolkit-1.0.tar.gz", ("demotoolkit",)),
    ("posix-shell", "5.1", "posix-shell-5.1.tar.gz", ()),
]

DEMO_TOOLKIT_BIB = """\
@misc{demotoolkit,
  author = {Doe, Alex},
  title  = {demo-toolkit: synthetic analysis helpers},
  year   = {2020},
}
"""


def _csv_text() -> str:
    lines = ["year,paper"]
    for year in sorted(YEAR_ROWS):
        for i in range(YEAR_ROWS[year]):
            lines.append(f"{year},study-{year}-{i:03d}")
    return "".join(line + "\n" for line in lines)


def _simulated_outputs(csv_text: str) -> dict[str, bytes]:
    """Byte-exact predictions of the deterministic recipe outputs.

    Used only to pin verify.conf at generation time; if a recipe ever
    drifts from this simulation, verification fails loudly.
    """
    rows = csv_text.splitlines()[1:]
    formatted_body = "".join(row.replace(",", " ") + "\n" for row in rows)
    per_year = sorted(f"{year} {count}" for year, count in YEAR_ROWS.items())
    per_year_text = "".join(line + "\n" for line in per_year)
    format_tex = f"\\newcommand{{\\demonumpapers}}{{{len(rows)}}}\n"
    return {
        "demo/papers-formatted.txt": formatted_body.encode(),  # comment line excluded
        "demo/papers-per-year.txt": per_year_text.encode(),
        "tex/format.tex": format_tex.encode(),
    }


def _verify_conf(csv_text: str) -> str:
    outputs = _simulated_outputs(csv_text)
    lines = []
    for rel in sorted(outputs):
        digest = hashlib.sha256(outputs[rel]).hexdigest()
        filt = "strip-comments:#" if rel == "demo/papers-formatted.txt" else "none"
        lines.append(f"{rel}\tsha256\t{digest}\t{filt}\n")
    return "".join(lines)


def _inputs_conf(csv_bytes: bytes) -> str:
    md5 = hashlib.md5(csv_bytes).hexdigest()
    size = f"{len(csv_bytes) / 1024:.1f}KB"
    return (
        "# Pinned external inputs: name, checksum, size hint, source URL.\n"
        f"DEMOPAPERS = {INPUT_FILENAME}\n"
        f"DEMOPAPERS-MD5 = {md5}\n"
        f"DEMOPAPERS-SIZE = {size}\n"
        f"DEMOPAPERS-URL = {INPUT_URL}\n"
    )


def _targets_conf() -> str:
    lines = ["# name\tversion\ttarball\tsha512\tcitation-keys"]
    for name, version, tarball, keys in TARGETS_CONF_NAMES:
        digest = hashlib.sha512(f"placeholder-{tarball}".encode()).hexdigest()
        fields = [name, version, tarball, digest]
        if keys:
            fields.append(",".join(keys))
        lines.append("\t".join(fields))
    return "".join(line + "\n" for line in lines)


def create_demo_project(dest: str | Path) -> Path:
    """Write the complete demo project under `dest` and return it."""
    dest = Path(dest)
    csv_text = _csv_text()

    files = {
        "README.md": README_MD,
        f"data/{INPUT_FILENAME}": csv_text,
        "reproduce/analysis/make/top.wf": TOP_WF,
        "reproduce/analysis/make/initialize.wf": INITIALIZE_WF,
        "reproduce/analysis/make/download.wf": DOWNLOAD_WF,
        "reproduce/analysis/make/format.wf": FORMAT_WF,
        "reproduce/analysis/make/demo-plot.wf": DEMO_PLOT_WF,
        "reproduce/analysis/make/verify.wf": VERIFY_WF,
        "reproduce/analysis/make/paper.wf": PAPER_WF,
        "reproduce/analysis/config/demo-year.conf": DEMO_YEAR_CONF,
        "reproduce/analysis/config/INPUTS.conf": _inputs_conf(csv_text.encode()),
        "reproduce/analysis/config/verify.conf": _verify_conf(csv_text),
        "reproduce/software/config/TARGETS.conf": _targets_conf(),
        "reproduce/software/bibtex/demo-toolkit.bib": DEMO_TOOLKIT_BIB,
    }
    for rel, text in files.items():
        path = dest / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return dest
