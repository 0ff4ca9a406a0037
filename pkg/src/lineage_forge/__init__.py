"""lineage-forge: a reproducible-workflow engine.

Projects declare their complete data lineage in a small plain-text DSL:
rules build target files from prerequisite files, external inputs are
pinned by checksum, deliverables pass a verification bottleneck, and
computed values flow into the narrative through macro files carrying
commit and machine provenance.
"""

__version__ = "0.1.0"

from .errors import LineageError
from .graph import LineageGraph, Rule, build_graph, descendants, topological_order
from .parser import ConfigParam, InputSpec, expand, parse_config, parse_workflow
from .project import Project, configure, make_dist, run_make, run_record, run_verify

__all__ = [
    "__version__",
    "LineageError",
    "LineageGraph",
    "Rule",
    "build_graph",
    "topological_order",
    "descendants",
    "ConfigParam",
    "InputSpec",
    "parse_config",
    "parse_workflow",
    "expand",
    "Project",
    "configure",
    "run_make",
    "run_verify",
    "run_record",
    "make_dist",
]
