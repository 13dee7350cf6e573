"""Config-driven experiment harness: CSV/SVG reports and the CLI."""

from .config import (
    BodySpec,
    ConfigError,
    EquivalenceSpec,
    ExperimentConfig,
    SlicePlan,
    SpacetimeSpec,
    Tolerances,
    load_config,
    parse_config,
)
from .experiments import (
    ConvergenceRecord,
    FirstLawReport,
    LineFit,
    SpacetimeBundle,
    SuiteReport,
    SweepReport,
    build_body,
    central_curve,
    check_spacetime_report,
    geometrize_report,
    recovery_report,
    run_first_law,
    run_proposition_suite,
    run_theorem_w_sweep,
    slice_times,
    spacetime_bundle,
)
from .reports import (
    RECORD_COLUMNS,
    SUMMARY_COLUMNS,
    CheckRow,
    all_passed,
    fmt,
    format_check,
    write_summary,
    write_table,
)
from .svg import line_plot

__all__ = [
    "BodySpec",
    "CheckRow",
    "ConfigError",
    "ConvergenceRecord",
    "EquivalenceSpec",
    "ExperimentConfig",
    "FirstLawReport",
    "LineFit",
    "RECORD_COLUMNS",
    "SUMMARY_COLUMNS",
    "SlicePlan",
    "SpacetimeBundle",
    "SpacetimeSpec",
    "SuiteReport",
    "SweepReport",
    "Tolerances",
    "all_passed",
    "build_body",
    "central_curve",
    "check_spacetime_report",
    "fmt",
    "format_check",
    "geometrize_report",
    "line_plot",
    "load_config",
    "parse_config",
    "recovery_report",
    "run_first_law",
    "run_proposition_suite",
    "run_theorem_w_sweep",
    "slice_times",
    "spacetime_bundle",
    "write_summary",
    "write_table",
]
