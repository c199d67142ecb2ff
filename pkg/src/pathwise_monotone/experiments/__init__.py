"""Configuration-driven scenarios, convergence tables and the command-line interface."""

from .config import (
    SCENARIO_DEFAULTS,
    ConfigError,
    ScenarioConfig,
    dump_config,
    parse_config,
    validate,
)
from .scenarios import (
    RunManifest,
    analysis_battery,
    build_driver,
    build_triple,
    convergence_table,
    recompute_flags,
    run_scenario,
)
