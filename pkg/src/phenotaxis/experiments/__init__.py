"""Run configuration, presets, single runs, sweeps and plot-ready output."""
from .config import ConfigError, RunConfig
from .presets import GAMMA_GRID, PRESETS, get_preset
from .runner import RunRecord, emit_plot_data, run, sweep
