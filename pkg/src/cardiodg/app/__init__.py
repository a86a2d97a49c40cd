"""Configuration, scenario runs, diagnostics and file output."""
from .config import ConfigError, RunConfig, StimulusSpec, parse_config, parse_config_text
from .diagnostics import front_radii, mirror_defect
from .output import write_convergence_csv, write_vtk
from .runner import run_convergence, run_simulation
