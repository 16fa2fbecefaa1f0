from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from rich.console import Console
from rich.logging import RichHandler
from rich.theme import Theme
from typer import BadParameter, Option

DEFAULT_CLIP_RADIUS = 1e3
DEFAULT_EPS_OMT = 1e-6
DEFAULT_EPS_YAMABE = 1e-8
DEFAULT_SEED = 0
DEFAULT_T_VALUES = (0.0, 0.5, 1.0)


def positive(value: float) -> float:
    if value <= 0:
        raise BadParameter(f"must be positive, got {value}")
    return value


CLIP_RADIUS_OPTION = Option(
    DEFAULT_CLIP_RADIUS,
    "--clip-radius",
    min=1.0,
    help="Radius of the planar working disk used by the transport solver",
)
EPS_OMT_OPTION = Option(
    DEFAULT_EPS_OMT,
    "--eps-omt",
    callback=positive,
    help="Relative cell-mass residual at which the transport solver stops",
)
EPS_YAMABE_OPTION = Option(
    DEFAULT_EPS_YAMABE,
    "--eps-yamabe",
    callback=positive,
    help="Curvature residual at which the Yamabe flow stops",
)
LANDMARKS_OPTION = Option(
    None,
    "--landmarks",
    help="Two vertex ids: the first is sent to the north pole, the second onto the +x meridian",
)
OUTPUT_DIR_OPTION = Option(
    Path("."),
    "--output-dir",
    "-o",
    envvar="SPHEREFLOW_OUTPUT_DIR",
    help="Directory the output files are written to",
)
PANEL_BORDER_COLOR = "sky_blue2"
RAW_OPTION = Option(
    False, help="If this flag is set the raw JSON will be displayed instead of the formatted output"
)
SECONDARY_BORDER_COLOR = "dodger_blue1"
SEED_OPTION = Option(DEFAULT_SEED, help="Seed for the eigen-solver start vector")
T_OPTION = Option(
    None,
    "--t",
    min=0.0,
    max=1.0,
    help="Trade-off value, repeat for a sweep. 0 is the conformal map, 1 the area-preserving one",
)
THREADS_OPTION = Option(
    1,
    "--threads",
    min=1,
    envvar="SPHEREFLOW_THREADS",
    help="Maximum number of t values processed in parallel",
)
TIMINGS_OPTION = Option(
    True,
    "--timings/--no-timings",
    help="Record wall-clock stage timings in reports. Disable for byte-identical reports",
)
TRACE_OPTION = Option(
    False, "--trace", help="Write per-iteration solver traces as CSV next to the outputs"
)


custom_theme = Theme(
    {
        "error": "red",
        "error_highlight": "yellow bold",
    }
)
console = Console(theme=custom_theme)


def configure_logging(verbose: bool = False) -> None:
    logger = logging.getLogger("sphereflow")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    logger.propagate = False


@dataclass
class PipelineConfig:
    input_path: Path
    output_dir: Path = Path(".")
    t_values: Tuple[float, ...] = DEFAULT_T_VALUES
    eps_yamabe: float = DEFAULT_EPS_YAMABE
    eps_omt: float = DEFAULT_EPS_OMT
    clip_radius: float = DEFAULT_CLIP_RADIUS
    landmarks: Optional[Tuple[int, int]] = None
    seed: int = DEFAULT_SEED
    threads: int = 1
    trace: bool = False
    timings: bool = True

    def __post_init__(self) -> None:
        self.t_values = tuple(float(t) for t in self.t_values)
        if not self.t_values:
            raise ValueError("At least one t value is required")
        for t in self.t_values:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"t must be in [0, 1], got {t}")
        if self.eps_yamabe <= 0 or self.eps_omt <= 0:
            raise ValueError("Tolerances must be positive")
        if self.clip_radius <= 0:
            raise ValueError("The clip radius must be positive")
        if self.landmarks is not None:
            top, front = self.landmarks
            if top == front:
                raise ValueError("Landmark vertices must be distinct")
            self.landmarks = (int(top), int(front))
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    @property
    def name(self) -> str:
        return self.input_path.stem
