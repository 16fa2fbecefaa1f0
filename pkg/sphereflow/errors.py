from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from typing import Generator, MutableMapping, Sequence

logger = logging.getLogger(__name__)


class SphereFlowError(Exception):
    """Base class for every error raised by sphereflow.

    `stage` names the pipeline stage that failed and is filled in by `stage()` when the error
    crosses a stage boundary. `exit_code` is the process exit code the CLI uses for it.
    """

    exit_code = 2

    def __init__(self, message: str, *, stage: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class MeshIOError(SphereFlowError):
    exit_code = 3


class MeshFormatError(MeshIOError):
    """The file exists but could not be parsed."""


class TopologyError(SphereFlowError):
    exit_code = 1


class NonTriangularFaceError(TopologyError):
    pass


class NonManifoldError(TopologyError):
    pass


class OrientationError(TopologyError):
    pass


class BoundaryEdgeError(TopologyError):
    pass


class ConnectivityMismatchError(TopologyError):
    pass


class NumericalError(SphereFlowError):
    exit_code = 2


class ConvergenceError(NumericalError):
    def __init__(
        self,
        message: str,
        *,
        residual: float | None = None,
        iterations: int | None = None,
        stage: str | None = None,
    ) -> None:
        if residual is not None:
            message = f"{message} (residual {residual:.3e}"
            message += f" after {iterations} iterations)" if iterations is not None else ")"
        super().__init__(message, stage=stage)
        self.residual = residual
        self.iterations = iterations


class DegenerateGeometryError(NumericalError):
    def __init__(
        self, message: str, *, faces: Sequence[int] = (), stage: str | None = None
    ) -> None:
        faces = [int(f) for f in faces]
        if faces:
            shown = ", ".join(str(f) for f in faces[:10])
            more = f" and {len(faces) - 10} more" if len(faces) > 10 else ""
            message = f"{message}: face(s) {shown}{more}"
        super().__init__(message, stage=stage)
        self.faces = faces


class InadmissibleCurvatureError(NumericalError):
    pass


class SegmentationError(NumericalError):
    pass


class WeldingError(NumericalError):
    pass


class UndefinedOperationError(NumericalError, ArithmeticError):
    """Raised for ∞·0, ∞−∞ and 0/0 on the extended complex plane."""


@contextmanager
def stage(
    name: str, timings: MutableMapping[str, float] | None = None
) -> Generator[None, None, None]:
    """Tag errors escaping the block with `name` and record the block's wall-clock seconds."""
    start = time.perf_counter()
    logger.info("Starting stage %s", name)
    try:
        yield
    except SphereFlowError as e:
        if e.stage is None:
            e.stage = name
        raise
    finally:
        elapsed = time.perf_counter() - start
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + elapsed
        logger.debug("Stage %s finished in %.3fs", name, elapsed)
