from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Generator, Sequence

from rich.console import group
from rich.markup import escape
from rich.panel import Panel

from sphereflow._config import PANEL_BORDER_COLOR, SECONDARY_BORDER_COLOR, console
from sphereflow.errors import MeshIOError, SphereFlowError


def create_panel(
    data: dict[str, Any] | list[dict[str, Any]] | str | None,
    *,
    title: str,
    padding: tuple[int, int] = (1, 1),
    fit: bool = True,
    panel_border_color: str = PANEL_BORDER_COLOR,
) -> Panel:
    info: Any
    if isinstance(data, str):
        info = data
    elif isinstance(data, list):
        if data:

            @group()
            def get_panels() -> Generator[Any, None, None]:
                for d in data:  # type: ignore
                    yield create_panel(
                        d, title="", fit=False, panel_border_color=SECONDARY_BORDER_COLOR
                    )

            info = get_panels()
        else:
            info = "[]"
    else:
        info = ""
        if data == {}:
            info = "{}"
        elif data is not None:
            info = "\n".join(f"[green]{key}[/]: {value}" for key, value in data.items())

    if fit:
        return Panel.fit(info, title=title, border_style=panel_border_color, padding=padding)

    return Panel(info, title=title, border_style=panel_border_color, padding=padding)


def print_panel_or_raw(
    raw: bool, data: dict[str, Any] | list[dict[str, Any]] | None, panel_title: str
) -> None:
    if raw:
        console.print_json(json.dumps(data, default=str))
    else:
        panel = create_panel(data, title=panel_title)
        console.print(panel)


def handle_sphereflow_error(error: SphereFlowError) -> None:
    if error.stage:
        console.print(
            f"Stage [error_highlight]{error.stage}[/] failed: {escape(error.message)}",
            style="error",
        )
    else:
        console.print(error.message, style="error", markup=False)
    sys.exit(error.exit_code)


@contextmanager
def exit_on_error() -> Generator[None, None, None]:
    """Report library errors on the console and exit with their exit code."""
    try:
        yield
    except SphereFlowError as e:
        handle_sphereflow_error(e)


def ensure_output_dir(output_dir: Path) -> Path:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise MeshIOError(f"cannot create {output_dir}: {e.strerror or e}") from e
    return output_dir


def format_t(t: float) -> str:
    return f"{t:g}"


def write_trace(rows: Sequence[dict[str, Any]], path: Path) -> Path:
    """CSV with the union of the row keys as columns, in first-seen order."""
    columns: list[str] = []
    for row in rows:
        columns += [key for key in row if key not in columns]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join("" if row.get(c) is None else str(row[c]) for c in columns))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def write_json(data: dict[str, Any], path: Path) -> Path:
    try:
        path.write_text(json.dumps(data, default=str) + "\n")
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path
