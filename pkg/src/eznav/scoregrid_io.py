"""Score-grid file format shared with external tile scorers.

A single JSON document:

    {
      "schema": "eznav-scoregrid",
      "schema_version": 1,
      "image_size": [width, height],
      "prompt": "<text prompt the tiles were scored against>",
      "levels": [
        {"rows": R, "cols": C,
         "scores": [R*C floats, row-major],
         "descriptors": [R*C arrays of equal length, row-major]},  // optional
        ... finest level first ...
      ]
    }

Levels are ordered finest first and must be dyadically aligned; the image
size must be divisible by the finest grid. Writers must emit exactly this
structure (sorted keys, compact floats) so independently produced files stay
byte-comparable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pyramid import GridShape, PyramidLayout, ScoreGrid, validate_layout

SCHEMA_NAME = "eznav-scoregrid"
SCHEMA_VERSION = 1


class MalformedScoreGridError(ValueError):
    """The file is unreadable or structurally invalid (missing/garbled fields)."""


def load_scoregrid_file(path: str | Path) -> tuple[PyramidLayout, list[ScoreGrid], str]:
    """Parse and validate a score-grid file.

    Raises MalformedScoreGridError for structural problems and the layout
    errors (NonDyadicError / IndivisibleError) when the grids do not form a
    valid pyramid.
    """
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedScoreGridError(f"cannot read score-grid file {p}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_NAME:
        raise MalformedScoreGridError("missing or wrong 'schema' field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise MalformedScoreGridError(f"unsupported schema_version {doc.get('schema_version')}")
    try:
        width, height = (int(v) for v in doc["image_size"])
        prompt = str(doc["prompt"])
        levels = doc["levels"]
        if not isinstance(levels, list) or not levels:
            raise MalformedScoreGridError("'levels' must be a non-empty list")
        shapes = []
        grids = []
        for entry in levels:
            rows, cols = int(entry["rows"]), int(entry["cols"])
            scores = np.asarray(entry["scores"], dtype=float)
            if scores.size != rows * cols:
                raise MalformedScoreGridError(
                    f"level {rows}x{cols} carries {scores.size} scores"
                )
            descriptors = None
            if "descriptors" in entry and entry["descriptors"] is not None:
                descriptors = np.asarray(entry["descriptors"], dtype=float)
                if descriptors.ndim != 2 or descriptors.shape[0] != rows * cols:
                    raise MalformedScoreGridError("one descriptor per tile required")
                descriptors = descriptors.reshape(rows, cols, -1)
            shape = GridShape(rows, cols)
            shapes.append(shape)
            grid = ScoreGrid(shape=shape, scores=scores.reshape(rows, cols),
                             descriptors=descriptors)
            grid.validate()
            grids.append(grid)
    except MalformedScoreGridError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedScoreGridError(f"malformed score-grid file: {exc}") from exc

    layout = PyramidLayout(levels=tuple(shapes), image_width=width, image_height=height)
    validate_layout(layout)  # NonDyadicError / IndivisibleError propagate
    return layout, grids, prompt


def write_scoregrid_file(path: str | Path, layout: PyramidLayout,
                         grids: list[ScoreGrid], prompt: str) -> None:
    levels = []
    for grid in grids:
        entry: dict = {
            "rows": grid.shape.rows,
            "cols": grid.shape.cols,
            "scores": [float(v) for v in grid.scores.reshape(-1)],
        }
        if grid.descriptors is not None:
            flat = grid.descriptors.reshape(grid.shape.rows * grid.shape.cols, -1)
            entry["descriptors"] = [[float(v) for v in row] for row in flat]
        levels.append(entry)
    doc = {
        "schema": SCHEMA_NAME,
        "schema_version": SCHEMA_VERSION,
        "image_size": [layout.image_width, layout.image_height],
        "prompt": prompt,
        "levels": levels,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")
