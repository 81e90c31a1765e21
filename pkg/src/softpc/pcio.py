"""Point-cloud file I/O: ASCII PLY, OFF, and whitespace-separated XYZ.

Only vertex positions are consumed; faces, colors, and normals are ignored.
Writers emit 9 significant digits, enough for a lossless-in-practice round
trip of unit-scale geometry.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import ParameterError, ParseError

FORMATS = ("ply", "off", "xyz")

_FMT = "%.9g"


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        fmt = format.lower()
    else:
        fmt = path.suffix.lstrip(".").lower()
    if fmt not in FORMATS:
        raise ParameterError(f"unsupported cloud format {fmt!r} (expected one of {FORMATS})")
    return fmt


def load_cloud(path, format: str | None = None) -> PointCloud:
    path = Path(path)
    fmt = _infer_format(path, format)
    lines = path.read_text().splitlines()
    if fmt == "ply":
        points = _parse_ply(path, lines)
    elif fmt == "off":
        points = _parse_off(path, lines)
    else:
        points = _parse_xyz(path, lines)
    return PointCloud(points, id=path.stem)


def save_cloud(cloud: PointCloud, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "ply":
        text = _dump_ply(cloud)
    elif fmt == "off":
        text = _dump_off(cloud)
    else:
        text = _dump_xyz(cloud)
    path.write_text(text)


def _parse_floats(path: Path, line_no: int, tokens: list[str], count: int) -> list[float]:
    if len(tokens) < count:
        raise ParseError(path, line_no, f"expected {count} numeric fields, got {len(tokens)}")
    try:
        return [float(t) for t in tokens[:count]]
    except ValueError as exc:
        raise ParseError(path, line_no, f"non-numeric vertex field: {exc}") from None


def _parse_ply(path: Path, lines: list[str]) -> np.ndarray:
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, 1, "missing 'ply' magic line")
    n_vertices = None
    properties: list[str] = []
    in_vertex_element = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError(path, i, "only ASCII PLY is supported")
        elif tokens[0] == "element":
            in_vertex_element = len(tokens) >= 3 and tokens[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertices = int(tokens[2])
                except ValueError:
                    raise ParseError(path, i, f"bad vertex count {tokens[2]!r}") from None
        elif tokens[0] == "property" and in_vertex_element:
            if tokens[1] == "list":
                raise ParseError(path, i, "list property in vertex element is unsupported")
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise ParseError(path, len(lines), "header never terminated with end_header")
    if n_vertices is None:
        raise ParseError(path, body_start - 1, "header declares no vertex element")
    try:
        cols = [properties.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ParseError(path, body_start - 1, "vertex element lacks x/y/z properties") from None
    points = np.empty((n_vertices, 3))
    row = 0
    line_no = body_start
    while row < n_vertices:
        if line_no > len(lines):
            raise ParseError(path, len(lines), f"file truncated: {row} of {n_vertices} vertices read")
        tokens = lines[line_no - 1].split()
        if tokens:
            values = _parse_floats(path, line_no, tokens, len(properties))
            points[row] = [values[c] for c in cols]
            row += 1
        line_no += 1
    return points


def _dump_ply(cloud: PointCloud) -> str:
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {cloud.n_points}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    body = [" ".join(_FMT % v for v in row) for row in cloud.points]
    return "\n".join(header + body) + "\n"


def _parse_off(path: Path, lines: list[str]) -> np.ndarray:
    meaningful = [
        (i, raw.split()) for i, raw in enumerate(lines, start=1) if raw.split() and not raw.lstrip().startswith("#")
    ]
    if not meaningful:
        raise ParseError(path, 1, "empty OFF file")
    line_no, tokens = meaningful[0]
    if tokens[0].upper() != "OFF":
        raise ParseError(path, line_no, "missing OFF magic")
    rest = tokens[1:]
    cursor = 1
    if not rest:
        if cursor >= len(meaningful):
            raise ParseError(path, line_no, "missing OFF count line")
        line_no, rest = meaningful[cursor]
        cursor += 1
    if len(rest) < 3:
        raise ParseError(path, line_no, "OFF count line needs vertex/face/edge counts")
    try:
        n_vertices = int(rest[0])
    except ValueError:
        raise ParseError(path, line_no, f"bad vertex count {rest[0]!r}") from None
    if len(meaningful) - cursor < n_vertices:
        raise ParseError(path, len(lines), f"file truncated: expected {n_vertices} vertex lines")
    points = np.empty((n_vertices, 3))
    for row in range(n_vertices):
        v_line_no, v_tokens = meaningful[cursor + row]
        points[row] = _parse_floats(path, v_line_no, v_tokens, 3)
    return points


def _dump_off(cloud: PointCloud) -> str:
    lines = ["OFF", f"{cloud.n_points} 0 0"]
    lines += [" ".join(_FMT % v for v in row) for row in cloud.points]
    return "\n".join(lines) + "\n"


def _parse_xyz(path: Path, lines: list[str]) -> np.ndarray:
    rows = []
    for i, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        rows.append(_parse_floats(path, i, tokens, 3))
    if not rows:
        raise ParseError(path, max(1, len(lines)), "no coordinate lines found")
    return np.array(rows)


def _dump_xyz(cloud: PointCloud) -> str:
    return "\n".join(" ".join(_FMT % v for v in row) for row in cloud.points) + "\n"


# ---------------------------------------------------------------------------
# Dataset manifest: a directory of cloud files plus an index listing
# "<filename> <split>" per line.
# ---------------------------------------------------------------------------

INDEX_NAME = "index.txt"


def write_manifest(directory, clouds: list[PointCloud], splits: list[str], format: str = "xyz") -> None:
    if len(clouds) != len(splits):
        raise ParameterError("clouds and splits must have equal length")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for cloud, split in zip(clouds, splits):
        name = f"{cloud.id}.{format}"
        save_cloud(cloud, directory / name, format)
        entries.append(f"{name} {split}")
    (directory / INDEX_NAME).write_text("\n".join(entries) + "\n")


def read_manifest(directory) -> list[tuple[PointCloud, str]]:
    directory = Path(directory)
    index = directory / INDEX_NAME
    if not index.exists():
        raise ParameterError(f"manifest index not found: {index}")
    out = []
    for i, raw in enumerate(index.read_text().splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise ParseError(index, i, f"expected '<filename> <split>', got {raw!r}")
        out.append((load_cloud(directory / tokens[0]), tokens[1]))
    return out
