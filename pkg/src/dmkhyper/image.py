"""Grayscale image sequences as temporal hypergraphs.

Frames are read from PGM files. Each frame is block-averaged onto a node
grid, bright blocks are kept, and neighboring kept nodes are joined along
the same three directions as the solver mesh (horizontal, vertical and
the bottom-left to top-right diagonal).
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .extract import SpatialGraph, hypergraph_from_graph
from .temporal import PropertyTrace, convergence_time, step_metrics

logger = logging.getLogger(__name__)


class PGMError(ValueError):
    pass


class PGMHeaderError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


class PGMFormatError(PGMError):
    """Unsupported magic number."""


class FrameError(RuntimeError):
    def __init__(self, index, message):
        super().__init__(f"frame {index}: {message}")
        self.index = index


class EmptyGraphWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray
    max_val: int = 255

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        px = np.asarray(self.pixels)
        if px.size != self.width * self.height:
            raise ValueError(f"expected {self.width * self.height} pixels, got {px.size}")
        if not 0 < self.max_val < 65536:
            raise ValueError(f"max_val must be in [1, 65535], got {self.max_val}")
        px = px.reshape(self.height, self.width).astype(np.int64)
        if px.min() < 0 or px.max() > self.max_val:
            raise ValueError("pixel values outside [0, max_val]")
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (self.width, self.height, self.max_val) == (other.width, other.height, other.max_val) and np.array_equal(
            self.pixels, other.pixels
        )

    @classmethod
    def from_array(cls, array, max_val=255) -> "GrayImage":
        a = np.asarray(array)
        return cls(a.shape[1], a.shape[0], a, max_val)


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the last one.
    """
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMHeaderError("header ended early")
        if data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(data: bytes) -> GrayImage:
    """Decode a binary (P5) or plain (P2) PGM image."""
    if len(data) < 2:
        raise PGMHeaderError("file too short for a PGM header")
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMFormatError(f"unsupported magic number {magic!r}")
    try:
        (w, h, maxval), pos = _header_tokens(data[2:], 3)
        width, height, max_val = int(w), int(h), int(maxval)
    except ValueError as exc:
        if isinstance(exc, PGMError):
            raise
        raise PGMHeaderError(f"non-numeric header field: {exc}") from None
    if width < 1 or height < 1 or not 0 < max_val < 65536:
        raise PGMHeaderError(f"invalid header values {width}x{height} max {max_val}")
    body = data[2 + pos:]
    n = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        if not body or not body[:1].isspace():
            raise PGMHeaderError("missing whitespace after header")
        body = body[1:]
        dtype = np.dtype(">u2") if max_val > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(body) < need:
            raise PGMTruncatedError(f"raster has {len(body)} bytes, expected {need}")
        pixels = np.frombuffer(body[:need], dtype=dtype).astype(np.int64)
    else:
        text = re.sub(rb"#[^\n]*", b"", body)
        fields = text.split()
        if len(fields) < n:
            raise PGMTruncatedError(f"found {len(fields)} samples, expected {n}")
        try:
            pixels = np.array([int(v) for v in fields[:n]], dtype=np.int64)
        except ValueError:
            raise PGMHeaderError("non-numeric sample in P2 raster") from None
    if pixels.max(initial=0) > max_val:
        raise PGMHeaderError("sample exceeds declared max value")
    return GrayImage(width, height, pixels, max_val)


def encode_pgm(img: GrayImage, binary=True) -> bytes:
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n{img.max_val}\n".encode()
    if binary:
        dtype = ">u2" if img.max_val > 255 else "u1"
        return header + img.pixels.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in img.pixels)
    return header + rows.encode() + b"\n"


def read_pgm(path) -> GrayImage:
    return load_pgm(Path(path).read_bytes())


def write_pgm(path, img: GrayImage, binary=True) -> None:
    Path(path).write_bytes(encode_pgm(img, binary))


def block_means(img: GrayImage, downsample: int) -> np.ndarray:
    """Mean intensity of each ``downsample``-pixel block; ragged edge blocks average what they cover.

    Row 0 of the result is the top of the image.
    """
    if int(downsample) != downsample or downsample < 1:
        raise ValueError(f"downsample must be a positive integer, got {downsample!r}")
    k = int(downsample)
    ny = -(-img.height // k)
    nx = -(-img.width // k)
    sums = np.zeros((ny, nx))
    counts = np.zeros((ny, nx))
    rows = np.arange(img.height) // k
    cols = np.arange(img.width) // k
    np.add.at(sums, (rows[:, None], cols[None, :]), img.pixels)
    np.add.at(counts, (rows[:, None], cols[None, :]), 1)
    return sums / counts


def graph_from_image(img: GrayImage, intensity_threshold, downsample=1) -> SpatialGraph:
    """Graph over the bright blocks of ``img``.

    Node ids follow the mesh convention ``row * nx + col`` with row 0 at the
    bottom of the image, and positions are scaled to the unit square.
    """
    if not 0 <= intensity_threshold <= img.max_val:
        raise ValueError(f"threshold {intensity_threshold} outside intensity range [0, {img.max_val}]")
    means = block_means(img, downsample)[::-1]  # bottom row first
    keep = means >= intensity_threshold
    ny, nx = keep.shape
    xs = np.arange(nx) / max(nx - 1, 1)
    ys = np.arange(ny) / max(ny - 1, 1)

    nodes = {}
    for r, c in zip(*np.nonzero(keep)):
        nodes[int(r * nx + c)] = (float(xs[c]), float(ys[r]))
    edges = set()
    for dr, dc in ((0, 1), (1, 0), (1, 1)):
        a = keep[: ny - dr, : nx - dc] & keep[dr:, dc:]
        for r, c in zip(*np.nonzero(a)):
            edges.add((int(r * nx + c), int((r + dr) * nx + c + dc)))
    if not nodes:
        warnings.warn("intensity threshold removed every block; graph is empty", EmptyGraphWarning, stacklevel=2)
    return SpatialGraph(nodes, frozenset(edges))


@dataclass
class ImageSequenceManifest:
    frames: list
    interval_seconds: float = 120.0

    def __post_init__(self):
        self.frames = [Path(p) for p in self.frames]
        if not self.frames:
            raise ValueError("manifest lists no frames")

    @classmethod
    def from_json(cls, path) -> "ImageSequenceManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        frames = [p if Path(p).is_absolute() else path.parent / p for p in data.get("frames", [])]
        return cls(frames, float(data.get("interval_seconds", 120.0)))

    def to_dict(self) -> dict:
        return {"frames": [str(p) for p in self.frames], "interval_seconds": self.interval_seconds}


def consolidation_window(values, window=3):
    """Longest suffix on which the moving average of ``values`` never increases.

    Returns ``(first_frame, last_frame)`` or ``None`` when the suffix spans
    fewer than two averaged points.
    """
    v = np.asarray(values, float)
    w = min(int(window), len(v))
    if w < 1 or len(v) < 2:
        return None
    ma = np.convolve(v, np.ones(w) / w, mode="valid")
    if len(ma) < 2:
        return None
    start = len(ma) - 1
    while start > 0 and ma[start - 1] >= ma[start]:
        start -= 1
    if start == len(ma) - 1:
        return None
    return int(start), int(len(v) - 1)


@dataclass
class ImageSequenceResult:
    traces: dict
    frame_indices: list
    hypergraphs: list = field(default_factory=list)
    empty_frames: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    t_property: dict = None
    consolidation: tuple = None


def analyze_images(images, intensity_threshold, downsample=1, s_values=(1, 2), frame_indices=None,
                   window=3) -> ImageSequenceResult:
    """Metric traces for an in-memory frame list."""
    images = list(images)
    if not images:
        raise ValueError("no frames to analyze")
    frame_indices = list(range(len(images))) if frame_indices is None else list(frame_indices)
    shape = (images[0].width, images[0].height)
    rows, hypergraphs, empty = {}, [], []
    for idx, img in zip(frame_indices, images):
        if (img.width, img.height) != shape:
            raise ValueError(f"frame {idx} is {img.width}x{img.height}, expected {shape[0]}x{shape[1]}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyGraphWarning)
            g = graph_from_image(img, intensity_threshold, downsample)
        if g.n_nodes == 0:
            empty.append(idx)
        h = hypergraph_from_graph(g)
        hypergraphs.append(h)
        for k, v in step_metrics(h, g, s_values).items():
            rows.setdefault(k, []).append(v)
    traces = {}
    for k, vals in rows.items():
        name, _, s = k.rpartition("_")
        if name in ("d", "c") and s.isdigit():
            traces[k] = PropertyTrace(name, vals, times=frame_indices, s=int(s))
        else:
            traces[k] = PropertyTrace(k, vals, times=frame_indices)
    result = ImageSequenceResult(traces, frame_indices, hypergraphs, empty)
    if len(frame_indices) > 1:
        result.t_property = {k: convergence_time(tr) for k, tr in traces.items()}
        result.consolidation = consolidation_window(traces["S"].values, window)
        if result.consolidation is not None:
            a, b = result.consolidation
            result.consolidation = (frame_indices[a], frame_indices[b])
    return result


def analyze_image_sequence(manifest: ImageSequenceManifest, intensity_threshold, downsample=1, s_values=(1, 2),
                           permissive=False, window=3) -> ImageSequenceResult:
    """Decode every frame of ``manifest`` and analyze the sequence.

    Decode failures raise :class:`FrameError` unless ``permissive`` is set,
    in which case the frame is skipped and its error recorded.
    """
    images, indices, errors = [], [], {}
    for i, path in enumerate(manifest.frames):
        try:
            img = read_pgm(path)
        except (OSError, PGMError) as exc:
            if not permissive:
                raise FrameError(i, str(exc)) from exc
            logger.warning("skipping frame %d: %s", i, exc)
            errors[i] = str(exc)
            continue
        if images and (img.width, img.height) != (images[0].width, images[0].height):
            raise ValueError(f"frame {i} ({path}) is {img.width}x{img.height}, expected "
                             f"{images[0].width}x{images[0].height}")
        images.append(img)
        indices.append(i)
    if not images:
        raise ValueError("no frame could be decoded")
    result = analyze_images(images, intensity_threshold, downsample, s_values, indices, window)
    result.errors = errors
    return result
