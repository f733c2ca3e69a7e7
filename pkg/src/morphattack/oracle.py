"""Black-box classifier surface plus a toy face-recognition oracle.

Attack code sees only `classify` / `embed` / `query_count` (the
BlackBoxOracle protocol); everything else on the toy model is private.
The toy model embeds images on a PCA basis over its training faces and
scores identities by cosine similarity to per-identity centroids, with a
temperature-scaled softmax as the confidence.

Persistence: AMFR format, little-endian -
    magic b"AMFR", u32 version=1, u32 width, u32 height, u32 d,
    u32 identity count C, C x i64 identity labels, n x f64 pixel mean,
    n x d f64 basis (column-major), C x d f64 centroids (row-major),
    f64 temperature.
The spec'd field list is (version, dims, d, identity count, basis,
centroids, temperature); the pixel mean is part of "basis" state (a PCA
basis is unusable without its center) and labels let verdicts carry the
caller's identity ids.
"""

from __future__ import annotations

import struct
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import fileio
from .core import Image
from .dictionary import learn_bases
from .errors import (DimensionMismatch, FormatError, InsufficientData,
                     MorphAttackError, UntrainedModel)

MODEL_MAGIC = b"AMFR"
MODEL_VERSION = 1


@dataclass(frozen=True)
class OracleVerdict:
    label: int
    confidence: float


class BlackBoxOracle(Protocol):
    """The only window the attack has into a classifier."""

    def classify(self, image: Image) -> OracleVerdict: ...

    def embed(self, image: Image) -> np.ndarray: ...

    @property
    def query_count(self) -> int: ...


class ToyFrModel:
    """PCA-embedding nearest-centroid identifier with softmax confidences."""

    def __init__(self, width: int, height: int, mean: np.ndarray,
                 basis: np.ndarray, labels: np.ndarray,
                 centroids: np.ndarray, temperature: float):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self._width = int(width)
        self._height = int(height)
        self._mean = np.asarray(mean, dtype=np.float64)
        self._basis = np.asarray(basis, dtype=np.float64)
        self._labels = np.asarray(labels, dtype=np.int64)
        self._centroids = np.asarray(centroids, dtype=np.float64)
        self._temperature = float(temperature)
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def width(self) -> int:
        return self._width

    @property
    def height(self) -> int:
        return self._height

    @property
    def d(self) -> int:
        return self._basis.shape[1]

    @property
    def identity_count(self) -> int:
        return len(self._labels)

    @property
    def query_count(self) -> int:
        return self._queries

    def _count_query(self) -> None:
        with self._lock:
            self._queries += 1

    def _embed_raw(self, image: Image) -> np.ndarray:
        if (image.width, image.height) != (self._width, self._height):
            raise DimensionMismatch("image does not match model raster")
        if self._basis.size == 0:
            raise UntrainedModel("model has no embedding basis")
        e = self._basis.T @ (image.vectorize() - self._mean)
        nrm = np.linalg.norm(e)
        if nrm == 0.0:  # degenerate probe; any fixed unit vector will do
            e = np.zeros(self.d)
            e[0] = 1.0
            return e
        return e / nrm

    def embed(self, image: Image) -> np.ndarray:
        out = self._embed_raw(image)
        self._count_query()
        return out

    def classify(self, image: Image) -> OracleVerdict:
        e = self._embed_raw(image)
        sims = self._centroids @ e
        z = sims / self._temperature
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        idx = int(np.argmax(sims))
        self._count_query()
        return OracleVerdict(label=int(self._labels[idx]),
                             confidence=float(p[idx]))


def train_toy(samples: Sequence[tuple[Image, int]], d: int,
              temperature: float = 1.0) -> ToyFrModel:
    """Fit the whitened PCA basis and identity centroids.

    Basis columns are scaled by 1/sqrt(eigenvalue) (whitened PCA, the
    eigenface-era convention), so probe deviations beyond the training
    variance move embeddings strongly - which is what makes the toy model
    respond to deformations at all.  Deterministic for a fixed sample
    ordering; needs >= 2 identities with >= 2 images each and
    d <= len(samples) - 1.
    """
    if not samples:
        raise InsufficientData("no training samples")
    labels = sorted({lab for _, lab in samples})
    if len(labels) < 2:
        raise InsufficientData("need at least 2 identities")
    counts = {lab: 0 for lab in labels}
    for _, lab in samples:
        counts[lab] += 1
    thin = [lab for lab, c in counts.items() if c < 2]
    if thin:
        raise InsufficientData(f"identities with < 2 images: {thin}")
    if not (1 <= d <= len(samples) - 1):
        raise InsufficientData(
            f"d must satisfy 1 <= d <= {len(samples) - 1}, got {d}")

    width, height = samples[0][0].width, samples[0][0].height
    mat = np.empty((width * height, len(samples)))
    for i, (img, _) in enumerate(samples):
        if (img.width, img.height) != (width, height):
            raise DimensionMismatch("training images disagree in dimensions")
        mat[:, i] = img.vectorize()
    mean = mat.mean(axis=1)
    directions = learn_bases(mat - mean[:, None], d)
    basis = directions.w / np.sqrt(directions.eigenvalues)

    embedded = basis.T @ (mat - mean[:, None])  # d x M
    embedded /= np.maximum(np.linalg.norm(embedded, axis=0), 1e-300)
    sums = np.zeros((len(labels), d))
    index = {lab: i for i, lab in enumerate(labels)}
    for i, (_, lab) in enumerate(samples):
        sums[index[lab]] += embedded[:, i]
    norms = np.linalg.norm(sums, axis=1, keepdims=True)
    centroids = sums / np.maximum(norms, 1e-300)
    return ToyFrModel(width, height, mean, basis,
                      np.asarray(labels, dtype=np.int64), centroids,
                      temperature)


def save_model(model: ToyFrModel, path) -> None:
    head = MODEL_MAGIC + struct.pack(
        "<IIIII", MODEL_VERSION, model._width, model._height,
        model.d, model.identity_count)
    blobs = [head,
             np.ascontiguousarray(model._labels, dtype="<i8").tobytes(),
             np.ascontiguousarray(model._mean, dtype="<f8").tobytes(),
             np.asfortranarray(model._basis.astype("<f8")).tobytes(order="F"),
             np.ascontiguousarray(model._centroids, dtype="<f8").tobytes(),
             struct.pack("<d", model._temperature)]
    Path(path).write_bytes(b"".join(blobs))


def load_model(path) -> ToyFrModel:
    buf = Path(path).read_bytes()
    if buf[:4] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {buf[:4]!r}")
    if len(buf) < 24:
        raise FormatError("truncated model header")
    version, width, height, d, count = struct.unpack("<IIIII", buf[4:24])
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    n = width * height
    need = 24 + 8 * (count + n + n * d + count * d + 1)
    if len(buf) != need:
        raise FormatError(f"model is {len(buf)} bytes, expected {need}")
    off = 24
    labels = np.frombuffer(buf, dtype="<i8", count=count, offset=off).copy()
    off += 8 * count
    mean = np.frombuffer(buf, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    basis = np.frombuffer(buf, dtype="<f8", count=n * d,
                          offset=off).reshape((n, d), order="F").copy()
    off += 8 * n * d
    centroids = np.frombuffer(buf, dtype="<f8", count=count * d,
                              offset=off).reshape((count, d)).copy()
    off += 8 * count * d
    (temperature,) = struct.unpack_from("<d", buf, off)
    return ToyFrModel(width, height, mean, basis, labels, centroids,
                      temperature)


class CommandOracle:
    """Adapter for an external recognizer.

    Writes the probe as a PGM to a temp path, runs `argv + [path]`, and
    parses "label confidence" from the first line of stdout.  Lets a real
    FR system be plugged into the same attack harness.
    """

    def __init__(self, argv: Sequence[str]):
        self._argv = list(argv)
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._queries

    def classify(self, image: Image) -> OracleVerdict:
        with tempfile.TemporaryDirectory() as tmp:
            probe = Path(tmp) / "probe.pgm"
            fileio.write_pgm(image, probe)
            proc = subprocess.run(self._argv + [str(probe)],
                                  capture_output=True, text=True)
        if proc.returncode != 0:
            raise MorphAttackError(
                f"oracle command failed (exit {proc.returncode}): "
                f"{proc.stderr.strip()}")
        try:
            label_s, conf_s = proc.stdout.split()[:2]
            verdict = OracleVerdict(label=int(label_s),
                                    confidence=float(conf_s))
        except (ValueError, IndexError) as exc:
            raise MorphAttackError(
                f"unparsable oracle output {proc.stdout!r}") from exc
        with self._lock:
            self._queries += 1
        return verdict

    def embed(self, image: Image) -> np.ndarray:
        raise MorphAttackError("command oracle exposes no embedding surface")
