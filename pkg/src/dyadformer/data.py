"""Dataset plumbing: feature files, session manifests, windowing, synthesis.

On-disk layout of a dataset directory:

    manifest.jsonl            one session per line
    <session>_<p>_video.dyft  chunk features, one file per participant/modality
    <session>_<p>_audio.dyft

Feature files are a fixed little-endian binary format (magic "DYFT",
version, row/column counts, float32 payload).  Values are float32 on disk
as feature backbones emit them and widen to float64 in memory, so a
write -> read round trip is bitwise exact whenever the values are
float32-representable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tensor import RngStream, Tensor

__all__ = [
    "TASKS",
    "SPLITS",
    "PLANT_SOURCES",
    "FeatureFileError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedFileError",
    "NonFiniteDataError",
    "ManifestError",
    "write_feature_file",
    "read_feature_file",
    "ParticipantTrack",
    "SessionRecord",
    "SequenceSample",
    "write_manifest",
    "load_manifest",
    "sample_sequences",
    "dataset_sequences",
    "SyntheticSpec",
    "generate_synthetic",
    "least_squares_decode",
]

TASKS = ("Animals", "Ghost", "Lego", "Talk")
SPLITS = ("train", "val", "test")
PLANT_SOURCES = ("own_video", "own_audio", "partner_video", "sparse_temporal")

_MAGIC = b"DYFT"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FeatureFileError(Exception):
    """Base for feature-file parsing failures."""


class BadMagicError(FeatureFileError):
    pass


class BadVersionError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class NonFiniteDataError(FeatureFileError):
    pass


class ManifestError(Exception):
    """Manifest is malformed or inconsistent with the files on disk."""


def write_feature_file(path: str | Path, features) -> None:
    """Write an N x d feature matrix; payload is float32 little-endian."""
    arr = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
    with np.errstate(over="ignore"):  # overflow is reported as an error below
        payload = arr.astype("<f4")
    if not np.all(np.isfinite(payload)):  # catches float32 overflow too
        raise NonFiniteDataError(f"{path}: features are not finite in float32")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_feature_file(path: str | Path) -> Tensor:
    """Read a feature file back as a float64 Tensor."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise TruncatedFileError(
            f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {4 * n * d}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=_HEADER.size)
    data = data.reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite values")
    return Tensor(data)


@dataclass
class ParticipantTrack:
    """One participant's chunk features, metadata, and trait targets."""

    participant_id: str
    video: Tensor  # N x d_v
    audio: Tensor  # N x d_a
    metadata: Tensor  # (d_m,)
    ocean: np.ndarray  # (5,) trait z-scores, order O C E A N

    def __post_init__(self):
        self.ocean = np.asarray(self.ocean, dtype=np.float64)
        if self.ocean.shape != (5,) or not np.all(np.isfinite(self.ocean)):
            raise ValueError(f"{self.participant_id}: ocean must be 5 finite reals")
        if self.video.data.shape[0] != self.audio.data.shape[0]:
            raise ValueError(
                f"{self.participant_id}: video has {self.video.data.shape[0]} chunks "
                f"but audio has {self.audio.data.shape[0]}"
            )

    @property
    def n_chunks(self) -> int:
        return self.video.data.shape[0]


@dataclass
class SessionRecord:
    """One recorded dyadic session: a task, a split label, two tracks."""

    session_id: str
    task: str
    split: str
    participants: dict[str, ParticipantTrack]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"{self.session_id}: unknown task {self.task!r}")
        if self.split not in SPLITS:
            raise ValueError(f"{self.session_id}: unknown split {self.split!r}")
        if set(self.participants) != {"A", "B"}:
            raise ValueError(f"{self.session_id}: participants must be keyed A and B")
        counts = {p: t.n_chunks for p, t in self.participants.items()}
        if counts["A"] != counts["B"]:
            raise ValueError(
                f"{self.session_id}: chunk counts differ between participants: {counts}"
            )

    @property
    def n_chunks(self) -> int:
        return self.participants["A"].n_chunks


@dataclass
class SequenceSample:
    """A T-chunk window of a session, both participants aligned."""

    session_id: str
    task: str
    split: str
    start: int
    video: dict[str, Tensor]
    audio: dict[str, Tensor]
    metadata: dict[str, Tensor]
    ocean: dict[str, np.ndarray]
    participant_ids: dict[str, str]

    @property
    def n_chunks(self) -> int:
        return self.video["A"].data.shape[0]


def write_manifest(path: str | Path, sessions: Sequence[SessionRecord],
                   paths: Mapping[str, Mapping[str, Mapping[str, str]]]) -> None:
    """Write one JSON line per session.

    ``paths[session_id][participant]`` supplies {"video_path", "audio_path"}
    relative to the manifest's directory; keeping them relative makes
    generated datasets byte-identical wherever they land.
    """
    path = Path(path)
    with open(path, "w") as fh:
        for s in sessions:
            rec = {
                "session_id": s.session_id,
                "task": s.task,
                "split": s.split,
                "participants": {
                    p: {
                        "id": t.participant_id,
                        "video_path": paths[s.session_id][p]["video_path"],
                        "audio_path": paths[s.session_id][p]["audio_path"],
                        "metadata": [float(x) for x in t.metadata.data],
                        "ocean": [float(x) for x in t.ocean],
                    }
                    for p, t in sorted(s.participants.items())
                },
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_manifest(path: str | Path) -> list[SessionRecord]:
    """Load every session, reading feature files relative to the manifest.

    Validates task and split labels, participant alignment, finite
    metadata/traits, and consistent feature widths across sessions.
    """
    path = Path(path)
    base = path.parent
    sessions: list[SessionRecord] = []
    widths: tuple[int, int] | None = None
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {e}") from e
        try:
            tracks = {}
            for p, info in rec["participants"].items():
                meta = np.asarray(info["metadata"], dtype=np.float64)
                if meta.ndim != 1 or not np.all(np.isfinite(meta)):
                    raise ManifestError(
                        f"{path}:{lineno}: metadata for {p} must be a finite vector"
                    )
                tracks[p] = ParticipantTrack(
                    participant_id=info["id"],
                    video=read_feature_file(base / info["video_path"]),
                    audio=read_feature_file(base / info["audio_path"]),
                    metadata=Tensor(meta),
                    ocean=np.asarray(info["ocean"], dtype=np.float64),
                )
            session = SessionRecord(
                session_id=rec["session_id"],
                task=rec["task"],
                split=rec["split"],
                participants=tracks,
            )
        except KeyError as e:
            raise ManifestError(f"{path}:{lineno}: missing field {e}") from e
        except (OSError, FeatureFileError, ValueError) as e:
            raise ManifestError(f"{path}:{lineno}: {e}") from e
        w = (
            session.participants["A"].video.data.shape[1],
            session.participants["A"].audio.data.shape[1],
        )
        for p, t in session.participants.items():
            if (t.video.data.shape[1], t.audio.data.shape[1]) != w:
                raise ManifestError(
                    f"{path}:{lineno}: participant {p} feature widths differ within session"
                )
        if widths is None:
            widths = w
        elif w != widths:
            raise ManifestError(
                f"{path}:{lineno}: feature widths {w} differ from earlier sessions {widths}"
            )
        sessions.append(session)
    return sessions


def sample_sequences(session: SessionRecord, T: int, stride: int) -> list[SequenceSample]:
    """Cut the session into aligned T-chunk windows at the given stride.

    Window starts are 0, stride, 2*stride, ... while start+T fits, giving
    floor((N-T)/stride)+1 windows when N >= T and none otherwise.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = session.n_chunks
    out: list[SequenceSample] = []
    if n < T:
        return out
    for start in range(0, n - T + 1, stride):
        video, audio, meta, ocean, pids = {}, {}, {}, {}, {}
        for p, t in session.participants.items():
            video[p] = Tensor(t.video.data[start : start + T])
            audio[p] = Tensor(t.audio.data[start : start + T])
            meta[p] = t.metadata
            ocean[p] = t.ocean
            pids[p] = t.participant_id
        out.append(
            SequenceSample(
                session_id=session.session_id,
                task=session.task,
                split=session.split,
                start=start,
                video=video,
                audio=audio,
                metadata=meta,
                ocean=ocean,
                participant_ids=pids,
            )
        )
    return out


def dataset_sequences(
    sessions: Iterable[SessionRecord], T: int, stride: int, split: str | None = None
) -> list[SequenceSample]:
    """Windows from every session, optionally restricted to one split."""
    if split is not None and split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    out: list[SequenceSample] = []
    for s in sessions:
        if split is None or s.split == split:
            out.extend(sample_sequences(s, T, stride))
    return out


# ---------------------------------------------------------------------------
# synthetic data


def _normalize_plants(plants) -> tuple[tuple[str, ...], ...]:
    if len(plants) != 5:
        raise ValueError("plants must assign sources to exactly 5 traits")
    norm = []
    for k, entry in enumerate(plants):
        sources = (entry,) if isinstance(entry, str) else tuple(entry)
        if not sources:
            raise ValueError(f"trait {k} needs at least one plant source")
        for s in sources:
            if s not in PLANT_SOURCES:
                raise ValueError(f"unknown plant source {s!r}; choose from {PLANT_SOURCES}")
        norm.append(sources)
    return tuple(norm)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dyadic dataset with known planted signal.

    Each trait is written into designated feature channels according to
    its plant sources: trait k of a participant goes to that participant's
    video channel k (own_video), audio channel k (own_audio), the
    partner's video channel 5+k (partner_video), or video channel k on a
    random ``sparse_fraction`` of chunks only (sparse_temporal).  Gaussian
    noise of scale noise_std is added everywhere; all other channels are
    pure noise.  Metadata entries 0..4 are noisy copies of the traits so
    metadata ablations have signal to lose.
    """

    n_sessions: int = 8
    chunks_per_session: int = 30
    d_v: int = 32
    d_a: int = 16
    d_m: int = 21
    noise_std: float = 0.1
    signal_scale: float = 1.0
    plants: tuple = (("own_video",),) * 5
    sparse_fraction: float = 0.2
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def __post_init__(self):
        object.__setattr__(self, "plants", _normalize_plants(self.plants))
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be >= 1")
        if self.chunks_per_session < 1:
            raise ValueError("chunks_per_session must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not (0.0 < self.sparse_fraction <= 1.0):
            raise ValueError("sparse_fraction must be in (0, 1]")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or min(self.split_fractions) < 0:
            raise ValueError("split_fractions must be nonnegative and sum to 1")
        flat = {s for entry in self.plants for s in entry}
        need_v = 5 if flat & {"own_video", "sparse_temporal"} else 0
        if "partner_video" in flat:
            need_v = 10
        if self.d_v < need_v:
            raise ValueError(f"d_v={self.d_v} too small for the plant channel plan ({need_v})")
        if "own_audio" in flat and self.d_a < 5:
            raise ValueError(f"d_a={self.d_a} too small for audio plants")
        if self.d_m < 5:
            raise ValueError("d_m must be >= 5 (metadata carries trait echoes)")


def _split_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    # deterministic allocation, at least one session per nonempty split when possible
    n_val = int(round(n * fractions[1]))
    n_test = int(round(n * fractions[2]))
    if n >= 3:
        n_val = max(n_val, 1)
        n_test = max(n_test, 1)
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"split fractions leave no training sessions for n={n}")
    return n_train, n_val, n_test


def generate_synthetic(
    spec: SyntheticSpec, seed: int, out_dir: str | Path
) -> tuple[list[SessionRecord], Path]:
    """Generate a dataset on disk; same spec and seed give identical bytes.

    Returns the session records and the manifest path.  Feature values are
    rounded through float32 before any derived quantity is computed, so
    in-memory tensors match what a round trip through the files yields.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngStream(seed)
    n_train, n_val, n_test = _split_counts(spec.n_sessions, spec.split_fractions)
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test

    sessions: list[SessionRecord] = []
    paths: dict[str, dict[str, dict[str, str]]] = {}
    N = spec.chunks_per_session
    for idx in range(spec.n_sessions):
        sid = f"s{idx:03d}"
        oceans = {p: rng.normal(5) for p in ("A", "B")}
        video = {p: rng.normal((N, spec.d_v), scale=spec.noise_std) if spec.noise_std > 0
                 else np.zeros((N, spec.d_v)) for p in ("A", "B")}
        audio = {p: rng.normal((N, spec.d_a), scale=spec.noise_std) if spec.noise_std > 0
                 else np.zeros((N, spec.d_a)) for p in ("A", "B")}
        other = {"A": "B", "B": "A"}
        for p in ("A", "B"):
            for k, sources in enumerate(spec.plants):
                signal = spec.signal_scale * oceans[p][k]
                for src in sources:
                    if src == "own_video":
                        video[p][:, k] += signal
                    elif src == "own_audio":
                        audio[p][:, k] += signal
                    elif src == "partner_video":
                        video[other[p]][:, 5 + k] += signal
                    elif src == "sparse_temporal":
                        mask = rng.random(N) < spec.sparse_fraction
                        video[p][mask, k] += signal
        metas = {}
        for p in ("A", "B"):
            m = rng.normal(spec.d_m)
            m[:5] = oceans[p] + 0.5 * rng.normal(5)
            metas[p] = m

        tracks = {}
        paths[sid] = {}
        for p in ("A", "B"):
            vp = f"{sid}_{p}_video.dyft"
            ap = f"{sid}_{p}_audio.dyft"
            write_feature_file(out_dir / vp, video[p])
            write_feature_file(out_dir / ap, audio[p])
            tracks[p] = ParticipantTrack(
                participant_id=f"{sid}_{p}",
                video=read_feature_file(out_dir / vp),
                audio=read_feature_file(out_dir / ap),
                metadata=Tensor(metas[p]),
                ocean=oceans[p],
            )
            paths[sid][p] = {"video_path": vp, "audio_path": ap}
        sessions.append(
            SessionRecord(
                session_id=sid,
                task=TASKS[idx % len(TASKS)],
                split=splits[idx],
                participants=tracks,
            )
        )
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, sessions, paths)
    return sessions, manifest


def least_squares_decode(
    sessions: Sequence[SessionRecord], use: str = "own_video"
) -> np.ndarray:
    """Oracle: per-trait R^2 of a linear read-out from temporal channel means.

    Ridge-free least squares from each participant's mean feature vector
    (own video, own audio, or partner video) to their traits, fit and
    scored on the same data.  Used to confirm a synthetic recipe actually
    carries enough recoverable signal before training anything on it.
    """
    if use not in ("own_video", "own_audio", "partner_video"):
        raise ValueError(f"unknown source {use!r}")
    other = {"A": "B", "B": "A"}
    feats, targets = [], []
    for s in sessions:
        for p in ("A", "B"):
            if use == "own_video":
                mat = s.participants[p].video.data
            elif use == "own_audio":
                mat = s.participants[p].audio.data
            else:
                mat = s.participants[other[p]].video.data
            feats.append(mat.mean(axis=0))
            targets.append(s.participants[p].ocean)
    X = np.column_stack([np.ones(len(feats)), np.array(feats)])
    Y = np.array(targets)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ coef
    ss_res = (resid**2).sum(axis=0)
    ss_tot = ((Y - Y.mean(axis=0)) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1.0 - ss_res / ss_tot
    return r2
