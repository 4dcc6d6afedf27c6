"""End-to-end tracking: pre-grouping, training labels, solve, tracks.

The stages mirror the processing order: high-overlap neighboring
detections are pre-grouped into tracklets, tracklet labels drive the
clustering term of embedding training, fitted affinities cost a graph
with short-range regular edges and sparse long-range lifted edges, the
solver partitions it, and clusters become interpolated tracks.
"""

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .affinity import (
    LIFTED_FEATURES,
    NEARBY_FEATURES,
    AffinityConfig,
    AffinityModel,
    MatchTable,
    assemble_costs,
    fit_affinity_model,
    generate_labels,
    latent_codes,
)
from .embedding import ArchConfig, AutoEncoder, TrainingConfig, train
from .graph import BBox, Detection, Partition, UnionFind, build_graph
from .motio import MotRecord
from .solver import solve_gaec, solve_kl


class PipelineError(RuntimeError):
    """Failure wrapped with the stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Tracklet:
    """High-confidence pre-grouped fragment; members are detection ids."""

    label: int
    members: Tuple[int, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("tracklet must have at least one member")
        object.__setattr__(self, "members", tuple(sorted(self.members)))


@dataclass(frozen=True)
class Track:
    """One box per frame over a contiguous frame range."""

    track_id: int
    boxes: Mapping[int, BBox]

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("track must cover at least one frame")
        frames = sorted(self.boxes)
        if frames != list(range(frames[0], frames[-1] + 1)):
            raise ValueError(f"track frames not contiguous: {frames}")
        object.__setattr__(self, "boxes", dict(self.boxes))

    @property
    def first_frame(self) -> int:
        return min(self.boxes)

    @property
    def last_frame(self) -> int:
        return max(self.boxes)


@dataclass(frozen=True)
class TrackSet:
    tracks: Tuple[Track, ...]

    def __post_init__(self):
        ids = [t.track_id for t in self.tracks]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate track ids {ids}")

    def to_mot_records(self) -> List[MotRecord]:
        records = []
        for track in sorted(self.tracks, key=lambda t: t.track_id):
            for frame in sorted(track.boxes):
                box = track.boxes[frame]
                records.append(
                    MotRecord(frame, track.track_id, box.left, box.top,
                              box.width, box.height, 1.0)
                )
        records.sort(key=lambda r: (r.frame, r.track_id))
        return records


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the end-to-end run, persistable as key = value text."""

    max_frame_gap: int = 5
    lifted_gaps: Tuple[int, ...] = (10, 20, 30)
    lifted_percentile: float = 60.0
    pregroup_threshold: float = 0.7
    pregroup_max_gap: int = 3
    min_cluster_size: int = 5
    t_low: float = 0.1
    t_high: float = 0.7
    lambda_schedule: Tuple[Tuple[int, float], ...] = ((0, 0.0), (8, 0.95))
    learning_rate: float = 0.0003
    epochs: int = 24
    seed: int = 0
    nearby_features: Tuple[str, ...] = NEARBY_FEATURES

    def __post_init__(self):
        if not 0 < self.pregroup_threshold < 1:
            raise ValueError(f"bad pregroup threshold {self.pregroup_threshold}")
        if self.min_cluster_size < 1:
            raise ValueError(f"bad min_cluster_size {self.min_cluster_size}")
        if not 0 <= self.lifted_percentile <= 100:
            raise ValueError(f"bad lifted percentile {self.lifted_percentile}")
        AffinityConfig(self.t_low, self.t_high)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            lambda_schedule=self.lambda_schedule,
            seed=self.seed,
        )


def _fmt_value(key, value):
    if key in ("lifted_gaps", "nearby_features"):
        return ",".join(str(v) for v in value)
    if key == "lambda_schedule":
        return ",".join(f"{e}:{lam!r}" for e, lam in value)
    return str(value)


_PARSERS = {
    "max_frame_gap": int,
    "lifted_gaps": lambda s: tuple(int(p) for p in s.split(",") if p),
    "lifted_percentile": float,
    "pregroup_threshold": float,
    "pregroup_max_gap": int,
    "min_cluster_size": int,
    "t_low": float,
    "t_high": float,
    "lambda_schedule": lambda s: tuple(
        (int(p.split(":")[0]), float(p.split(":")[1])) for p in s.split(",") if p
    ),
    "learning_rate": float,
    "epochs": int,
    "seed": int,
    "nearby_features": lambda s: tuple(p for p in s.split(",") if p),
}


def write_config(path, config: PipelineConfig):
    with open(path, "w", encoding="ascii") as fh:
        for f in dataclasses.fields(config):
            fh.write(f"{f.name} = {_fmt_value(f.name, getattr(config, f.name))}\n")


def read_config(path) -> PipelineConfig:
    """Parse flat key = value text; unknown keys are rejected with line numbers."""
    overrides = {}
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                overrides[key] = _PARSERS[key](raw.strip())
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return PipelineConfig(**overrides)


def default_arch(patch_shape=(3, 16, 16)) -> ArchConfig:
    return ArchConfig(input_shape=tuple(patch_shape), conv_channels=(8, 16),
                      latent_dim=16)


def pregroup(detections: Sequence[Detection], table: MatchTable,
             threshold: float = 0.7, max_gap: int = 3) -> List[Tracklet]:
    """Group detections whose overlap score exceeds the threshold.

    Edges are considered between frames at distance 1..max_gap; per frame
    pair, conflicting edges are resolved by keeping the highest-scoring
    one (ties: lower detection ids). Connected components of the accepted
    edges become tracklets; every detection lands in exactly one.
    """
    by_frame_pair: Dict[Tuple[int, int], List[Tuple[float, int, int]]] = {}
    for u, v in table.pairs():
        value = table.entries[(u, v)]
        if value <= threshold:
            continue
        fu, fv = detections[u].frame, detections[v].frame
        gap = abs(fv - fu)
        if not 1 <= gap <= max_gap:
            continue
        key = (min(fu, fv), max(fu, fv))
        by_frame_pair.setdefault(key, []).append((value, u, v))

    uf = UnionFind(len(detections))
    for key in sorted(by_frame_pair):
        used = set()
        for value, u, v in sorted(by_frame_pair[key], key=lambda t: (-t[0], t[1], t[2])):
            if u in used or v in used:
                continue
            used.add(u)
            used.add(v)
            uf.union(u, v)

    groups: Dict[int, List[int]] = {}
    for det in range(len(detections)):
        groups.setdefault(uf.find(det), []).append(det)
    tracklets = []
    for label, members in enumerate(sorted(groups.values(), key=min)):
        tracklets.append(Tracklet(label=label, members=tuple(members)))
    return tracklets


def tracklet_labels(tracklets: Sequence[Tracklet], num_detections: int) -> List[int]:
    """Per-detection tracklet label vector for embedding training."""
    labels = [-1] * num_detections
    for tracklet in tracklets:
        for det in tracklet.members:
            labels[det] = tracklet.label
    if any(lab < 0 for lab in labels):
        missing = [i for i, lab in enumerate(labels) if lab < 0]
        raise ValueError(f"detections without a tracklet: {missing[:5]}")
    return labels


def train_embedding(detections: Sequence[Detection], tracklets: Sequence[Tracklet],
                    config: PipelineConfig, arch: ArchConfig = None):
    """Train the autoencoder with tracklet labels driving the clustering term."""
    if arch is None:
        shape = detections[0].image.shape if detections else (3, 16, 16)
        arch = default_arch(shape)
    labels = tracklet_labels(tracklets, len(detections))
    model = AutoEncoder(arch, seed=config.seed)
    return train(model, list(detections), labels, config.training_config())


def fit_affinity_models(detections: Sequence[Detection], table: MatchTable,
                        latents: np.ndarray, config: PipelineConfig
                        ) -> Tuple[AffinityModel, AffinityModel]:
    """Fit the nearby and lifted regressors on self-labeled extreme pairs."""
    labeled = generate_labels(table, AffinityConfig(config.t_low, config.t_high))
    raw = []
    labels = []
    for (u, v), label in labeled:
        d_ae = float(np.linalg.norm(latents[u] - latents[v]))
        raw.append((table.entries[(u, v)], d_ae))
        labels.append(label)
    nearby = fit_affinity_model(raw, labels, config.nearby_features)
    lifted = fit_affinity_model(raw, labels, LIFTED_FEATURES)
    return nearby, lifted


def _gate_lifted(instance, latents, percentile):
    """Keep only lifted pairs with latent distance below the percentile."""
    if not instance.lifted_edges:
        return instance
    dists = np.array(
        [np.linalg.norm(latents[u] - latents[v]) for u, v, _ in instance.lifted_edges]
    )
    cutoff = np.percentile(dists, percentile)
    kept = tuple(
        edge for edge, d in zip(instance.lifted_edges, dists) if d < cutoff
    )
    return dataclasses.replace(instance, lifted_edges=kept)


def run_tracking(detections: Sequence[Detection], table: MatchTable,
                 model: AutoEncoder, affinity_models, config: PipelineConfig
                 ) -> TrackSet:
    """Full solve: graph, costs, GAEC+KL partition, track conversion."""
    if not detections:
        return TrackSet(())
    nearby, lifted_model = affinity_models
    try:
        latents = latent_codes(model, detections)
    except Exception as exc:
        raise PipelineError("encode", exc) from exc
    try:
        instance = build_graph(detections, max_frame_gap=config.max_frame_gap,
                               lifted_gaps=config.lifted_gaps)
        instance = _gate_lifted(instance, latents, config.lifted_percentile)
    except Exception as exc:
        raise PipelineError("graph", exc) from exc
    try:
        costed = assemble_costs(instance, detections, table, latents,
                                nearby, lifted_model)
    except Exception as exc:
        raise PipelineError("costs", exc) from exc
    try:
        partition, _ = solve_gaec(costed)
        partition, _ = solve_kl(costed, partition)
    except Exception as exc:
        raise PipelineError("solve", exc) from exc
    try:
        return clusters_to_tracks(detections, partition, config.min_cluster_size)
    except Exception as exc:
        raise PipelineError("tracks", exc) from exc


def clusters_to_tracks(detections: Sequence[Detection], partition: Partition,
                       min_cluster_size: int = 5) -> TrackSet:
    """Clusters to tracks: size filter, per-frame best box, interpolation.

    Clusters below min_cluster_size are dropped. Per frame the highest
    scoring member wins (ties: lower detection id). Missing interior
    frames are filled by linear interpolation of the four box coordinates;
    there is no extrapolation beyond the cluster's frame range.
    """
    kept = []
    for members in partition.blocks():
        if len(members) < min_cluster_size:
            continue
        best: Dict[int, int] = {}
        for det in sorted(members):
            frame = detections[det].frame
            if frame not in best or detections[det].score > detections[best[frame]].score:
                best[frame] = det
        kept.append(best)

    kept.sort(key=lambda best: (min(best), best[min(best)]))
    tracks = []
    for track_id, best in enumerate(kept, start=1):
        frames = np.array(sorted(best))
        coords = np.array(
            [
                [
                    detections[best[f]].box.left,
                    detections[best[f]].box.top,
                    detections[best[f]].box.width,
                    detections[best[f]].box.height,
                ]
                for f in frames
            ]
        )
        full = np.arange(frames[0], frames[-1] + 1)
        filled = np.column_stack(
            [np.interp(full, frames, coords[:, k]) for k in range(4)]
        )
        boxes = {
            int(f): BBox(*filled[i]) for i, f in enumerate(full)
        }
        tracks.append(Track(track_id=track_id, boxes=boxes))
    return TrackSet(tuple(tracks))
