"""Labeled segment dataset construction and on-disk format.

A dataset is generated from a recipe of waveform groups (preset, count,
optional distortion kind and severity range).  Each waveform is synthesized
on a noise-free channel, optionally distorted, then measured with the
preset's receiver noise; its validity label comes from eye-diagram analysis
and propagates to all 100 of its segments.  The 80/20 split is stratified
by label at waveform granularity so that complete signals can be
reassembled from either side of the split.

On disk a dataset is a directory holding `meta.json` and `segments.csv`
(columns: source_id, index, y, distortion_kind, x_0..x_99 as decimal text).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .eye import fold_eye, label_validity
from .waveform import (DEFAULT_PRESETS, DISTORTION_KINDS, ChannelPreset,
                       SegmentSample, Waveform, add_noise, inject_distortion,
                       prbs_generate, segment_waveform, synthesize_waveform)


@dataclass(frozen=True)
class WaveformGroup:
    """A batch of like-generated waveforms in the recipe."""

    preset: str
    count: int
    distortion: str = "none"
    severity_range: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("group count must be >= 1")
        if self.distortion not in ("none",) + DISTORTION_KINDS:
            raise ConfigError(f"unknown distortion {self.distortion!r}")
        lo, hi = self.severity_range
        if self.distortion != "none" and not (0.0 < lo <= hi <= 1.0):
            raise ConfigError("severity_range must satisfy 0 < lo <= hi <= 1")


@dataclass(frozen=True)
class GenerationConfig:
    groups: tuple
    presets: dict = field(default_factory=lambda: dict(DEFAULT_PRESETS))
    prbs_degree: int = 9
    split_ratio: float = 0.8
    balance_tolerance: float = 0.25

    def __post_init__(self):
        if not self.groups:
            raise ConfigError("config needs at least one waveform group")
        object.__setattr__(self, "groups", tuple(self.groups))
        for g in self.groups:
            if g.preset not in self.presets:
                raise ConfigError(f"group references unknown preset {g.preset!r}")
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError("split_ratio must be in (0, 1)")

    def to_json_dict(self) -> dict:
        return {
            "groups": [asdict(g) for g in self.groups],
            "presets": {k: asdict(v) for k, v in sorted(self.presets.items())},
            "prbs_degree": self.prbs_degree,
            "split_ratio": self.split_ratio,
            "balance_tolerance": self.balance_tolerance,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GenerationConfig":
        try:
            presets = {k: ChannelPreset(**v) for k, v in d.get("presets", {}).items()}
            if not presets:
                presets = dict(DEFAULT_PRESETS)
            groups = tuple(
                WaveformGroup(preset=g["preset"], count=g["count"],
                              distortion=g.get("distortion", "none"),
                              severity_range=tuple(g.get("severity_range", (0.0, 0.0))))
                for g in d["groups"])
            return cls(groups=groups, presets=presets,
                       prbs_degree=d.get("prbs_degree", 9),
                       split_ratio=d.get("split_ratio", 0.8),
                       balance_tolerance=d.get("balance_tolerance", 0.25))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed generation config: {e}") from e


@dataclass(frozen=True)
class SourceInfo:
    """Provenance of one generated waveform."""

    source_id: str
    preset: str
    distortion_kind: str
    severity: float
    label: int
    split: str = ""


@dataclass
class Dataset:
    train: list
    test: list
    split_seed: int
    class_counts: dict
    sources: dict

    def segments(self):
        return list(self.train) + list(self.test)

    def waveform(self, source_id: str) -> Waveform:
        """Reassemble a complete waveform from its 100 ordered segments."""
        segs = sorted((s for s in self.segments() if s.source_id == source_id),
                      key=lambda s: s.index)
        if len(segs) != 100:
            raise DataError(f"source {source_id!r} has {len(segs)} segments, expected 100")
        return Waveform(np.concatenate([s.x for s in segs]))

    def split_sources(self, split: str) -> list:
        return [sid for sid, info in self.sources.items() if info.split == split]


def default_config() -> GenerationConfig:
    """Desk-scale recipe: clean-to-mildly-distorted waveforms labeling valid,
    heavily distorted ones labeling invalid, roughly balanced."""
    groups = (
        WaveformGroup("case1", 5),
        WaveformGroup("case2", 5),
        WaveformGroup("case3", 5),
        WaveformGroup("case4", 5),
        WaveformGroup("case5", 2),
        WaveformGroup("case2", 2, "isi", (0.15, 0.35)),
        WaveformGroup("case3", 2, "harmonic", (0.20, 0.40)),
        WaveformGroup("case2", 5, "isi", (0.65, 1.0)),
        WaveformGroup("case3", 4, "isi", (0.65, 1.0)),
        WaveformGroup("case4", 3, "isi", (0.65, 1.0)),
        WaveformGroup("case2", 4, "harmonic", (0.80, 1.0)),
        WaveformGroup("case4", 2, "harmonic", (0.80, 1.0)),
        WaveformGroup("case3", 4, "amplitude", (0.93, 1.0)),
        WaveformGroup("case2", 4, "amplitude", (0.93, 1.0)),
    )
    return GenerationConfig(groups=groups)


def ablation_train_config() -> GenerationConfig:
    """Echo-distortion training corpus: clean presets 1-4 plus heavy
    symbol-interference invalids, no crosstalk anywhere."""
    groups = (
        WaveformGroup("case1", 4),
        WaveformGroup("case2", 4),
        WaveformGroup("case3", 4),
        WaveformGroup("case4", 4),
        WaveformGroup("case2", 6, "isi", (0.65, 1.0)),
        WaveformGroup("case3", 5, "isi", (0.65, 1.0)),
        WaveformGroup("case4", 5, "isi", (0.65, 1.0)),
    )
    return GenerationConfig(groups=groups)


def ablation_test_config() -> GenerationConfig:
    """Crosstalk-flavored evaluation corpus: coupled-lane preset waveforms,
    half of them driven into heavy aggressor coupling."""
    groups = (
        WaveformGroup("case5", 10),
        WaveformGroup("case5", 10, "crosstalk", (0.80, 1.0)),
    )
    return GenerationConfig(groups=groups)


def generate_waveform(config: GenerationConfig, group: WaveformGroup,
                      source_index: int, rng) -> tuple:
    """One labeled waveform from a group; returns (waveform, severity)."""
    preset = config.presets[group.preset]
    bits_seed = int(rng.integers(1, 1 << config.prbs_degree))
    synth_seed = int(rng.integers(0, 2 ** 31))
    bits = prbs_generate(config.prbs_degree, bits_seed, 103)
    w = synthesize_waveform(bits, replace(preset, noise_sigma=0.0), synth_seed)
    severity = 0.0
    if group.distortion != "none":
        lo, hi = group.severity_range
        severity = float(rng.uniform(lo, hi))
        w = inject_distortion(w, group.distortion, severity,
                              rng_seed=int(rng.integers(0, 2 ** 31)))
    w = add_noise(w, preset.noise_sigma, rng_seed=int(rng.integers(0, 2 ** 31)))
    return w, severity


def build_dataset(config: GenerationConfig, rng_seed: int) -> Dataset:
    """Generate, label, and split a dataset; deterministic in rng_seed."""
    rng = np.random.default_rng(rng_seed)
    all_segments: dict[str, list] = {}
    sources: dict[str, SourceInfo] = {}
    idx = 0
    for group in config.groups:
        for _ in range(group.count):
            source_id = f"{group.preset}-{group.distortion}-{idx:04d}"
            idx += 1
            w, severity = generate_waveform(config, group, idx, rng)
            label = label_validity(fold_eye(w))
            segs = segment_waveform(w, label, source_id=source_id,
                                    distortion_kind=group.distortion)
            all_segments[source_id] = segs
            sources[source_id] = SourceInfo(source_id, group.preset,
                                            group.distortion, severity, label)

    by_label = {0: [], 1: []}
    for sid, info in sources.items():
        by_label[info.label].append(sid)
    if not by_label[0]:
        raise DataError(
            "labeling produced zero invalid waveforms; add distortion groups "
            "or raise severities in the generation config")
    if not by_label[1]:
        raise DataError(
            "labeling produced zero valid waveforms; lower severities "
            "or add clean preset groups in the generation config")
    frac_valid = len(by_label[1]) / len(sources)
    if abs(frac_valid - 0.5) > config.balance_tolerance:
        raise DataError(
            f"class balance off target: {frac_valid:.2%} valid waveforms "
            f"(tolerance +-{config.balance_tolerance:.0%} around 50%); "
            "tune group counts or severities")

    split_seed = int(rng.integers(0, 2 ** 31))
    split_rng = np.random.default_rng(split_seed)
    train_ids, test_ids = set(), set()
    for label in (1, 0):
        ids = sorted(by_label[label])
        perm = split_rng.permutation(len(ids))
        n_train = round(config.split_ratio * len(ids))
        for j, p in enumerate(perm):
            (train_ids if j < n_train else test_ids).add(ids[p])

    train, test = [], []
    for sid, segs in all_segments.items():
        target = train if sid in train_ids else test
        target.extend(segs)
        sources[sid] = replace(sources[sid],
                               split="train" if sid in train_ids else "test")

    class_counts = {0: sum(1 for s in train + test if s.y == 0),
                    1: sum(1 for s in train + test if s.y == 1)}
    return Dataset(train=train, test=test, split_seed=split_seed,
                   class_counts=class_counts, sources=sources)


# ---------------------------------------------------------------------------
# persistence


def save_dataset(ds: Dataset, config: GenerationConfig, seed: int, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "tool_version": __version__,
        "seed": seed,
        "split_seed": ds.split_seed,
        "class_counts": {str(k): v for k, v in sorted(ds.class_counts.items())},
        "config": config.to_json_dict(),
        "sources": {
            sid: {"preset": info.preset, "distortion_kind": info.distortion_kind,
                  "severity": info.severity, "label": info.label, "split": info.split}
            for sid, info in sorted(ds.sources.items())
        },
        "train_sources": sorted(ds.split_sources("train")),
        "test_sources": sorted(ds.split_sources("test")),
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(path / "segments.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_id", "index", "y", "distortion_kind"]
                        + [f"x_{i}" for i in range(100)])
        for seg in ds.segments():
            writer.writerow([seg.source_id, seg.index, seg.y, seg.distortion_kind]
                            + [repr(float(v)) for v in seg.x])


def load_dataset(path) -> tuple:
    """Returns (Dataset, GenerationConfig, seed)."""
    path = Path(path)
    meta_path = path / "meta.json"
    csv_path = path / "segments.csv"
    if not meta_path.exists() or not csv_path.exists():
        raise DataError(f"{path} is not a dataset directory "
                        "(missing meta.json or segments.csv)")
    meta = json.loads(meta_path.read_text())
    config = GenerationConfig.from_json_dict(meta["config"])
    train_ids = set(meta["train_sources"])
    sources = {
        sid: SourceInfo(sid, d["preset"], d["distortion_kind"], d["severity"],
                        d["label"], d["split"])
        for sid, d in meta["sources"].items()
    }
    train, test = [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["source_id", "index", "y", "distortion_kind"]:
            raise DataError(f"{csv_path}: unexpected column layout")
        for row in reader:
            seg = SegmentSample(np.array([float(v) for v in row[4:]]),
                                int(row[2]), row[0], row[3], index=int(row[1]))
            (train if seg.source_id in train_ids else test).append(seg)
    ds = Dataset(train=train, test=test, split_seed=meta["split_seed"],
                 class_counts={int(k): v for k, v in meta["class_counts"].items()},
                 sources=sources)
    counted = {0: sum(1 for s in ds.segments() if s.y == 0),
               1: sum(1 for s in ds.segments() if s.y == 1)}
    if counted != ds.class_counts:
        raise DataError(f"{path}: class counts disagree with meta.json")
    return ds, config, meta["seed"]
