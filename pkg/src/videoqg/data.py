"""Synthetic multimodal question-generation data and its on-disk format.

Each synthetic clip is built from a scene, an action and an entity. The
frames and object detections encode only scene and action; the entity is
mentioned only in the subtitle. The target question names both the action
and the entity, so a model has to combine the two modalities to get it
right.

On disk a dataset is a directory holding ``frames.bin`` (binary tensor
records) and ``manifest.jsonl`` (one header line, then one line per clip).
"""
from __future__ import annotations

import json
import struct
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .features import MultimodalClip
from .vocab import Vocabulary

FRAMES_FILE = "frames.bin"
MANIFEST_FILE = "manifest.jsonl"
MAGIC = b"SRCM"
FORMAT_VERSION = 1
MANIFEST_FORMAT = "videoqg-manifest"

SCENES = {
    "kitchen": ["stove", "fridge", "sink", "pan"],
    "office": ["desk", "computer", "chair", "lamp"],
    "hospital": ["bed", "monitor", "curtain", "stretcher"],
    "bar": ["counter", "stool", "glass", "tap"],
    "apartment": ["couch", "television", "rug", "shelf"],
    "hallway": ["door", "stairs", "mailbox", "umbrella"],
    "restaurant": ["table", "menu", "candle", "napkin"],
    "car": ["wheel", "seat", "mirror", "dashboard"],
}
ACTIONS = {
    "eating": ["plate", "fork"],
    "drinking": ["cup", "bottle"],
    "reading": ["book", "newspaper"],
    "writing": ["pen", "notebook"],
    "cooking": ["pot", "spoon"],
    "dancing": ["speaker", "light"],
    "talking": ["phone", "headset"],
    "sleeping": ["pillow", "blanket"],
    "laughing": ["poster", "balloon"],
    "typing": ["keyboard", "laptop"],
    "painting": ["brush", "canvas"],
    "singing": ["microphone", "guitar"],
    "cleaning": ["mop", "bucket"],
    "shopping": ["bag", "cart"],
    "hugging": ["jacket", "scarf"],
    "smoking": ["lighter", "ashtray"],
}
ENTITIES = [
    "sheldon", "penny", "leonard", "howard", "raj", "amy", "bernadette", "stuart",
    "ross", "rachel", "monica", "chandler", "joey", "phoebe", "wilson", "cuddy",
    "foreman", "chase", "cameron", "castle", "beckett", "barney", "robin", "marshall",
]
FILLERS = [
    "hey", "i", "you", "think", "that", "is", "not", "what", "did", "said", "we", "really",
    "know", "it", "so", "okay", "well", "just", "about", "was", "do", "me", "are", "here",
]
TEMPLATES = (
    "why is {entity} {action} in the {scene} ?",
    "where is {entity} {action} ?",
    "what is {entity} holding while {action} in the {scene} ?",
    "who is {action} with {entity} ?",
)


class DatasetFormatError(Exception):
    """Base class for unreadable dataset files."""


class MagicError(DatasetFormatError):
    pass


class VersionError(DatasetFormatError):
    pass


class TruncationError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


@dataclass
class SyntheticTaskSpec:
    n_examples: int = 2400
    n_scenes: int = 4
    n_actions: int = 8
    n_entities: int = 8
    frame_dim: int = 64
    min_frames: int = 6
    max_frames: int = 10
    max_objects_per_frame: int = 3
    min_subtitle_len: int = 5
    max_subtitle_len: int = 9
    noise_sigma: float = 1.0
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_examples < 0:
            raise ValueError("n_examples must be >= 0")
        if not 1 <= self.n_scenes <= len(SCENES):
            raise ValueError(f"n_scenes must be in [1, {len(SCENES)}]: vocabulary too small")
        if not 1 <= self.n_actions <= len(ACTIONS):
            raise ValueError(f"n_actions must be in [1, {len(ACTIONS)}]: vocabulary too small")
        if not 1 <= self.n_entities <= len(ENTITIES):
            raise ValueError(f"n_entities must be in [1, {len(ENTITIES)}]: vocabulary too small")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ValueError("need 1 <= min_frames <= max_frames")
        if not 1 <= self.min_subtitle_len <= self.max_subtitle_len:
            raise ValueError("need 1 <= min_subtitle_len <= max_subtitle_len")
        if self.frame_dim < 1 or self.noise_sigma < 0 or self.max_objects_per_frame < 0:
            raise ValueError("frame_dim >= 1, noise_sigma >= 0 and max_objects_per_frame >= 0 required")
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fracs) < 0 or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {fracs}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    clips: list[MultimodalClip]
    splits: list[str]
    object_vocab: list[str]
    subtitle_vocab: Vocabulary
    question_vocab: Vocabulary
    labels: list[dict] = field(default_factory=list)
    entity_tokens: list[str] = field(default_factory=list)
    action_tokens: list[str] = field(default_factory=list)
    spec: SyntheticTaskSpec | None = None

    def __len__(self) -> int:
        return len(self.clips)

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.splits) if s == split]

    def split(self, split: str) -> list[MultimodalClip]:
        return [self.clips[i] for i in self.indices(split)]

    def question_text(self, ids: Iterable[int]) -> list[str]:
        return self.question_vocab.decode(ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.splits, self.object_vocab, self.labels, self.entity_tokens, self.action_tokens, self.spec) != (
            other.splits, other.object_vocab, other.labels, other.entity_tokens, other.action_tokens, other.spec
        ):
            return False
        if self.subtitle_vocab != other.subtitle_vocab or self.question_vocab != other.question_vocab:
            return False
        if len(self.clips) != len(other.clips):
            return False
        for a, b in zip(self.clips, other.clips):
            if (a.clip_id, a.objects, a.subtitle, a.question) != (b.clip_id, b.objects, b.subtitle, b.question):
                return False
            if a.frames.shape != b.frames.shape or not np.array_equal(a.frames, b.frames):
                return False
        return True


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _to_f32(x: np.ndarray) -> np.ndarray:
    # on-disk precision, so written datasets read back bit-exactly
    return x.astype(np.float32).astype(np.float64)


def prototypes(spec: SyntheticTaskSpec) -> np.ndarray:
    """Noise-free frame vectors, ``(n_scenes, n_actions, frame_dim)``."""
    rng = _rng(spec.rng_seed, 0)
    scene_vecs = rng.normal(size=(spec.n_scenes, spec.frame_dim))
    action_vecs = rng.normal(size=(spec.n_actions, spec.frame_dim))
    return _to_f32(scene_vecs[:, None, :] + action_vecs[None, :, :])


def task_vocabularies(spec: SyntheticTaskSpec):
    scenes = list(SCENES)[: spec.n_scenes]
    actions = list(ACTIONS)[: spec.n_actions]
    entities = ENTITIES[: spec.n_entities]
    object_vocab = ["<none>"]
    for name in [o for s in scenes for o in SCENES[s]] + [o for a in actions for o in ACTIONS[a]]:
        if name not in object_vocab:
            object_vocab.append(name)
    subtitle_vocab = Vocabulary(FILLERS + entities)
    return scenes, actions, entities, object_vocab, subtitle_vocab


def generate_synthetic(spec: SyntheticTaskSpec) -> Dataset:
    """Build a dataset that is a pure function of ``spec`` (per-clip derived seeds)."""
    spec.validate()
    scenes, actions, entities, object_vocab, subtitle_vocab = task_vocabularies(spec)
    obj_id = {name: i for i, name in enumerate(object_vocab)}
    protos = prototypes(spec)
    filler_ids = subtitle_vocab.encode(FILLERS)

    raw = []
    for idx in range(spec.n_examples):
        rng = _rng(spec.rng_seed, 1, idx)
        s = int(rng.integers(spec.n_scenes))
        a = int(rng.integers(spec.n_actions))
        e = int(rng.integers(spec.n_entities))
        n_frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
        frames = protos[s, a] + spec.noise_sigma * rng.normal(size=(n_frames, spec.frame_dim))
        pool = [obj_id[o] for o in SCENES[scenes[s]] + ACTIONS[actions[a]]]
        objects = []
        for _ in range(n_frames):
            k = int(rng.integers(spec.max_objects_per_frame + 1))
            objects.append([pool[j] for j in rng.integers(len(pool), size=k)])
        n_sub = int(rng.integers(spec.min_subtitle_len, spec.max_subtitle_len + 1))
        subtitle = [filler_ids[j] for j in rng.integers(len(filler_ids), size=n_sub - 1)]
        subtitle.insert(int(rng.integers(n_sub)), subtitle_vocab.stoi[entities[e]])
        template = TEMPLATES[s % len(TEMPLATES)]
        question = template.format(entity=entities[e], action=actions[a], scene=scenes[s]).split()
        labels = {"scene": scenes[s], "action": actions[a], "entity": entities[e]}
        raw.append((f"clip{idx:06d}", _to_f32(frames), objects, subtitle, question, labels))

    question_vocab = build_vocab([r[4] for r in raw], min_count=1)
    clips = [MultimodalClip(cid, fr, ob, sub, question_vocab.encode(q)) for cid, fr, ob, sub, q, _ in raw]

    order = _rng(spec.rng_seed, 2).permutation(spec.n_examples)
    n_train = int(round(spec.train_fraction * spec.n_examples))
    n_val = int(round(spec.val_fraction * spec.n_examples))
    splits = [""] * spec.n_examples
    for rank, idx in enumerate(order):
        splits[idx] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"

    return Dataset(
        clips=clips,
        splits=splits,
        object_vocab=object_vocab,
        subtitle_vocab=subtitle_vocab,
        question_vocab=question_vocab,
        labels=[r[5] for r in raw],
        entity_tokens=list(entities),
        action_tokens=list(actions),
        spec=spec,
    )


def build_vocab(source, min_count: int = 1) -> Vocabulary:
    """Question vocabulary from a :class:`Dataset` or an iterable of token lists.

    Tokens seen at least ``min_count`` times get ids in descending frequency
    (ties lexicographic) after the reserved ids; the rest encode as UNK.
    """
    if isinstance(source, Dataset):
        sequences = (source.question_vocab.decode(c.question) for c in source.clips)
    else:
        sequences = source
    counts: Counter = Counter()
    for seq in sequences:
        counts.update(seq)
    return Vocabulary.from_counts(counts, min_count)


# ---------------------------------------------------------------- binary tensor records


def encode_record(array: np.ndarray) -> bytes:
    """One record: rank u8, dims u32 LE, float32 LE payload, CRC32 of all preceding bytes."""
    array = np.asarray(array)
    body = struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    body += np.ascontiguousarray(array, dtype="<f4").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def decode_record(buf: bytes, offset: int) -> tuple[np.ndarray, int]:
    """Parse the record at ``offset``; returns the float64 array and the next offset."""
    if offset + 1 > len(buf):
        raise TruncationError(f"record header at byte {offset} past end of file ({len(buf)} bytes)")
    rank = buf[offset]
    dims_end = offset + 1 + 4 * rank
    if dims_end > len(buf):
        raise TruncationError(f"record dims at byte {offset} truncated")
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 1)
    payload_end = dims_end + 4 * int(np.prod(dims, dtype=np.int64))
    if payload_end + 4 > len(buf):
        raise TruncationError(f"record payload at byte {offset} truncated")
    (crc,) = struct.unpack_from("<I", buf, payload_end)
    if zlib.crc32(buf[offset:payload_end]) != crc:
        raise ChecksumError(f"checksum mismatch in record at byte {offset}")
    arr = np.frombuffer(buf, dtype="<f4", count=(payload_end - dims_end) // 4, offset=dims_end)
    return arr.astype(np.float64).reshape(dims), payload_end + 4


def file_header() -> bytes:
    return MAGIC + struct.pack("<H", FORMAT_VERSION)


def check_header(buf: bytes) -> int:
    if len(buf) < 6:
        raise TruncationError("file shorter than its 6-byte header")
    if buf[:4] != MAGIC:
        raise MagicError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}, expected {FORMAT_VERSION}")
    return 6


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = bytearray(file_header())
    lines = []
    header = {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "n_records": len(dataset.clips),
        "spec": dataset.spec.to_dict() if dataset.spec else None,
        "object_vocab": dataset.object_vocab,
        "subtitle_vocab": dataset.subtitle_vocab.tokens(),
        "question_vocab": dataset.question_vocab.tokens(),
        "entity_tokens": dataset.entity_tokens,
        "action_tokens": dataset.action_tokens,
    }
    lines.append(json.dumps(header, separators=(",", ":")))
    for i, clip in enumerate(dataset.clips):
        rec = encode_record(clip.frames)
        record = {
            "clip_id": clip.clip_id,
            "offset": len(blob),
            "length": len(rec),
            "objects": [list(map(int, f)) for f in clip.objects],
            "subtitle": list(map(int, clip.subtitle)),
            "question": list(map(int, clip.question)),
            "split": dataset.splits[i],
            "labels": dataset.labels[i] if dataset.labels else {},
        }
        blob += rec
        lines.append(json.dumps(record, separators=(",", ":")))
    (path / FRAMES_FILE).write_bytes(bytes(blob))
    (path / MANIFEST_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    buf = (path / FRAMES_FILE).read_bytes()
    check_header(buf)
    lines = (path / MANIFEST_FILE).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TruncationError("manifest is empty")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise MagicError(f"manifest format {header.get('format')!r}, expected {MANIFEST_FORMAT!r}")
    if header.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported manifest version {header.get('version')}")
    records = [json.loads(line) for line in lines[1:]]
    if len(records) != header["n_records"]:
        raise TruncationError(f"manifest lists {len(records)} records, header says {header['n_records']}")
    clips, splits, labels = [], [], []
    prev_end = 6
    for rec in records:
        if rec["offset"] < prev_end:
            raise DatasetFormatError(f"record {rec['clip_id']} overlaps the previous one")
        frames, end = decode_record(buf, rec["offset"])
        if end - rec["offset"] != rec["length"]:
            raise DatasetFormatError(f"record {rec['clip_id']} length mismatch")
        prev_end = end
        clips.append(MultimodalClip(rec["clip_id"], frames, rec["objects"], rec["subtitle"], rec["question"]))
        splits.append(rec["split"])
        labels.append(rec["labels"])
    spec = SyntheticTaskSpec(**header["spec"]) if header["spec"] else None
    return Dataset(
        clips=clips,
        splits=splits,
        object_vocab=header["object_vocab"],
        subtitle_vocab=Vocabulary(header["subtitle_vocab"]),
        question_vocab=Vocabulary(header["question_vocab"]),
        labels=labels if any(labels) else [],
        entity_tokens=header["entity_tokens"],
        action_tokens=header["action_tokens"],
        spec=spec,
    )


def spec_from_mapping(values: dict) -> SyntheticTaskSpec:
    """Build a spec from string values (config files); unknown keys are rejected."""
    from .config import coerce_dataclass

    return coerce_dataclass(SyntheticTaskSpec, values, section="data")


# ---------------------------------------------------------------- modality audits


def _centroid_accuracy(train_x, train_y, test_x, test_y) -> float:
    classes = sorted(set(train_y))
    cents = np.stack([np.mean([x for x, y in zip(train_x, train_y) if y == c], axis=0) for c in classes])
    correct = 0
    for x, y in zip(test_x, test_y):
        correct += classes[int(np.argmin(((cents - x) ** 2).sum(axis=1)))] == y
    return correct / max(len(test_y), 1)


def frames_only_accuracy(dataset: Dataset, label: str) -> float:
    """Nearest-centroid classifier on the mean frame vector (train -> test)."""
    tr, te = dataset.indices("train"), dataset.indices("test")
    feats = [dataset.clips[i].frames.mean(axis=0) for i in range(len(dataset))]
    return _centroid_accuracy(
        [feats[i] for i in tr], [dataset.labels[i][label] for i in tr],
        [feats[i] for i in te], [dataset.labels[i][label] for i in te],
    )


def subtitles_only_accuracy(dataset: Dataset, label: str) -> float:
    """Lookup classifier: trust the test clip's purest subtitle token.

    Each token seen in training maps to its majority label; a clip takes the
    label of its token whose training occurrences agree most often.
    """
    tr, te = dataset.indices("train"), dataset.indices("test")
    votes: dict[int, Counter] = {}
    for i in tr:
        for tok in set(dataset.clips[i].subtitle):
            votes.setdefault(tok, Counter())[dataset.labels[i][label]] += 1
    prior = Counter(dataset.labels[i][label] for i in tr)
    fallback = min(prior, key=lambda lab: (-prior[lab], lab)) if prior else None
    correct = 0
    for i in te:
        best = (-1.0, 0, fallback)
        for tok in sorted(set(dataset.clips[i].subtitle)):
            if tok not in votes:
                continue
            lab, n = min(votes[tok].items(), key=lambda kv: (-kv[1], kv[0]))
            total = sum(votes[tok].values())
            best = max(best, (n / total, total, lab), key=lambda b: (b[0], b[1]))
        correct += best[2] == dataset.labels[i][label]
    return correct / max(len(te), 1)
