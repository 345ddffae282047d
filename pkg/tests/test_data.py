import numpy as np
import pytest

from videoqg.data import (
    FRAMES_FILE,
    MANIFEST_FILE,
    SCENES,
    ChecksumError,
    DatasetFormatError,
    MagicError,
    SyntheticTaskSpec,
    TruncationError,
    VersionError,
    build_vocab,
    decode_record,
    encode_record,
    frames_only_accuracy,
    generate_synthetic,
    prototypes,
    read_dataset,
    spec_from_mapping,
    subtitles_only_accuracy,
    write_dataset,
)
from videoqg.errors import ConfigError
from videoqg.vocab import RESERVED


@pytest.fixture(scope="module")
def audit_dataset():
    return generate_synthetic(SyntheticTaskSpec(n_examples=600, rng_seed=11))


def test_same_seed_writes_identical_bytes(tmp_path):
    spec = SyntheticTaskSpec(n_examples=30, frame_dim=8, rng_seed=5)
    write_dataset(generate_synthetic(spec), tmp_path / "a")
    write_dataset(generate_synthetic(spec), tmp_path / "b")
    for name in (FRAMES_FILE, MANIFEST_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs():
    a = generate_synthetic(SyntheticTaskSpec(n_examples=10, rng_seed=0))
    b = generate_synthetic(SyntheticTaskSpec(n_examples=10, rng_seed=1))
    assert a != b


def test_prefix_is_stable_when_growing_the_dataset():
    small = generate_synthetic(SyntheticTaskSpec(n_examples=10, rng_seed=2))
    big = generate_synthetic(SyntheticTaskSpec(n_examples=20, rng_seed=2))
    for a, b in zip(small.clips, big.clips):
        np.testing.assert_array_equal(a.frames, b.frames)
        assert a.subtitle == b.subtitle


def test_zero_noise_frames_are_prototypes():
    spec = SyntheticTaskSpec(n_examples=20, noise_sigma=0.0, rng_seed=4)
    ds = generate_synthetic(spec)
    protos = prototypes(spec)
    for clip, lab in zip(ds.clips, ds.labels):
        s = list(SCENES).index(lab["scene"])
        a = ds.action_tokens.index(lab["action"])
        for row in clip.frames:
            np.testing.assert_array_equal(row, protos[s, a])


def test_entity_is_in_subtitle_and_question(audit_dataset):
    ds = audit_dataset
    for clip, lab in zip(ds.clips, ds.labels):
        ent_sub = ds.subtitle_vocab.stoi[lab["entity"]]
        assert ent_sub in clip.subtitle
        assert lab["entity"] in ds.question_text(clip.question)
        assert lab["action"] in ds.question_text(clip.question)


def test_split_fractions(audit_dataset):
    counts = {s: audit_dataset.splits.count(s) for s in ("train", "val", "test")}
    assert counts == {"train": 480, "val": 60, "test": 60}


def test_modality_audit(audit_dataset):
    assert frames_only_accuracy(audit_dataset, "action") >= 0.99
    assert subtitles_only_accuracy(audit_dataset, "entity") >= 0.99
    chance = 1 / audit_dataset.spec.n_entities
    assert frames_only_accuracy(audit_dataset, "entity") <= chance + 0.1
    assert subtitles_only_accuracy(audit_dataset, "action") <= 1 / audit_dataset.spec.n_actions + 0.1


def test_entity_never_leaks_into_objects(audit_dataset):
    ds = audit_dataset
    assert not set(ds.entity_tokens) & set(ds.object_vocab)


def test_round_trip(tmp_path, tiny_dataset):
    write_dataset(tiny_dataset, tmp_path)
    back = read_dataset(tmp_path)
    assert back == tiny_dataset
    write_dataset(back, tmp_path / "again")
    assert (tmp_path / FRAMES_FILE).read_bytes() == (tmp_path / "again" / FRAMES_FILE).read_bytes()


def test_empty_dataset_round_trips(tmp_path):
    ds = generate_synthetic(SyntheticTaskSpec(n_examples=0))
    write_dataset(ds, tmp_path)
    back = read_dataset(tmp_path)
    assert len(back) == 0 and back == ds


def test_record_codec():
    arr = np.arange(6, dtype=np.float64).reshape(2, 3)
    buf = encode_record(arr)
    out, end = decode_record(buf, 0)
    np.testing.assert_array_equal(out, arr)
    assert end == len(buf)
    bad = bytearray(buf)
    bad[10] ^= 1
    with pytest.raises(ChecksumError):
        decode_record(bytes(bad), 0)
    with pytest.raises(TruncationError):
        decode_record(buf[:-3], 0)


def corrupt(tmp_path, tiny_dataset, edit):
    write_dataset(tiny_dataset, tmp_path)
    path = tmp_path / FRAMES_FILE
    path.write_bytes(edit(path.read_bytes()))
    return tmp_path


def test_bad_magic(tmp_path, tiny_dataset):
    with pytest.raises(MagicError):
        read_dataset(corrupt(tmp_path, tiny_dataset, lambda b: b"XXXX" + b[4:]))


def test_bad_version(tmp_path, tiny_dataset):
    with pytest.raises(VersionError):
        read_dataset(corrupt(tmp_path, tiny_dataset, lambda b: b[:4] + b"\x09\x00" + b[6:]))


def test_truncated_file(tmp_path, tiny_dataset):
    with pytest.raises(TruncationError):
        read_dataset(corrupt(tmp_path, tiny_dataset, lambda b: b[:-10]))


def test_flipped_payload_byte(tmp_path, tiny_dataset):
    def flip(b):
        b = bytearray(b)
        b[40] ^= 0xFF
        return bytes(b)

    with pytest.raises(ChecksumError):
        read_dataset(corrupt(tmp_path, tiny_dataset, flip))


def test_errors_share_a_base():
    for cls in (MagicError, VersionError, TruncationError, ChecksumError):
        assert issubclass(cls, DatasetFormatError)


def test_build_vocab_order_and_min_count():
    vocab = build_vocab([["b", "a", "b"], ["c", "a", "b"]], min_count=2)
    assert vocab.itos[: len(RESERVED)] == list(RESERVED)
    assert vocab.tokens() == ["b", "a"]
    assert vocab.decode(vocab.encode(["c"]), strip_special=False) == ["<unk>"]


def test_build_vocab_from_dataset(tiny_dataset):
    assert set(build_vocab(tiny_dataset).tokens()) == set(tiny_dataset.question_vocab.tokens())


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticTaskSpec(n_entities=99).validate()
    with pytest.raises(ValueError):
        SyntheticTaskSpec(train_fraction=0.5).validate()
    with pytest.raises(ConfigError):
        spec_from_mapping({"n_exampels": "3"})
    assert spec_from_mapping({"n_examples": "3", "noise_sigma": "0.5"}).n_examples == 3
