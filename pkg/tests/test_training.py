import io
import json
import math

import numpy as np
import pytest

from conftest import tiny_settings
from videoqg import tensor as T
from videoqg import training
from videoqg.checkpoint import (
    MAGIC,
    capture,
    from_bytes,
    load_checkpoint,
    restore_rng,
    save_checkpoint,
    to_bytes,
)
from videoqg.data import MagicError, TruncationError, VersionError
from videoqg.errors import ConfigError, NumericError
from videoqg.features import make_batch
from videoqg.gradcheck import check_model
from videoqg.models import build_model
from videoqg.tensor import Parameter, Tensor
from videoqg.training import (
    SGD,
    Adam,
    TrainConfig,
    batch_loss,
    clip_grad_norm,
    cross_entropy_loss,
    make_optimizer,
    optimizer_step,
    train,
)


def test_uniform_logits_give_log_vocab():
    V = 7
    loss = cross_entropy_loss(Tensor(np.zeros((2, 3, V))), np.ones((2, 3), dtype=int), np.ones((2, 3), bool))
    assert loss.item() == pytest.approx(math.log(V), abs=1e-15)


def test_hand_two_step_example():
    logits = Tensor(np.array([[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]]))
    loss = cross_entropy_loss(logits, np.array([[2, 0]]), np.array([[True, True]]))
    # (-(3 - ln(e + e^2 + e^3)) + ln 3) / 2 by calculator
    assert loss.item() == pytest.approx(0.7531091265562451, abs=1e-15)


def test_margin_drives_loss_to_zero():
    losses = []
    for margin in (1.0, 10.0, 100.0):
        logits = np.zeros((1, 1, 4))
        logits[0, 0, 2] = margin
        losses.append(cross_entropy_loss(Tensor(logits), np.array([[2]]), np.array([[True]])).item())
    assert losses[0] > losses[1] > losses[2] and losses[2] < 1e-40


def test_padding_is_ignored_and_all_pad_rejected():
    logits = Tensor(np.random.default_rng(0).normal(size=(1, 3, 5)))
    a = cross_entropy_loss(logits, np.array([[1, 2, 0]]), np.array([[True, True, False]])).item()
    b = cross_entropy_loss(Tensor(logits.data[:, :2]), np.array([[1, 2]]), np.array([[True, True]])).item()
    assert a == pytest.approx(b, abs=1e-15)
    with pytest.raises(ValueError):
        cross_entropy_loss(logits, np.zeros((1, 3), int), np.zeros((1, 3), bool))


def test_large_logits_are_stable():
    logits = Tensor(np.array([[[1000.0, 0.0]]]))
    assert cross_entropy_loss(logits, np.array([[1]]), np.array([[True]])).item() == pytest.approx(1000.0)


def param(values, grad):
    p = Parameter(np.array(values, dtype=np.float64))
    p.grad = np.array(grad, dtype=np.float64)
    return p


def test_sgd_step_is_exact():
    p = param([1.0, -2.0], [0.25, 0.5])
    SGD([("p", p)], lr=1.0).step()
    np.testing.assert_array_equal(p.data, [0.75, -2.5])


def test_adam_first_step_is_lr_times_sign():
    g = np.array([3.0, -0.02, 1e-3])
    p = param([0.0, 0.0, 0.0], g)
    Adam([("p", p)], lr=0.01).step()
    np.testing.assert_allclose(p.data, -0.01 * np.sign(g), rtol=1e-4)


def test_adam_state_round_trip():
    p = param([1.0], [0.5])
    opt = Adam([("p", p)], lr=0.1)
    opt.step()
    state = opt.state()
    assert set(state) == {"m.p", "v.p"}
    other = Adam([("p", param([1.0], [0.0]))], lr=0.1)
    other.load_state(opt.t, state)
    np.testing.assert_array_equal(other.m["p"], opt.m["p"])
    assert other.t == 1


def test_clip_scales_to_threshold():
    a, b = param([0.0], [3.0]), param([0.0, 0.0], [0.0, 4.0])
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert training.global_grad_norm([a, b]) == pytest.approx(1.0, abs=1e-15)
    c = param([0.0], [0.5])
    clip_grad_norm([c], 1.0)
    assert c.grad[0] == 0.5


def test_nan_gradient_names_the_parameter(make_model):
    model = make_model()
    name, p = model.named_parameters()[3]
    for _, q in model.named_parameters():
        q.grad = np.zeros_like(q.data)
    p.grad = p.grad.copy()
    p.grad.flat[0] = np.nan
    with pytest.raises(NumericError, match=name.replace(".", r"\.")):
        optimizer_step(model, make_optimizer(model, TrainConfig()), TrainConfig())


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop").validate()
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0).validate()


def test_same_seed_same_trace(make_model, tiny_dataset):
    cfg = TrainConfig(max_steps=6, batch_size=4, eval_every=3)
    train_clips, val = tiny_dataset.split("train"), tiny_dataset.split("val")
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        train(make_model(seed=1), train_clips, cfg, val, log=buf)
        logs.append(buf.getvalue())
    assert logs[0] == logs[1]
    records = [json.loads(line) for line in logs[0].splitlines()]
    assert [r["step"] for r in records] == list(range(1, 7))
    assert records[2]["val_loss"] is not None and records[0]["val_loss"] is None


def test_early_stopping_and_best_state(make_model, tiny_dataset, monkeypatch):
    vals = iter([3.0, 2.0, 2.5, 2.6, 2.7, 1.0])
    snapshots = {}
    real = training.evaluate_loss

    def fake(model, clips, batch_size=64):
        real(model, clips, batch_size)
        snapshots[len(snapshots) + 1] = model.state_dict()
        return next(vals)

    monkeypatch.setattr(training, "evaluate_loss", fake)
    model = make_model()
    cfg = TrainConfig(max_steps=50, batch_size=4, eval_every=1, patience=3)
    result = train(model, tiny_dataset.split("train"), cfg, tiny_dataset.split("val"))
    assert result.stopped_early and result.steps == 5
    assert result.best_step == 2 and result.best_val_loss == 2.0
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, snapshots[2][k])


def test_stop_below(make_model, tiny_dataset):
    result = train(make_model(), tiny_dataset.split("train"), TrainConfig(max_steps=50, stop_below=100.0))
    assert result.steps == 1


def test_sgd_descent_on_ten_inits(tiny_dataset):
    clips = tiny_dataset.clips[:8]
    for seed in range(10):
        model = build_model(tiny_settings(seed=seed).spec_for(tiny_dataset))
        model.zero_grad()
        loss = batch_loss(model, clips)
        T.backward(loss)
        SGD(model.named_parameters(), lr=1e-3).step()
        with T.no_grad():
            assert batch_loss(model, clips).item() < loss.item()


def test_full_model_spot_check(make_model, tiny_dataset):
    results = check_model(make_model(), make_batch(tiny_dataset.clips[:2]), n_params=5)
    assert len(results) >= 5
    assert all(r.error < 1e-3 for r in results), [(r.name, r.error) for r in results]


@pytest.fixture
def trained(make_model, tiny_dataset):
    model = make_model(seed=2)
    cfg = TrainConfig(max_steps=3, batch_size=4)
    opt = make_optimizer(model, cfg)
    rng = np.random.default_rng(9)
    train(model, tiny_dataset.split("train"), cfg, optimizer=opt, rng=rng)
    return model, opt, rng


def test_checkpoint_bytes_are_stable(tmp_path, trained):
    model, opt, rng = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(capture(model, opt, step=3, rng=rng, extra={"note": "x"}), path)
    first = path.read_bytes()
    assert first.startswith(MAGIC)
    save_checkpoint(load_checkpoint(path), tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == first


def test_checkpoint_logits_are_bit_identical(tmp_path, trained, tiny_dataset):
    model, opt, rng = trained
    ckpt = from_bytes(to_bytes(capture(model, opt, step=3, rng=rng)))
    batch = make_batch(tiny_dataset.clips[:4])
    np.testing.assert_array_equal(ckpt.model().logits(batch).data, model.logits(batch).data)
    assert ckpt.optimizer_step == opt.t and ckpt.step == 3
    restored = restore_rng(ckpt.rng_state)
    assert restored.random() == rng.random()


def test_resumed_optimizer_matches(trained, tiny_dataset):
    model, opt, _ = trained
    ckpt = from_bytes(to_bytes(capture(model, opt)))
    clone = ckpt.model()
    clone_opt = make_optimizer(clone, TrainConfig())
    clone_opt.load_state(ckpt.optimizer_step, ckpt.optimizer_state)
    clips = tiny_dataset.clips[:4]
    for m, o in ((model, opt), (clone, clone_opt)):
        m.zero_grad()
        T.backward(batch_loss(m, clips))
        optimizer_step(m, o, TrainConfig())
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, clone.state_dict()[k])


def test_checkpoint_format_errors(trained):
    model, opt, _ = trained
    buf = to_bytes(capture(model, opt))
    with pytest.raises(MagicError):
        from_bytes(b"NOPE" + buf[4:])
    with pytest.raises(VersionError):
        from_bytes(buf[:4] + b"\x63\x00" + buf[6:])
    with pytest.raises(TruncationError):
        from_bytes(buf[:-8])


def test_kinds_all_checkpoint(tiny_dataset):
    for kind in ("srcmsa", "s2vt", "imgd"):
        model = build_model(tiny_settings(kind).spec_for(tiny_dataset))
        assert from_bytes(to_bytes(capture(model))).model().spec == model.spec
