"""Finite-difference checks for every differentiable op and for whole models."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.error < self.tolerance


def _p(rng, *shape, low=None):
    x = rng.normal(size=shape)
    if low is not None:
        # keep entries away from a kink at zero
        x = np.sign(x) * (np.abs(x) + low)
    return Parameter(x)


def _readout(out: Tensor, rng: np.random.Generator) -> Tensor:
    # a fixed random linear readout makes every output entry matter
    w = rng.normal(size=out.shape)
    return T.sum(out * w)


def _cases(rng: np.random.Generator) -> dict[str, Callable[[], tuple[Callable[[], Tensor], list[Parameter]]]]:
    def unary(op, low=None):
        def build():
            x = _p(rng, 3, 4, low=low)
            w = rng.normal(size=(3, 4))
            return (lambda: T.sum(op(x) * w)), [x]
        return build

    def binary(op, sa, sb):
        def build():
            a, b = _p(rng, *sa), _p(rng, *sb)
            w = rng.normal(size=op(a, b).shape)
            return (lambda: T.sum(op(a, b) * w)), [a, b]
        return build

    def softmax_masked():
        x = _p(rng, 2, 3, 5)
        mask = rng.random((2, 3, 5)) < 0.7
        mask[..., 0] = True
        w = rng.normal(size=(2, 3, 5))
        return (lambda: T.sum(T.softmax_lastdim(x, mask) * w)), [x]

    def layer_norm():
        x, g, b = _p(rng, 2, 3, 6), _p(rng, 6), _p(rng, 6)
        w = rng.normal(size=(2, 3, 6))
        return (lambda: T.sum(T.layer_norm(x, g, b) * w)), [x, g, b]

    def reduce(axis):
        def build():
            x = _p(rng, 2, 3, 4)
            w = rng.normal(size=np.sum(np.zeros((2, 3, 4)), axis=axis).shape)
            return (lambda: T.sum(T.sum(x, axis=axis) * w) + T.sum(T.mean_over_axis(x, axis=axis) * w)), [x]
        return build

    def concat():
        a, b = _p(rng, 2, 3), _p(rng, 2, 5)
        c, d = _p(rng, 4, 3), _p(rng, 1, 3)
        w1, w2 = rng.normal(size=(2, 8)), rng.normal(size=(5, 3))
        return (lambda: T.sum(T.concat_lastdim([a, b]) * w1) + T.sum(T.concat([c, d], axis=0) * w2)), [a, b, c, d]

    def stack():
        a, b = _p(rng, 2, 3), _p(rng, 2, 3)
        w = rng.normal(size=(2, 2, 3))
        return (lambda: T.sum(T.stack([a, b], axis=1) * w)), [a, b]

    def index():
        x = _p(rng, 4, 5)
        rows = np.array([0, 2, 2, 3])
        w1, w2 = rng.normal(size=(4, 5)), rng.normal(size=(2, 3))
        return (lambda: T.sum(T.index(x, rows) * w1) + T.sum(x[1:3, :3] * w2)), [x]

    def take():
        x = _p(rng, 3, 4, 6)
        ids = rng.integers(6, size=(3, 4))
        w = rng.normal(size=(3, 4))
        return (lambda: T.sum(T.take_lastdim(x, ids) * w)), [x]

    def embedding():
        table = _p(rng, 7, 3)
        ids = np.array([[1, 4, 4], [0, 6, 1]])
        w = rng.normal(size=(2, 3, 3))
        return (lambda: T.sum(T.embedding_lookup(table, ids) * w)), [table]

    def shape_ops():
        x = _p(rng, 2, 3, 4)
        w1, w2 = rng.normal(size=(2, 4, 3)), rng.normal(size=(6, 4))
        return (lambda: T.sum(T.transpose(x) * w1) + T.sum(T.reshape(x, (6, 4)) * w2)), [x]

    def dropout():
        x = _p(rng, 3, 4)
        seed = int(rng.integers(1 << 31))
        w = rng.normal(size=(3, 4))
        return (lambda: T.sum(T.dropout(x, 0.3, np.random.default_rng(seed)) * w)), [x]

    return {
        "add": binary(T.add, (2, 3, 4), (4,)),
        "sub": binary(T.sub, (2, 3, 4), (1, 3, 4)),
        "mul": binary(T.mul, (2, 3, 4), (3, 4)),
        "neg": unary(T.neg),
        "scale": unary(lambda x: T.scale(x, -2.5)),
        "tanh": unary(T.tanh),
        "sigmoid": unary(T.sigmoid),
        "relu": unary(T.relu, low=0.1),
        "exp": unary(T.exp),
        "matmul": binary(T.matmul, (2, 3, 4), (4, 5)),
        "matmul_batched": binary(T.matmul, (2, 3, 4), (2, 4, 5)),
        "transpose_reshape": shape_ops,
        "softmax": unary(T.softmax_lastdim),
        "softmax_masked": softmax_masked,
        "log_softmax": unary(T.log_softmax_lastdim),
        "layer_norm": layer_norm,
        "sum_mean_all": reduce(None),
        "sum_mean_axis": reduce(1),
        "concat": concat,
        "stack": stack,
        "index": index,
        "take_lastdim": take,
        "embedding_lookup": embedding,
        "dropout": dropout,
    }


OP_NAMES = tuple(_cases(np.random.default_rng(0)))


def check_ops(seed: int = 0, tolerance: float = OP_TOLERANCE) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, build in _cases(rng).items():
        fn, params = build()
        results.append(CheckResult(name, max(T.finite_difference_check(fn, params)), tolerance))
    return results


def check_model(model, batch, n_params: int = 5, coords_per_param: int = 3, seed: int = 0,
                tolerance: float = MODEL_TOLERANCE) -> list[CheckResult]:
    """Spot-check ``n_params`` randomly chosen parameters of a model's teacher-forced loss."""
    from .training import cross_entropy_loss

    rng = np.random.default_rng(seed)
    named = model.named_parameters()
    chosen = [named[i] for i in sorted(rng.choice(len(named), size=min(n_params, len(named)), replace=False))]

    def loss():
        return cross_entropy_loss(model.logits(batch), batch.question_out, batch.question_mask)

    errors = T.finite_difference_check(loss, [p for _, p in chosen], max_coords=coords_per_param, rng=rng)
    return [CheckResult(name, err, tolerance) for (name, _), err in zip(chosen, errors)]
