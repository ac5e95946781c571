"""Finite-difference validation of every primitive and the composed models."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, constant, parameter, finite_diff_check
from .graph import GeneratorSpec, generate
from .maxcut import CutModel, CutModelConfig, cut_loss
from .nn import propagation_matrix
from .pool import MaxCutPoolLayer

__all__ = ["primitive_gradchecks", "composite_gradchecks", "full_gradcheck"]


def _rng_mat(rng, rows, cols, low=0.1, high=1.0):
    # Magnitudes bounded away from zero keep relu/elu kinks out of the way.
    signs = rng.choice([-1.0, 1.0], size=(rows, cols))
    return signs * rng.uniform(low, high, (rows, cols))


def primitive_gradchecks(seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Worst relative gradient error per primitive over random inputs."""
    rng = np.random.default_rng(seed)
    ring5 = generate(GeneratorSpec.ring(5))
    prop = propagation_matrix(ring5, 2.0)
    triangle = generate(GeneratorSpec.complete(3))

    a = parameter(_rng_mat(rng, 3, 4), name="a")
    b = parameter(_rng_mat(rng, 4, 2), name="b")
    x5 = parameter(_rng_mat(rng, 5, 3), name="x5")
    x3 = parameter(_rng_mat(rng, 3, 1), name="x3")
    same1 = parameter(_rng_mat(rng, 3, 4), name="same1")
    same2 = parameter(_rng_mat(rng, 3, 4), name="same2")
    bias = parameter(_rng_mat(rng, 1, 4), name="bias")
    logits = parameter(_rng_mat(rng, 4, 3), name="logits")
    targets = rng.integers(0, 3, size=4)
    segments = np.array([0, 0, 1, 1, 2])
    gather_idx = np.array([2, 0, 2])  # repeated index checks accumulation

    checks = {
        "matmul": (lambda p: _sum(lambda t: t.matmul(p[0], p[1])), [a, b]),
        "spmm": (lambda p: _sum(lambda t: t.spmm(prop, p[0])), [x5]),
        "add": (lambda p: _sum(lambda t: t.add(p[0], p[1])), [same1, same2]),
        "add_bias_row": (
            lambda p: _sum(lambda t: t.add_bias_row(p[0], p[1])), [same1, bias]),
        "hadamard": (
            lambda p: _sum(lambda t: t.hadamard(p[0], p[1])), [same1, same2]),
        "scale": (lambda p: _sum(lambda t: t.scale(p[0], -1.7)), [same1]),
        "gather_rows": (
            lambda p: _sum(lambda t: t.gather_rows(p[0], gather_idx)), [same1]),
        "tanh": (lambda p: _sum(lambda t: t.tanh(p[0])), [same1]),
        "relu": (lambda p: _sum(lambda t: t.relu(p[0])), [same1]),
        "elu": (lambda p: _sum(lambda t: t.elu(p[0])), [same1]),
        "reduce_sum": (lambda p: _sum(lambda t: p[0]), [same1]),
        "quadratic_form": (
            lambda p: _scalar(lambda t: t.quadratic_form(p[0], triangle.adjacency)),
            [x3]),
        "softmax_cross_entropy": (
            lambda p: _scalar(lambda t: t.softmax_cross_entropy(p[0], targets)),
            [logits]),
        "global_sum_pool": (
            lambda p: _sum(lambda t: t.global_sum_pool(p[0], segments, 3)), [x5]),
        "dropout": (
            lambda p: _sum(lambda t: t.dropout(p[0], 0.3, True, 1234)), [same1]),
    }
    return {kind: finite_diff_check(f, params, eps)
            for kind, (f, params) in checks.items()}


def _sum(build):
    tape = Tape()
    out = build(tape)
    return tape.reduce_sum(out)


def _scalar(build):
    tape = Tape()
    return build(tape)


def composite_gradchecks(seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Gradient checks through the composed cut model and pooling pipeline.

    Small layer sizes keep the parameter count (and the finite-difference
    sweep) manageable; the wiring is identical to the full-size models. The
    pooling check freezes the top-K indices and assignment between
    evaluations, since index selection itself is not differentiable.
    """
    rng = np.random.default_rng(seed)
    g = generate(GeneratorSpec.ring(8))
    config = CutModelConfig(gin_width=4, hetmp_sizes=(4, 4), mlp_sizes=(4,),
                            surrogate_feature_dim=2)
    model = CutModel(2, config, seed)
    feats = rng.standard_normal((8, 2))
    prop = propagation_matrix(g, config.delta)

    def cut_model_loss(_params):
        tape = Tape()
        scores = model.forward(tape, constant(feats), g, prop)
        return cut_loss(tape, scores, g)

    results = {
        "cut_model": finite_diff_check(cut_model_loss, model.parameters(), eps)
    }

    layer = MaxCutPoolLayer(2, seed + 1, ratio=0.5, variant="expressive",
                            hetmp_sizes=(4, 4), mlp_sizes=(4,))
    frozen_out = layer.forward(Tape(), g, constant(feats), seed=seed, prop=prop)
    frozen = (frozen_out.select, frozen_out.assignment)

    def pooling_loss(_params):
        tape = Tape()
        out = layer.forward(tape, g, constant(feats), seed=seed, prop=prop,
                            frozen=frozen)
        pooled_sum = tape.reduce_sum(out.pooled_features)
        return tape.add(pooled_sum, out.aux_loss)

    results["pooling_pipeline"] = finite_diff_check(
        pooling_loss, layer.parameters(), eps)
    return results


def full_gradcheck(seeds=(0, 1, 2, 3, 4), eps: float = 1e-5) -> dict[str, float]:
    """Worst error per check across several seeds."""
    worst: dict[str, float] = {}
    for seed in seeds:
        for name, err in {**primitive_gradchecks(seed, eps),
                          **composite_gradchecks(seed, eps)}.items():
            worst[name] = max(worst.get(name, 0.0), err)
    return worst
