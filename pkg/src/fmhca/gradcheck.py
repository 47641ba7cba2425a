"""Finite-difference verification of analytic gradients.

``grad_check`` compares reverse-mode gradients against central
differences elementwise.  ``run_all`` sweeps every differentiable
primitive plus the assembled classifier (small dimensions) and is the
engine behind the ``grad-check`` CLI command.  Checks should run in f64
mode; f32 lacks the headroom for 1e-4 tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import GradCheckFailed
from .rng import Rng
from .tensor import Tensor, backward


def grad_check(
    fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tolerance: float | None = None,
) -> float:
    """Max relative error between analytic and numeric gradients.

    ``fn`` must map the given leaf tensors to a scalar tensor and be
    deterministic across calls.  The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.  If ``tolerance`` is given,
    exceeding it raises ``GradCheckFailed``.
    """
    for t in inputs:
        t.zero_grad()
    loss = fn(inputs)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = float(fn(inputs).data)
            flat[i] = keep - h
            f_minus = float(fn(inputs).data)
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * h)
            ai = float(a.reshape(-1)[i])
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1e-8)
            worst = max(worst, err)
    if tolerance is not None and worst > tolerance:
        raise GradCheckFailed(f"max relative error {worst:.3e} exceeds tolerance {tolerance:.1e}")
    return worst


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _leaf(rng: Rng, shape, offset: float = 0.0) -> Tensor:
    return Tensor(rng.normal(shape) + offset, requires_grad=True)


def _primitive_checks(seed: int) -> list[tuple[str, Callable, list[Tensor]]]:
    rng = Rng(seed)
    checks: list[tuple[str, Callable, list[Tensor]]] = []

    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 2))
    checks.append(("matmul", lambda ts: T.sum_all(T.matmul(ts[0], ts[1])), [a, b]))

    m, v = _leaf(rng, (3, 4)), _leaf(rng, (4,))
    checks.append(("matmul_vec", lambda ts: T.sum_all(T.matmul(ts[0], ts[1])), [m, v]))

    x, y = _leaf(rng, (3, 4)), _leaf(rng, (3, 4))
    w = Tensor(rng.normal((3, 4)))
    checks.append(("add", lambda ts: T.sum_all(T.mul(T.add(ts[0], ts[1]), Tensor(w.data))), [x, y]))

    xb, bias = _leaf(rng, (3, 4)), _leaf(rng, (4,))
    checks.append(("add_bias", lambda ts: T.sum_all(T.mul(T.add(ts[0], ts[1]), Tensor(w.data))), [xb, bias]))

    s1, s2 = _leaf(rng, (2, 3)), _leaf(rng, (2, 3))
    checks.append(("sub", lambda ts: T.sum_all(T.mul(T.sub(ts[0], ts[1]), ts[1])), [s1, s2]))

    p, q = _leaf(rng, (3, 3)), _leaf(rng, (3, 3))
    checks.append(("mul", lambda ts: T.sum_all(T.mul(ts[0], ts[1])), [p, q]))

    sc = _leaf(rng, (2, 5))
    checks.append(("scale", lambda ts: T.sum_all(T.scale(ts[0], 0.37)), [sc]))

    # keep pre-activations away from the relu kink
    r = _leaf(rng, (3, 4), offset=0.5)
    wr = Tensor(rng.normal((3, 4)))
    checks.append(("relu", lambda ts: T.sum_all(T.mul(T.relu(ts[0]), Tensor(wr.data))), [r]))

    sx = _leaf(rng, (3, 5))
    wsx = Tensor(rng.normal((3, 5)))
    checks.append(("masked_softmax", lambda ts: T.sum_all(T.mul(T.masked_softmax(ts[0]), Tensor(wsx.data))), [sx]))

    smx = _leaf(rng, (3, 5))
    msk = np.ones((3, 5), dtype=bool)
    msk[:, 3:] = False
    wm = Tensor(rng.normal((3, 5)))
    checks.append((
        "masked_softmax_masked",
        lambda ts: T.sum_all(T.mul(T.masked_softmax(ts[0], msk), Tensor(wm.data))),
        [smx],
    ))

    lx, lg, lb = _leaf(rng, (3, 6)), _leaf(rng, (6,), offset=1.0), _leaf(rng, (6,))
    wl = Tensor(rng.normal((3, 6)))
    checks.append((
        "layer_norm",
        lambda ts: T.sum_all(T.mul(T.layer_norm(ts[0], ts[1], ts[2]), Tensor(wl.data))),
        [lx, lg, lb],
    ))

    dx = _leaf(rng, (4, 5))
    wd = Tensor(rng.normal((4, 5)))

    def drop_fn(ts):
        # fresh stream per call keeps the mask identical across evaluations
        return T.sum_all(T.mul(T.dropout(ts[0], 0.3, Rng(123), training=True), Tensor(wd.data)))

    checks.append(("dropout", drop_fn, [dx]))

    c1, c2 = _leaf(rng, (2, 3)), _leaf(rng, (4, 3))
    wc = Tensor(rng.normal((6, 3)))
    checks.append(("concat_rows", lambda ts: T.sum_all(T.mul(T.concat(ts, axis=0), Tensor(wc.data))), [c1, c2]))

    d1, d2 = _leaf(rng, (3, 2)), _leaf(rng, (3, 4))
    wcc = Tensor(rng.normal((3, 6)))
    checks.append(("concat_cols", lambda ts: T.sum_all(T.mul(T.concat(ts, axis=1), Tensor(wcc.data))), [d1, d2]))

    v1, v2 = _leaf(rng, (4,)), _leaf(rng, (4,))
    wst = Tensor(rng.normal((2, 4)))
    checks.append(("stack_rows", lambda ts: T.sum_all(T.mul(T.stack_rows(ts), Tensor(wst.data))), [v1, v2]))

    tr = _leaf(rng, (5, 3))
    wtr = Tensor(rng.normal((2, 3)))
    checks.append(("take_rows", lambda ts: T.sum_all(T.mul(T.take_rows(ts[0], 1, 3), Tensor(wtr.data))), [tr]))

    rw = _leaf(rng, (4, 3))
    wrw = Tensor(rng.normal((3,)))
    checks.append(("row", lambda ts: T.sum_all(T.mul(T.row(ts[0], 2), Tensor(wrw.data))), [rw]))

    mr = _leaf(rng, (5, 4))
    wmr = Tensor(rng.normal((4,)))
    checks.append(("mean_rows", lambda ts: T.sum_all(T.mul(T.mean_rows(ts[0]), Tensor(wmr.data))), [mr]))

    tp = _leaf(rng, (2, 5))
    wtp = Tensor(rng.normal((5, 2)))
    checks.append(("transpose", lambda ts: T.sum_all(T.mul(T.transpose(ts[0]), Tensor(wtp.data))), [tp]))

    rs = _leaf(rng, (2, 6))
    wrs = Tensor(rng.normal((4, 3)))
    checks.append(("reshape", lambda ts: T.sum_all(T.mul(T.reshape(ts[0], (4, 3)), Tensor(wrs.data))), [rs]))

    su = _leaf(rng, (3, 3))
    checks.append(("sum_all", lambda ts: T.sum_all(ts[0]), [su]))

    return checks


def run_primitive_checks(seed: int = 0, h: float = 1e-5, tolerance: float = 1e-4) -> list[CheckResult]:
    """Finite-difference check for every differentiable primitive."""
    results = []
    for name, fn, inputs in _primitive_checks(seed):
        results.append(CheckResult(name, grad_check(fn, inputs, h=h), tolerance))
    return results


def run_block_checks(seed: int = 0, h: float = 1e-5, tolerance: float = 1e-4) -> list[CheckResult]:
    """Finite-difference check for attention, encoder, and fusion blocks."""
    from .attention import AttentionConfig, init_mhca_params, multi_head_cross_attention, scaled_dot_attention
    from .fusion import concat_fusion, init_mfb_params, mfb_pool
    from .layers import init_transformer_params, transformer_layer

    rng = Rng(seed)
    results = []

    q, k, v = _leaf(rng, (3, 4)), _leaf(rng, (5, 4)), _leaf(rng, (5, 4))
    wq = Tensor(rng.normal((3, 4)))
    results.append(CheckResult(
        "scaled_dot_attention",
        grad_check(lambda ts: T.sum_all(T.mul(scaled_dot_attention(ts[0], ts[1], ts[2]).context, Tensor(wq.data))),
                   [q, k, v], h=h),
        tolerance,
    ))

    cfg = AttentionConfig(d_model=8, heads=2)
    mp = init_mhca_params(cfg, rng)
    mh_in = _leaf(rng, (3, 8))
    mh_kv = _leaf(rng, (4, 8))
    mh_w = Tensor(rng.normal((3, 8)))
    mh_tensors = [mh_in, mh_kv] + [t for _, t in mp.named("p")]
    results.append(CheckResult(
        "multi_head_cross_attention",
        grad_check(lambda ts: T.sum_all(T.mul(
            multi_head_cross_attention(mp, cfg, ts[0], ts[1]).context, Tensor(mh_w.data))), mh_tensors, h=h),
        tolerance,
    ))

    tp = init_transformer_params(cfg, d_ff=16, rng=rng)
    tx = _leaf(rng, (4, 8))
    tw = Tensor(rng.normal((4, 8)))
    t_tensors = [tx] + [t for _, t in tp.named("enc")]
    results.append(CheckResult(
        "transformer_layer",
        grad_check(lambda ts: T.sum_all(T.mul(transformer_layer(tp, cfg, ts[0]), Tensor(tw.data))), t_tensors, h=h),
        tolerance,
    ))

    mfb = init_mfb_params(d_in=6, d_mfb=5, factors=3, rng=rng)
    f, hh = _leaf(rng, (6,)), _leaf(rng, (6,))
    fw = Tensor(rng.normal((5,)))
    mfb_tensors = [f, hh] + [t for _, t in mfb.named("mfb")]
    results.append(CheckResult(
        "mfb_pool",
        grad_check(lambda ts: T.sum_all(T.mul(mfb_pool(mfb, ts[0], ts[1]), Tensor(fw.data))), mfb_tensors, h=h),
        tolerance,
    ))

    cw, cb = _leaf(rng, (5, 12)), _leaf(rng, (5,))
    f2, h2 = _leaf(rng, (6,)), _leaf(rng, (6,))
    cfw = Tensor(rng.normal((5,)))
    results.append(CheckResult(
        "concat_fusion",
        grad_check(lambda ts: T.sum_all(T.mul(concat_fusion(ts[0], ts[1], ts[2], ts[3]), Tensor(cfw.data))),
                   [f2, h2, cw, cb], h=h),
        tolerance,
    ))

    return results


def run_model_checks(seed: int = 0, h: float = 1e-4, tolerance: float = 1e-4) -> list[CheckResult]:
    """Loss-vs-finite-difference check per parameter group of the assembled models.

    The step is larger than for the primitive checks: deep in the model some
    coordinates carry ~1e-7 gradients, and central-difference rounding noise
    (~eps/2h) must stay below tolerance relative to them.
    """
    from .data import make_batches
    from .model import ModelConfig, build_model, forward
    from .training import cross_entropy_loss
    from .data import OpinionPairSample

    rng = Rng(seed)
    d_emb = 6

    def sample(i: int) -> OpinionPairSample:
        return OpinionPairSample(
            company_id=f"c{i}",
            label=(-1, 0, 1)[i % 3],
            F=rng.normal((3, d_emb)).astype(np.float64),
            H=rng.normal((3, d_emb)).astype(np.float64),
        )

    batch = make_batches([sample(i) for i in range(2)], batch_size=2)[0]
    results = []
    for variant in ("full", "no_cross_attention", "no_fusion", "mlp_baseline"):
        cfg = ModelConfig(d_emb_in=d_emb, d_model=8, heads=2, factors=2, d_mfb=8, d_ff=16,
                          variant=variant, seed=seed, mlp_hidden=8)
        params = build_model(cfg)

        def loss_fn(_ts, params=params, cfg=cfg):
            trace = forward(params, cfg, batch, training=False)
            return cross_entropy_loss(trace.logits, batch.labels)

        groups: dict[str, list[Tensor]] = {}
        for name, t in params.named_tensors():
            groups.setdefault(name.split(".")[0], []).append(t)
        for group, tensors in sorted(groups.items()):
            err = grad_check(loss_fn, tensors, h=h)
            results.append(CheckResult(f"model[{variant}].{group}", err, tolerance))
    return results


def run_all(seed: int = 0, tolerance: float = 1e-4, include_model: bool = True) -> list[CheckResult]:
    results = run_primitive_checks(seed, tolerance=tolerance)
    results += run_block_checks(seed, tolerance=tolerance)
    if include_model:
        results += run_model_checks(seed, tolerance=tolerance)
    return results
