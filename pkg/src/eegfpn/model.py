"""Full pipeline assembly: flattened epoch batch -> autoencoder ->
reconstruction viewed on the (ch, t) grid -> conv/pool compressor ->
parallel-GRU ensemble -> two-class head.

Also owns the canonical parameter ordering used by the checkpoint format
and the optimizer, and flat pack/unpack helpers for finite-difference
gradient checking.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import autoencoder as ae
from . import gru
from . import head as head_mod
from . import reducer
from .config import RunConfig
from .errors import ShapeError
from .ops import softmax


@dataclass
class ModelParams:
    ae: ae.AeParams
    nsdru: reducer.NsdruParams
    csie: gru.CsieParams
    head: head_mod.HeadParams


@dataclass
class ModelTrace:
    ae: ae.AeTrace
    nsdru: reducer.NsdruTrace
    csie: gru.CsieTrace
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class ModelGrads:
    ae: ae.AeGrads
    nsdru: reducer.NsdruGrads
    csie: list
    head: head_mod.HeadGrads


def init_model(config: RunConfig, ch: int, t: int, seed=None) -> ModelParams:
    """All randomness flows from one seed through spawned child streams."""
    config.validate()
    if seed is None:
        seed = config.seed
    children = np.random.SeedSequence(seed).spawn(4)
    seeds = [int(c.generate_state(1)[0]) for c in children]
    dims = ae.AeDims(d=ch * t, e1=config.e1, e2=config.e2, z=config.z)
    return ModelParams(
        ae=ae.init_ae(dims, seeds[0]),
        nsdru=reducer.init_nsdru(config.nsdru_hidden_channels, seeds[1]),
        csie=gru.init_csie(ch // 2, config.h, config.k, seeds[2]),
        head=head_mod.init_head(config.h, seeds[3]),
    )


def model_forward(
    rows: np.ndarray, ch: int, t: int, params: ModelParams,
    output_activation: str = "relu",
) -> ModelTrace:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != ch * t:
        raise ShapeError(
            f"expected (n, {ch * t}) flattened batch for ch={ch}, t={t}, "
            f"got shape {rows.shape}"
        )
    ae_trace = ae.ae_forward(rows, params.ae, output_activation)
    maps = reducer.reshape_to_map(ae_trace.recon, ch, t)
    nsdru_trace = reducer.nsdru_forward(maps, params.nsdru)
    sequence = gru.map_to_sequence(nsdru_trace.act2)
    csie_trace = gru.csie_forward(sequence, params.csie)
    z = head_mod.logits(csie_trace.aggregate, params.head)
    return ModelTrace(
        ae=ae_trace, nsdru=nsdru_trace, csie=csie_trace,
        logits=z, probs=softmax(z, axis=-1),
    )


def model_loss(trace: ModelTrace, labels, lambda_recon: float) -> float:
    """Mean cross-entropy plus lambda times reconstruction MSE."""
    ce = float(np.mean(head_mod.cross_entropy(trace.probs, labels)))
    if lambda_recon == 0.0:
        return ce
    return ce + lambda_recon * ae.reconstruction_loss(trace.ae.recon, trace.ae.x)


def model_backward(
    trace: ModelTrace, labels, params: ModelParams, lambda_recon: float,
    output_activation: str = "relu",
) -> ModelGrads:
    labels = np.asarray(labels, dtype=np.int64)
    n = trace.probs.shape[0]
    onehot = np.zeros_like(trace.probs)
    onehot[np.arange(n), labels] = 1.0
    d_logits = (trace.probs - onehot) / n

    head_grads = head_mod.head_backward(d_logits, trace.csie.aggregate, params.head)
    branch_grads, d_seq = gru.csie_backward(trace.csie, head_grads.features, params.csie)
    d_map = gru.sequence_to_map_grad(d_seq)
    nsdru_grads = reducer.nsdru_backward(trace.nsdru, d_map, params.nsdru)
    d_recon = nsdru_grads.x.reshape(n, -1)
    if lambda_recon != 0.0:
        d_recon = d_recon + lambda_recon * 2.0 * (trace.ae.recon - trace.ae.x) / trace.ae.recon.size
    ae_grads = ae.ae_backward(trace.ae, d_recon, params.ae, output_activation)
    return ModelGrads(ae=ae_grads, nsdru=nsdru_grads, csie=branch_grads, head=head_grads)


# ---------------------------------------------------------------------------
# Canonical parameter ordering (checkpoints, optimizer state, packing)
# ---------------------------------------------------------------------------

_AE_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "w5", "b5", "w6", "b6")
_NSDRU_FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b")


def param_segments(params: ModelParams):
    """(name, array) pairs in the fixed serialization order."""
    segments = [(f"ae.{name}", getattr(params.ae, name)) for name in _AE_FIELDS]
    segments += [(f"nsdru.{name}", getattr(params.nsdru, name)) for name in _NSDRU_FIELDS]
    for i, branch in enumerate(params.csie.branches):
        segments += [
            (f"gru{i}.{name}", getattr(branch, name)) for name in gru.GATE_FIELD_ORDER
        ]
    segments += [("head.w", params.head.w), ("head.b", params.head.b)]
    return segments


def grad_segments(grads: ModelGrads):
    """Gradient arrays aligned one-to-one with param_segments."""
    segments = [(f"ae.{name}", getattr(grads.ae, name)) for name in _AE_FIELDS]
    segments += [(f"nsdru.{name}", getattr(grads.nsdru, name)) for name in _NSDRU_FIELDS]
    for i, branch in enumerate(grads.csie):
        segments += [
            (f"gru{i}.{name}", getattr(branch, name)) for name in gru.GATE_FIELD_ORDER
        ]
    segments += [("head.w", grads.head.w), ("head.b", grads.head.b)]
    return segments


def n_params(params: ModelParams) -> int:
    return sum(arr.size for _, arr in param_segments(params))


def pack_params(params: ModelParams) -> np.ndarray:
    """Concatenate every parameter into one flat vector (copy)."""
    return np.concatenate([arr.reshape(-1) for _, arr in param_segments(params)])


def unpack_params(theta: np.ndarray, template: ModelParams) -> ModelParams:
    """Rebuild a ModelParams with template's shapes from a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    out = copy.deepcopy(template)
    cursor = 0
    for _, arr in param_segments(out):
        arr[...] = theta[cursor:cursor + arr.size].reshape(arr.shape)
        cursor += arr.size
    if cursor != theta.size:
        raise ShapeError(
            f"flat vector has {theta.size} entries, model needs {cursor}"
        )
    return out


def pack_grads(grads: ModelGrads) -> np.ndarray:
    return np.concatenate([arr.reshape(-1) for _, arr in grad_segments(grads)])
