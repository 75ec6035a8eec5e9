"""Per-SpacePoint evaluation models and closed-form cost expressions.

Durations are in cycles.  Evaluators bound to points return integer cycle
counts (ceiled at the boundary); contention arithmetic elsewhere stays in
exact :class:`~fractions.Fraction` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Mapping, Optional, Sequence


class EvaluatorError(ValueError):
    pass


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def roofline_compute(ops, throughput, bytes_moved=0, local_bandwidth=None) -> int:
    """Cycles for a compute task: ``ceil(max(ops / throughput, bytes / bandwidth))``."""
    ops, throughput, bytes_moved = _frac(ops), _frac(throughput), _frac(bytes_moved)
    if throughput <= 0:
        raise EvaluatorError("roofline: throughput must be > 0")
    if local_bandwidth is None:
        if bytes_moved:
            raise EvaluatorError("roofline: bytes moved but no local bandwidth given")
        mem = Fraction(0)
    else:
        bw = _frac(local_bandwidth)
        if bw <= 0:
            raise EvaluatorError("roofline: local bandwidth must be > 0")
        mem = bytes_moved / bw
    if ops < 0 or bytes_moved < 0:
        raise EvaluatorError("roofline: negative work")
    return _ceil(max(ops / throughput, mem))


def link_transfer(hops, hop_latency, volume, effective_bw, quantize=True):
    """``hops * hop_latency + volume / effective_bw``.

    ``effective_bw`` is whatever share of the link the caller's contention
    model grants.  With ``quantize`` the transfer term is ceiled to whole
    cycles, otherwise the exact rational is returned.
    """
    effective_bw = _frac(effective_bw)
    if effective_bw <= 0:
        raise EvaluatorError("link_transfer: effective bandwidth must be > 0")
    if hops < 0:
        raise EvaluatorError("link_transfer: negative hop count")
    xfer = _frac(volume) / effective_bw
    if quantize:
        xfer = Fraction(_ceil(xfer))
    out = hops * _frac(hop_latency) + xfer
    return int(out) if quantize and out.denominator == 1 else out


def all_reduce_latency(n, link_latency, size, bandwidth) -> Fraction:
    """Latency-bandwidth All-Reduce: ring reduce followed by an all-gather.

    ``T = (n-1)L + (n-1)S/(nB) + L + 2S/B`` with ``L`` in time units, ``S`` in
    bytes and ``B`` in bytes per time unit; the result is in time units.
    """
    if n < 1:
        raise EvaluatorError("all_reduce_latency: need at least one device")
    L, S, B = _frac(link_latency), _frac(size), _frac(bandwidth)
    if B <= 0:
        raise EvaluatorError("all_reduce_latency: bandwidth must be > 0")
    if L < 0 or S < 0:
        raise EvaluatorError("all_reduce_latency: negative latency or size")
    return (n - 1) * L + (n - 1) * S / (n * B) + L + 2 * S / B


@dataclass(frozen=True)
class StorageLifetime:
    size: int
    start: Fraction
    end: Fraction
    leaked: bool = False

    @property
    def duration(self) -> Fraction:
        return self.end - self.start


def storage_footprint(size, input_ticks: Sequence, access_times: Sequence, horizon=None) -> StorageLifetime:
    """Occupancy interval of a storage task.

    Starts at the earliest incoming tick and ends at the last consumer access.
    A never-consumed buffer lives until ``horizon`` (the end of simulation)
    and is flagged as leaked.
    """
    if not input_ticks:
        raise EvaluatorError("storage_footprint: storage task received no ticks")
    start = min(_frac(t) for t in input_ticks)
    if access_times:
        end = max(_frac(t) for t in access_times)
        leaked = False
    else:
        if horizon is None:
            raise EvaluatorError("storage_footprint: unconsumed storage needs a horizon")
        end = max(_frac(horizon), start)
        leaked = True
    if end < start:
        raise EvaluatorError(
            f"storage_footprint: negative lifetime [{start}, {end}] (scheduler bug)"
        )
    return StorageLifetime(int(size), start, end, leaked)


# --------------------------------------------------------------------------
# registry

EvalFn = Callable[[Mapping, Mapping], object]


@dataclass(frozen=True)
class EvaluationModel:
    name: str
    kinds: FrozenSet[str]
    fn: EvalFn = field(compare=False)
    description: str = ""

    def __call__(self, params: Mapping, work: Mapping):
        out = self.fn(params, work)
        if out < 0:
            raise EvaluatorError(f"evaluator {self.name} returned negative duration {out}")
        return out


def _roofline(params, work):
    return roofline_compute(
        work.get("ops", 0),
        params.get("throughput", 0),
        work.get("bytes", 0),
        params.get("local_bandwidth"),
    )


def _link(params, work):
    topo = params["topology"]
    return link_transfer(work.get("hops", 1), topo.hop_latency, work["volume"], topo.link_bandwidth)


def _storage(params, work):
    return 0


_REGISTRY: Dict[str, EvaluationModel] = {}


def register_evaluator(name: str, kinds, fn: EvalFn, description: str = "", replace=False) -> EvaluationModel:
    if name in _REGISTRY and not replace:
        raise EvaluatorError(f"evaluator {name!r} already registered")
    model = EvaluationModel(name, frozenset(kinds), fn, description)
    _REGISTRY[name] = model
    return model


def get_evaluator(name: str) -> EvaluationModel:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise EvaluatorError(f"unknown evaluator {name!r}") from None


def list_evaluators():
    return [_REGISTRY[k] for k in sorted(_REGISTRY)]


DEFAULT_EVALUATOR = {"compute": "roofline", "memory": "storage", "communication": "link", "absent": "none"}

register_evaluator("roofline", {"compute"}, _roofline, "max(ops/throughput, bytes/local_bandwidth), ceiled")
register_evaluator("link", {"communication"}, _link, "hops*hop_latency + volume/bandwidth, ceiled")
register_evaluator("storage", {"memory"}, _storage, "occupancy only; lifetime from tick timestamps")
register_evaluator("none", {"absent"}, lambda p, w: 0, "placeholder for absent elements")
