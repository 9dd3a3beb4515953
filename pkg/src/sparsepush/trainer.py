"""Sparse-Push training and its skew-compensated variant.

One iteration, for every node ``i`` in lockstep:

1. draw a minibatch from the local shard (without replacement within an epoch)
2. ``g = grad F_i(z_i)``;  ``x_hat = sgd_step(x_i, g)``
3. ``v = x_hat + delta_i``;  send ``C[v]`` and ``u_i``;  ``delta_i = v - C[v]``
4. ``x_i, u_i <- push-sum round`` with ``x_hat`` as base and ``C[v]`` as messages
5. ``z_i = x_i / u_i``

Steps 1-3 are independent per node and may run on a thread pool. Step 4 runs
once all messages of the round exist. The skew-compensated variant appends
``scsp_k`` uncompressed gossip rounds on ``x`` and ``u``, without gradient
steps.

Byte accounting counts, for every non-self edge ``j -> i``, the serialized
payload of ``j`` plus eight bytes for its bias weight.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .compression import HEADER_BYTES, CompressionSpec, compress, decompress
from .consensus import MixingPlan, debias, gossip_round
from .data import LabeledDataset
from .errors import InvalidArgument
from .learning import Architecture, Model, SgdConfig, _loss_and_grad, evaluate, sgd_step
from .seeding import substream
from .topology import GraphSchedule, effective_mixing_matrix

__all__ = [
    "NodeState",
    "TrainConfig",
    "EvalRecord",
    "RunLog",
    "default_eta",
    "init_nodes",
    "sp_iteration",
    "sp_train",
    "scsp_train",
    "train",
    "parameter_divergence",
    "BIAS_BYTES",
]

BIAS_BYTES = 8

# (kept fraction, averaging rate) pairs tuned per compression level.
_ETA_TABLE = ((0.001, 0.001), (0.01, 0.005), (0.1, 0.01), (0.5, 0.08), (1.0, 1.0))


def default_eta(spec: CompressionSpec) -> float:
    """Averaging rate for ``spec``: table lookup, log-log interpolated, clamped at the ends."""
    p = spec.keep_fraction
    for a, b in _ETA_TABLE:
        if p == a:
            return b
    xs = [math.log(a) for a, _ in _ETA_TABLE]
    ys = [math.log(b) for _, b in _ETA_TABLE]
    return float(math.exp(np.interp(math.log(p), xs, ys)))


@dataclass
class NodeState:
    x: np.ndarray
    delta: np.ndarray
    u: float
    z: np.ndarray
    momentum_buf: np.ndarray
    local_data: LabeledDataset
    rng: np.random.Generator
    compress_rng: np.random.Generator
    _order: np.ndarray | None = field(default=None, repr=False)
    _cursor: int = field(default=0, repr=False)
    _features: np.ndarray | None = field(default=None, repr=False)

    def start_epoch(self) -> None:
        self._order = self.rng.permutation(len(self.local_data))
        self._cursor = 0

    def next_batch(self, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
        if self._order is None or self._cursor >= self._order.shape[0]:
            self.start_epoch()
        idx = self._order[self._cursor : self._cursor + batch_size]
        self._cursor += batch_size
        if self._features is None or self._features.dtype != self.x.dtype:
            self._features = np.ascontiguousarray(self.local_data.features, dtype=self.x.dtype)
        return self._features[idx], self.local_data.labels[idx]


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run.

    ``eta=None`` picks :func:`default_eta` for the compression level. The tail
    of the skew-compensated variant mixes uncompressed models with
    ``tail_eta``, or with the training ``eta`` when it is None. ``isolated=True`` disables all communication.
    """

    schedule: GraphSchedule
    arch: Architecture
    sgd: SgdConfig = field(default_factory=SgdConfig)
    compression: CompressionSpec = field(default_factory=CompressionSpec.identity)
    eta: float | None = None
    epochs: int = 1
    scsp_k: int = 0
    tail_eta: float | None = None
    seed: int = 0
    dtype: str = "float32"
    eval_every: int = 1
    isolated: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.eta is None:
            object.__setattr__(self, "eta", default_eta(self.compression))
        if not (0.0 < self.eta <= 1.0):
            raise InvalidArgument(f"eta must lie in (0, 1], got {self.eta}")
        if self.tail_eta is not None and not (0.0 < self.tail_eta <= 1.0):
            raise InvalidArgument(f"tail_eta must lie in (0, 1], got {self.tail_eta}")
        if self.scsp_k < 0:
            raise InvalidArgument(f"scsp_k must be >= 0, got {self.scsp_k}")
        if self.epochs < 0:
            raise InvalidArgument(f"epochs must be >= 0, got {self.epochs}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidArgument(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.eval_every < 1:
            raise InvalidArgument(f"eval_every must be >= 1, got {self.eval_every}")
        if self.workers < 1:
            raise InvalidArgument(f"workers must be >= 1, got {self.workers}")

    @property
    def tail_rate(self) -> float:
        return self.eta if self.tail_eta is None else self.tail_eta

    @property
    def n_nodes(self) -> int:
        return self.schedule.n


@dataclass(frozen=True)
class EvalRecord:
    epoch: int
    mean_train_loss: float
    avg_test_accuracy: float
    parameter_divergence: float
    cumulative_bytes_sent: int
    compression_factor: float
    phase: str = "train"


_COLUMNS = (
    "epoch",
    "mean_train_loss",
    "avg_test_accuracy",
    "parameter_divergence",
    "cumulative_bytes_sent",
    "compression_factor",
    "phase",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunLog:
    """Evaluation records of one run.

    ``avg_test_accuracy`` holds the mean over nodes of the test metric: accuracy
    for classifiers, MSE for regression.
    """

    records: list[EvalRecord] = field(default_factory=list)

    def append(self, record: EvalRecord) -> None:
        if self.records and record.cumulative_bytes_sent < self.records[-1].cumulative_bytes_sent:
            raise InvalidArgument("cumulative_bytes_sent must be non-decreasing")
        self.records.append(record)

    @property
    def final(self) -> EvalRecord:
        return self.records[-1]

    def train_only(self) -> "RunLog":
        """Copy without the records of the uncompressed tail."""
        return RunLog([r for r in self.records if r.phase == "train"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for rec in self.records:
            writer.writerow([_fmt(getattr(rec, c)) for c in _COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.final
        return {
            "final_accuracy": last.avg_test_accuracy,
            "final_divergence": last.parameter_divergence,
            "total_bytes": last.cumulative_bytes_sent,
            "compression_factor": last.compression_factor,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def parameter_divergence(models: Sequence[np.ndarray]) -> float:
    """Mean L2 distance of each model from the average model."""
    if len(models) == 0:
        raise InvalidArgument("parameter_divergence needs at least one model")
    stack = np.array([np.asarray(m, dtype=np.float64) for m in models])
    mean = stack.mean(axis=0)
    return float(np.mean(np.linalg.norm(stack - mean, axis=1)))


def init_nodes(cfg: TrainConfig, parts: Sequence[LabeledDataset]) -> list[NodeState]:
    """Fresh node states; every node starts from the same model."""
    if len(parts) != cfg.n_nodes:
        raise InvalidArgument(f"{len(parts)} data shards for a {cfg.n_nodes}-node schedule")
    dtype = np.dtype(cfg.dtype)
    x0 = cfg.arch.init_params(substream(cfg.seed, "init"), dtype)
    nodes = []
    for i, shard in enumerate(parts):
        if len(shard) == 0:
            raise InvalidArgument(f"node {i} has no training data")
        if shard.d_in != cfg.arch.d_in:
            raise InvalidArgument(f"node {i} data has d_in={shard.d_in}, model expects {cfg.arch.d_in}")
        nodes.append(
            NodeState(
                x=x0.copy(),
                delta=np.zeros_like(x0),
                u=1.0,
                z=x0.copy(),
                momentum_buf=np.zeros_like(x0),
                local_data=shard,
                rng=substream(cfg.seed, f"node/{i}/batches"),
                compress_rng=substream(cfg.seed, f"node/{i}/compress"),
            )
        )
    return nodes


@dataclass
class _LocalResult:
    loss: float
    x_hat: np.ndarray
    msg: np.ndarray | None
    wire: int


def _local_phase(node: NodeState, cfg: TrainConfig, epoch: int) -> _LocalResult:
    features, labels = node.next_batch(cfg.sgd.batch_size)
    loss, grad = _loss_and_grad(cfg.arch, node.z, features, labels)
    x_hat, _ = sgd_step(node.x, grad, node.momentum_buf, cfg.sgd, epoch)
    if cfg.isolated:
        return _LocalResult(loss, x_hat, None, 0)
    v = x_hat + node.delta
    payload = compress(v, cfg.compression, node.compress_rng)
    msg = decompress(payload)
    node.delta = v - msg
    return _LocalResult(loss, x_hat, msg, payload.wire_bytes)


class _Plans:
    """Cache of CSR mixing plans keyed by (topology, eta)."""

    def __init__(self) -> None:
        self._cache: dict[tuple[int, float], tuple[object, MixingPlan, list[int]]] = {}

    def get(self, topo, eta: float) -> tuple[MixingPlan, list[int]]:
        key = (id(topo), eta)
        hit = self._cache.get(key)
        # The topology is kept in the entry so its id cannot be recycled.
        if hit is None or hit[0] is not topo:
            plan = MixingPlan.from_matrix(effective_mixing_matrix(topo, eta))
            fanout = [len(topo.out_neighbours(j)) for j in range(topo.n)]
            hit = (topo, plan, fanout)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = hit
        return hit[1], hit[2]


_PLANS = _Plans()


def sp_iteration(
    nodes: list[NodeState],
    plan: MixingPlan,
    fanout: Sequence[int],
    cfg: TrainConfig,
    epoch: int,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[int, float]:
    """Advance every node by one iteration in place.

    ``fanout[j]`` is the number of non-self out-neighbours of node ``j`` under
    the current topology. Returns ``(bytes_sent, mean_batch_loss)``.
    """
    if pool is not None:
        results = list(pool.map(lambda nd: _local_phase(nd, cfg, epoch), nodes))
    else:
        results = [_local_phase(nd, cfg, epoch) for nd in nodes]
    loss = sum(r.loss for r in results) / len(results)
    if cfg.isolated:
        for nd, r in zip(nodes, results):
            nd.x = r.x_hat
            nd.z = debias(nd.x, nd.u)
        return 0, loss
    base = np.stack([r.x_hat for r in results])
    msgs = np.stack([r.msg for r in results])
    u = np.array([nd.u for nd in nodes])
    x_next, u_next = gossip_round(base, u, plan, msgs)
    z_next = debias(x_next, u_next)
    sent = 0
    for j, (nd, r) in enumerate(zip(nodes, results)):
        nd.x = x_next[j]
        nd.u = float(u_next[j])
        nd.z = z_next[j]
        sent += fanout[j] * (r.wire + BIAS_BYTES)
    return sent, loss


def _dense_message_bytes(cfg: TrainConfig) -> int:
    return HEADER_BYTES + cfg.arch.num_params * np.dtype(cfg.dtype).itemsize + BIAS_BYTES


def iterations_per_epoch(parts: Sequence[LabeledDataset], batch_size: int) -> int:
    """Lockstep iteration count: batches needed to cover the smallest shard once."""
    return max(1, -(-min(len(p) for p in parts) // batch_size))


class _Recorder:
    def __init__(self, cfg: TrainConfig, test: LabeledDataset):
        self.cfg = cfg
        self.test = test
        self.log = RunLog()
        self.bytes = 0
        self.dense_bytes = 0
        self._losses: list[float] = []

    def add_iteration(self, sent: int, loss: float, n_edges: int, n_messages_dense: int) -> None:
        self.bytes += sent
        self.dense_bytes += n_messages_dense
        self._losses.append(loss)

    def factor(self) -> float:
        if self.bytes == 0:
            return math.inf if self.dense_bytes else 1.0
        return self.dense_bytes / self.bytes

    def record(self, epoch: int, zs: Sequence[np.ndarray], phase: str = "train") -> None:
        accs = [evaluate(Model(self.cfg.arch, z), self.test) for z in zs]
        loss = float(np.mean(self._losses)) if self._losses else math.nan
        self._losses = []
        self.log.append(
            EvalRecord(
                epoch=epoch,
                mean_train_loss=loss,
                avg_test_accuracy=float(np.mean(accs)),
                parameter_divergence=parameter_divergence(zs),
                cumulative_bytes_sent=int(self.bytes),
                compression_factor=float(self.factor()),
                phase=phase,
            )
        )


def _train_phase(
    cfg: TrainConfig,
    nodes: list[NodeState],
    parts: Sequence[LabeledDataset],
    rec: _Recorder,
    on_iteration: Callable[[int, list[NodeState]], None] | None,
) -> None:
    per_epoch = iterations_per_epoch(parts, cfg.sgd.batch_size)
    dense = _dense_message_bytes(cfg)
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    t = 0
    try:
        for epoch in range(cfg.epochs):
            topo = cfg.schedule.topology_at(epoch)
            plan, fanout = _PLANS.get(topo, cfg.eta)
            edges = sum(fanout)
            for nd in nodes:
                nd.start_epoch()
            for _ in range(per_epoch):
                sent, loss = sp_iteration(nodes, plan, fanout, cfg, epoch, pool)
                rec.add_iteration(sent, loss, edges, edges * dense)
                t += 1
                if on_iteration is not None:
                    on_iteration(t, nodes)
            if (epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs:
                rec.record(epoch + 1, [nd.z for nd in nodes])
    finally:
        if pool is not None:
            pool.shutdown()
    if cfg.epochs == 0:
        rec.record(0, [nd.z for nd in nodes])


def _tail_phase(cfg: TrainConfig, nodes: list[NodeState], rec: _Recorder) -> None:
    if cfg.scsp_k == 0:
        return
    topo = cfg.schedule.topology_at(cfg.epochs)
    plan, fanout = _PLANS.get(topo, cfg.tail_rate)
    dense = _dense_message_bytes(cfg)
    edges = sum(fanout)
    x = np.stack([nd.x for nd in nodes])
    u = np.array([nd.u for nd in nodes])
    for _ in range(cfg.scsp_k):
        x, u = gossip_round(x, u, plan)
        rec.bytes += edges * dense
        rec.dense_bytes += edges * dense
    z = debias(x, u)
    for j, nd in enumerate(nodes):
        nd.x = x[j]
        nd.u = float(u[j])
        nd.z = z[j]
    rec.record(cfg.epochs, [nd.z for nd in nodes], phase="tail")


def sp_train(
    cfg: TrainConfig,
    parts: Sequence[LabeledDataset],
    test: LabeledDataset,
    on_iteration: Callable[[int, list[NodeState]], None] | None = None,
) -> tuple[list[np.ndarray], RunLog]:
    """Train with compressed push-sum gossip for ``cfg.epochs`` epochs.

    ``cfg.scsp_k`` is ignored. ``on_iteration(t, nodes)`` is called after every
    iteration, mainly for tests and tracing. Returns the de-biased models.
    """
    nodes = init_nodes(cfg, parts)
    rec = _Recorder(cfg, test)
    _train_phase(cfg, nodes, parts, rec, on_iteration)
    return [nd.z.copy() for nd in nodes], rec.log


def scsp_train(
    cfg: TrainConfig,
    parts: Sequence[LabeledDataset],
    test: LabeledDataset,
    on_iteration: Callable[[int, list[NodeState]], None] | None = None,
) -> tuple[list[np.ndarray], RunLog]:
    """:func:`sp_train` followed by ``cfg.scsp_k`` uncompressed gossip rounds.

    With ``scsp_k == 0`` the result is identical to :func:`sp_train`.
    """
    nodes = init_nodes(cfg, parts)
    rec = _Recorder(cfg, test)
    _train_phase(cfg, nodes, parts, rec, on_iteration)
    _tail_phase(cfg, nodes, rec)
    return [nd.z.copy() for nd in nodes], rec.log


def train(cfg: TrainConfig, parts: Sequence[LabeledDataset], test: LabeledDataset):
    """Run the skew-compensated variant when ``cfg.scsp_k > 0``, plain training otherwise."""
    return scsp_train(cfg, parts, test)


def with_options(cfg: TrainConfig, **changes) -> TrainConfig:
    """Copy of ``cfg`` with fields replaced; ``eta`` is re-derived if the compression changes."""
    if "compression" in changes and "eta" not in changes:
        changes["eta"] = None
    return replace(cfg, **changes)
