"""Push-sum gossip: biased mixing, bias-weight propagation and de-biasing.

State for ``n`` nodes is stored stacked: values are an ``(n, d)`` array and
bias weights an ``(n,)`` array. A gossip round applies

    x_i <- base_i + sum_{j in N_in(i)} (W_eff - I)_{ij} * msg_j

with the self-loop included in ``N_in(i)``. Because ``W_eff`` is
column-stochastic this conserves ``sum_i x_i`` whenever ``msgs == base`` and
always conserves ``sum_i u_i``. Terms are accumulated in ascending sender
order, so results do not depend on how the per-node work is scheduled.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InvalidArgument, NumericalFailure
from .topology import GraphSchedule, MixingMatrix, effective_mixing_matrix

__all__ = [
    "PushSumState",
    "MixingPlan",
    "gossip_round",
    "debias",
    "gossip_average",
    "BIAS_FLOOR",
]

#: Bias weights below this signal a broken schedule rather than slow mixing.
BIAS_FLOOR = 1e-12


@dataclass
class PushSumState:
    """One node's push-sum variables."""

    x: np.ndarray
    u: float = 1.0

    @property
    def z(self) -> np.ndarray:
        return debias(self.x, self.u)


@dataclass(frozen=True)
class MixingPlan:
    """CSR form of ``W_eff - I`` restricted to its non-zero entries.

    Row ``i`` lists the senders (self included, ascending) whose message
    enters node ``i`` and the coefficient applied to each.
    """

    indptr: np.ndarray
    indices: np.ndarray
    coeffs: np.ndarray
    n: int

    @classmethod
    def from_matrix(cls, m: MixingMatrix) -> "MixingPlan":
        offsets = m.offsets()
        topo = m.topology
        indptr = [0]
        indices: list[int] = []
        coeffs: list[float] = []
        for i in range(m.n):
            senders = sorted(set(topo.in_neighbours(i)) | {i})
            for j in senders:
                if offsets[i, j] != 0.0:
                    indices.append(j)
                    coeffs.append(offsets[i, j])
            indptr.append(len(indices))
        return cls(
            np.asarray(indptr, dtype=np.int64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(coeffs, dtype=np.float64),
            m.n,
        )

    def apply(self, base: np.ndarray, msgs: np.ndarray) -> np.ndarray:
        return kernels.mix_rows(base, msgs, self.indptr, self.indices, self.coeffs)

    def apply_scalar(self, base: np.ndarray, msgs: np.ndarray) -> np.ndarray:
        out = base.astype(np.float64, copy=True)
        for i in range(self.n):
            for k in range(self.indptr[i], self.indptr[i + 1]):
                out[i] += self.coeffs[k] * msgs[self.indices[k]]
        return out


def _plan(m: MixingMatrix | MixingPlan) -> MixingPlan:
    return m if isinstance(m, MixingPlan) else MixingPlan.from_matrix(m)


def gossip_round(
    base: np.ndarray,
    u: np.ndarray,
    m: MixingMatrix | MixingPlan,
    msgs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One push-sum round.

    Args:
        base: ``(n, d)`` local values the update is added to (``x_hat``).
        u: ``(n,)`` bias weights; always mixed uncompressed.
        m: Effective mixing matrix, or a prebuilt :class:`MixingPlan`.
        msgs: ``(n, d)`` values actually received from each sender, e.g.
            decompressed payloads. Defaults to ``base`` (uncompressed gossip).

    Returns:
        ``(x_next, u_next)``.
    """
    plan = _plan(m)
    base = np.ascontiguousarray(base)
    if base.ndim != 2:
        raise InvalidArgument("gossip_round expects an (n, d) array of node values")
    msgs = base if msgs is None else np.ascontiguousarray(msgs, dtype=base.dtype)
    u = np.asarray(u, dtype=np.float64)
    if base.shape[0] != plan.n or u.shape != (plan.n,) or msgs.shape != base.shape:
        raise InvalidArgument(
            f"shape mismatch: mixing over {plan.n} nodes, values {base.shape}, "
            f"messages {msgs.shape}, weights {u.shape}"
        )
    return plan.apply(base, msgs), plan.apply_scalar(u, u)


def debias(x: np.ndarray, u: float | np.ndarray) -> np.ndarray:
    """``x / u``; raises :class:`NumericalFailure` if any weight is at or below the floor."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(~np.isfinite(u_arr)) or np.any(u_arr < BIAS_FLOOR):
        raise NumericalFailure(f"push-sum bias weight collapsed (min u = {u_arr.min()!r})")
    x = np.asarray(x)
    if u_arr.ndim == 1 and x.ndim == 2:
        return x / u_arr.astype(x.dtype)[:, None]
    return x / u_arr.astype(x.dtype)


def gossip_average(
    initial: Sequence[np.ndarray],
    schedule: GraphSchedule,
    eta: float,
    rounds: int,
    rounds_per_epoch: int = 1,
    trace: list | None = None,
) -> list[np.ndarray]:
    """Run uncompressed push-sum from ``initial`` and return every node's estimate.

    The topology advances through ``schedule`` as if each ``rounds_per_epoch``
    rounds were an epoch. If ``trace`` is a list, ``(round, node, u, err)``
    tuples are appended after every round, where ``err`` is the distance of the
    node's estimate from the true mean.
    """
    if rounds < 0:
        raise InvalidArgument(f"rounds must be non-negative, got {rounds}")
    x = np.array([np.asarray(v, dtype=np.float64).reshape(-1) for v in initial])
    n = x.shape[0]
    if n != schedule.n:
        raise InvalidArgument(f"{n} initial values for a {schedule.n}-node schedule")
    u = np.ones(n)
    target = x.mean(axis=0)
    plans: dict[int, MixingPlan] = {}
    for r in range(rounds):
        topo = schedule.topology_at(r // rounds_per_epoch)
        key = id(topo)
        if key not in plans:
            plans[key] = MixingPlan.from_matrix(effective_mixing_matrix(topo, eta))
        x, u = gossip_round(x, u, plans[key])
        if trace is not None:
            z = debias(x, u)
            for i in range(n):
                trace.append((r + 1, i, float(u[i]), float(np.linalg.norm(z[i] - target))))
    z = debias(x, u)
    return [z[i].copy() for i in range(n)]
