"""Desk-scale witness search.

``local_search`` is plain gradient descent with random restarts on two-layer
instances.  It finds nothing the hardness result forbids: success is
evidence, failure proves nothing.

``grid_search`` enumerates exact witnesses over a finite grid in
lexicographic order (free edges by id, then free biases by id).  A data
point is checked as soon as every parameter that can influence it is
assigned, which prunes subtrees without changing which witness is found
first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from etrnn.errors import BudgetExceeded, InputError, InvariantViolation, NonFiniteCost
from etrnn.evaluate import Witness, verify_witness
from etrnn.network import TrainingInstance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 100
    iterations: int = 5000
    step: float = 0.05
    init_low: float = -1.0
    init_high: float = 1.0
    seed: int = 0
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.init_low < self.init_high:
            raise ValueError("init_low must be < init_high")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")


class DenseModel:
    """Matrix form of a two-layer instance with a flat parameter vector.

    Parameters are ordered free edges by id, then free biases by neuron id.
    """

    def __init__(self, inst: TrainingInstance):
        roles = {n.id: n.role for n in inst.neurons}
        for e in inst.edges:
            if (roles[e.src], roles[e.dst]) not in (("input", "hidden"), ("hidden", "output")):
                raise InputError("the solver needs a two-layer instance (input->hidden->output)")
        self.inst = inst
        si = {nid: k for k, nid in enumerate(inst.inputs)}
        hi = {nid: k for k, nid in enumerate(inst.hidden)}
        oi = {nid: k for k, nid in enumerate(inst.outputs)}
        S, H, T = len(si), len(hi), len(oi)
        self.W1 = np.zeros((H, S))
        self.W2 = np.zeros((T, H))
        self.b1 = np.zeros(H)
        self.b2 = np.zeros(T)
        self.edge_ids = list(inst.free_edges)
        self.bias_ids = list(inst.free_biases)
        w1_idx, w2_idx, p1, p2 = [], [], [], []
        for k, eid in enumerate(self.edge_ids):
            e = inst.edges[eid]
            if e.dst in hi:
                w1_idx.append((hi[e.dst], si[e.src]))
                p1.append(k)
            else:
                w2_idx.append((oi[e.dst], hi[e.src]))
                p2.append(k)
        for e in inst.edges:
            if e.weight is not None:
                if e.dst in hi:
                    self.W1[hi[e.dst], si[e.src]] = float(e.weight)
                else:
                    self.W2[oi[e.dst], hi[e.src]] = float(e.weight)
        self.w1_rows, self.w1_cols = (np.array(t, dtype=int) for t in zip(*w1_idx)) if w1_idx else (
            np.zeros(0, int), np.zeros(0, int))
        self.w2_rows, self.w2_cols = (np.array(t, dtype=int) for t in zip(*w2_idx)) if w2_idx else (
            np.zeros(0, int), np.zeros(0, int))
        self.p1, self.p2 = np.array(p1, dtype=int), np.array(p2, dtype=int)
        b1_pos, b2_pos, q1, q2 = [], [], [], []
        off = len(self.edge_ids)
        for k, nid in enumerate(self.bias_ids):
            if nid in hi:
                b1_pos.append(hi[nid])
                q1.append(off + k)
            else:
                b2_pos.append(oi[nid])
                q2.append(off + k)
        self.b1_pos, self.b2_pos = np.array(b1_pos, dtype=int), np.array(b2_pos, dtype=int)
        self.q1, self.q2 = np.array(q1, dtype=int), np.array(q2, dtype=int)
        for n in inst.neurons:
            if n.role != "input" and n.bias is not None:
                (self.b1 if n.id in hi else self.b2)[(hi if n.id in hi else oi)[n.id]] = float(n.bias)

        def floors(ids):
            out = np.full(len(ids), -np.inf)
            for k, nid in enumerate(ids):
                act = inst.neurons[nid].activation
                if act.kind == "relu":
                    out[k] = 0.0
                elif act.kind == "shifted_relu":
                    out[k] = float(act.shift)
            return out

        self.floor1 = floors(inst.hidden)[:, None]
        self.floor2 = floors(inst.outputs)[:, None]
        D = len(inst.data)
        self.X = np.zeros((S, D))
        self.Y = np.zeros((T, D))
        self.M = np.zeros((T, D))
        for d, dp in enumerate(inst.data):
            self.X[:, d] = [float(v) for v in dp.inputs]
            for k, y in enumerate(dp.outputs):
                if y is not None:
                    self.Y[k, d] = float(y)
                    self.M[k, d] = 1.0
        counts = self.M.sum(axis=0)
        if inst.cost == "mse":
            self.scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)[None, :]
        else:
            self.scale = np.ones((1, D))
        self.cost = inst.cost
        self.size = len(self.edge_ids) + len(self.bias_ids)

    def unpack(self, theta: np.ndarray):
        W1, W2, b1, b2 = self.W1.copy(), self.W2.copy(), self.b1.copy(), self.b2.copy()
        W1[self.w1_rows, self.w1_cols] = theta[self.p1]
        W2[self.w2_rows, self.w2_cols] = theta[self.p2]
        b1[self.b1_pos] = theta[self.q1]
        b2[self.b2_pos] = theta[self.q2]
        return W1, W2, b1, b2

    def loss_and_gradient(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        W1, W2, b1, b2 = self.unpack(theta)
        P1 = W1 @ self.X + b1[:, None]
        Hd = np.maximum(P1, self.floor1)
        P2 = W2 @ Hd + b2[:, None]
        Yh = np.maximum(P2, self.floor2)
        R = self.M * (Yh - self.Y)
        if self.cost == "mse":
            loss = float(np.sum(self.scale * R * R))
            dY = 2.0 * self.scale * R
        else:
            loss = float(np.sum(np.abs(R)))
            dY = np.sign(R)
        # derivative 0 at the kink
        dP2 = dY * (P2 > self.floor2)
        dH = W2.T @ dP2
        dP1 = dH * (P1 > self.floor1)
        gW1 = dP1 @ self.X.T
        gW2 = dP2 @ Hd.T
        g = np.empty(self.size)
        g[self.p1] = gW1[self.w1_rows, self.w1_cols]
        g[self.p2] = gW2[self.w2_rows, self.w2_cols]
        g[self.q1] = dP1.sum(axis=1)[self.b1_pos]
        g[self.q2] = dP2.sum(axis=1)[self.b2_pos]
        return loss, g

    def loss(self, theta: np.ndarray) -> float:
        return self.loss_and_gradient(theta)[0]

    def to_witness(self, theta: np.ndarray) -> Witness:
        n = len(self.edge_ids)
        return Witness(
            {eid: float(theta[k]) for k, eid in enumerate(self.edge_ids)},
            {nid: float(theta[n + k]) for k, nid in enumerate(self.bias_ids)},
            "float",
        )

    def from_witness(self, w: Witness) -> np.ndarray:
        return np.array([float(w.weights[e]) for e in self.edge_ids] + [float(w.biases[b]) for b in self.bias_ids])


@dataclass
class SearchResult:
    witness: Optional[Witness]
    cost: float
    restart: int
    iterations: int


def _descend(model: DenseModel, theta: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float, int]:
    best_theta, best = theta.copy(), np.inf
    for it in range(cfg.iterations):
        loss, g = model.loss_and_gradient(theta)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise NonFiniteCost(f"diverged at iteration {it}")
        if loss < best:
            best, best_theta = loss, theta.copy()
        if loss < cfg.tolerance:
            return best_theta, best, it
        theta = theta - cfg.step * g
    loss = model.loss(theta)
    if np.isfinite(loss) and loss < best:
        best, best_theta = loss, theta
    return best_theta, best, cfg.iterations


def local_search(inst: TrainingInstance, cfg: SolverConfig = SolverConfig()) -> SearchResult:
    """Gradient descent from ``cfg.restarts`` uniform random starts.

    Restart ``k`` draws from its own child of ``SeedSequence(cfg.seed)``, so
    results do not depend on execution order.  The lowest cost wins, ties go
    to the lower restart index; the search stops at the first restart
    reaching ``cfg.tolerance``.  Diverging restarts are dropped.
    """
    model = DenseModel(inst)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best = SearchResult(None, float("inf"), -1, 0)
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        theta = rng.uniform(cfg.init_low, cfg.init_high, size=model.size)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                theta, loss, its = _descend(model, theta, cfg)
        except NonFiniteCost as exc:
            log.debug("restart %d abandoned: %s", k, exc)
            continue
        log.debug("restart %d: cost %.3g after %d iterations", k, loss, its)
        if loss < best.cost:
            best = SearchResult(model.to_witness(theta), loss, k, its)
        if best.cost < cfg.tolerance:
            break
    if best.witness is not None:
        best.cost = float(verify_witness(inst, best.witness).total_cost)
    return best


# --- exact grid enumeration -------------------------------------------------------


def _plans(inst: TrainingInstance, order: list[tuple[str, int]]):
    """Per data point: the last parameter position affecting it and a minimal evaluation plan.

    A plan lists, in topological order, the neurons that are reached from the
    point's nonzero inputs (or fire spontaneously) and can reach a
    non-ignored output, each with its relevant incoming edges.
    """
    pos = {p: k for k, p in enumerate(order)}
    spontaneous = set()
    for n in inst.neurons:
        if n.role == "input":
            continue
        if n.bias is None or n.bias != 0 or n.activation(Fraction(0)) != 0:
            spontaneous.add(n.id)
    rank = inst.topo_rank
    by_rank = sorted((nn.id for nn in inst.neurons), key=rank.__getitem__)
    plans = []
    for d in inst.data:
        active = {nid for nid, v in zip(inst.inputs, d.inputs) if v != 0} | spontaneous
        for nid in by_rank:
            if nid in active:
                for e in inst.out_edges.get(nid, ()):
                    active.add(e.dst)
        live = {o for o, t in zip(inst.outputs, d.outputs) if t is not None}
        for nid in reversed(by_rank):
            if any(e.dst in live for e in inst.out_edges.get(nid, ())):
                live.add(nid)
        last = -1
        steps = []
        for nid in by_rank:
            nn = inst.neurons[nid]
            if nn.role == "input" or nid not in live:
                continue
            ins = [e for e in inst.in_edges.get(nid, ()) if e.src in active]
            for e in ins:
                if e.weight is None:
                    last = max(last, pos[("w", e.id)])
            if nn.bias is None:
                last = max(last, pos[("b", nid)])
            steps.append((nid, nn, [(e.src, e.id, e.weight) for e in ins]))
        inputs = {nid: v for nid, v in zip(inst.inputs, d.inputs) if v != 0}
        targets = [(o, t) for o, t in zip(inst.outputs, d.outputs) if t is not None]
        plans.append((last, inputs, steps, targets))
    return plans


def _zero_cost(plan, weights: dict[int, Fraction], biases: dict[int, Fraction]) -> bool:
    # honest costs vanish iff every non-ignored output matches its target
    _, inputs, steps, targets = plan
    vals = dict(inputs)
    zero = Fraction(0)
    for nid, nn, ins in steps:
        pre = nn.bias if nn.bias is not None else biases[nid]
        for src, eid, fixed in ins:
            x = vals.get(src, zero)
            if x:
                pre = pre + (fixed if fixed is not None else weights[eid]) * x
        vals[nid] = nn.activation(pre) if nn.activation.kind != "identity" else pre
    return all(vals.get(o, zero) == t for o, t in targets)


def grid_search(
    inst: TrainingInstance, grid: Sequence[Fraction], budget: int = 10**6
) -> Optional[Witness]:
    """First zero-cost exact witness in lexicographic grid order, or None.

    ``budget`` bounds the number of partial assignments visited.
    """
    grid = [Fraction(g) for g in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    order = [("w", e) for e in inst.free_edges] + [("b", n) for n in inst.free_biases]
    checks: dict[int, list] = {}
    for plan in _plans(inst, order):
        checks.setdefault(plan[0], []).append(plan)
    zero = Fraction(0)
    weights = {e: zero for e in inst.free_edges}
    biases = {n: zero for n in inst.free_biases}
    visited = 0

    def ok(depth_index: int) -> bool:
        return all(_zero_cost(p, weights, biases) for p in checks.get(depth_index, ()))

    def assign(i: int, g: Fraction) -> None:
        kind, ident = order[i]
        (weights if kind == "w" else biases)[ident] = g

    def search(i: int) -> bool:
        nonlocal visited
        if i == len(order):
            return True
        for g in grid:
            visited += 1
            if visited > budget:
                raise BudgetExceeded(f"grid search visited more than {budget} partial assignments")
            assign(i, g)
            if ok(i) and search(i + 1):
                return True
        assign(i, zero)
        return False

    if not ok(-1):
        return None
    if not search(0):
        return None
    w = Witness(dict(weights), dict(biases), "exact")
    if verify_witness(inst, w).total_cost != 0:
        raise InvariantViolation("grid search accepted a witness with nonzero cost")
    return w
