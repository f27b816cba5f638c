"""Deterministic discrete-event simulation of a mining network.

Two mining modes share one event loop.  "modeled" swaps the solver for
an exponential clock whose mean is sweeps * seconds_per_sweep / power,
so thousands of blocks are cheap and retarget/fork statistics are
measurable.  "real" runs the actual mine/verify pipeline at small n,
with the same modeled clocks deciding *when* each block lands (wall
time would break determinism).

All randomness flows from one root seed split per stream: one clock per
node, one jitter stream per directed link, one transaction stream, one
stream per attacker-race trial.  Event order is the (time, seq) heap
order, so a fixed config reproduces the event log exactly.
"""

import dataclasses
import hashlib
import heapq
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple

from .ledger import BlockStore, ChainParams
from .pow import (
    GENESIS_PREV,
    DifficultyTarget,
    MiningError,
    Transaction,
    gd_miner,
    genesis_block,
    mine,
    sa_miner,
)
from .rng import SALT_NETSIM, SplitMix64, derive_seed

# stream tags under SALT_NETSIM
_TAG_LINK = 1
_TAG_CLOCK = 2
_TAG_TX = 3
_TAG_RACE = 4

_RACE_FLOOR = -30  # a sub-50% attacker this far behind is written off
_RACE_STEP_CAP = 10000


def exp_draw(rng: SplitMix64, mean: float) -> float:
    # center-of-bin uniform keeps the draw strictly inside (0, 1),
    # hence the sample strictly positive and finite
    v = ((rng.next_u64() >> 12) + 0.5) * (1.0 / 4503599627370496.0)
    return -mean * math.log(v)


def modeled_block_time(power: float, difficulty: float, rng: SplitMix64) -> float:
    """Exponential solve-time draw with mean difficulty/power seconds."""
    if power <= 0.0:
        raise ValueError("power must be positive")
    if difficulty <= 0.0:
        raise ValueError("difficulty must be positive")
    return exp_draw(rng, difficulty / power)


class SimEvent(NamedTuple):
    time: float
    seq: int
    kind: str  # tx_arrival | block_found | block_delivered
    payload: tuple


_DIAL_SHAPE = dict(n=8, density_pct=100, j_min=-1.0, j_max=1.0, mode="qubo", margin_ppm=0)


def _dial(sweeps: int) -> DifficultyTarget:
    """Difficulty carrier for modeled chains; instance shape is a placeholder."""
    return DifficultyTarget(sa_sweeps=sweeps, **_DIAL_SHAPE)


@dataclass(frozen=True)
class ModelBlock:
    """Just enough block for BlockStore bookkeeping in modeled mode."""

    block_id: bytes
    prev_id: bytes
    timestamp: float  # sim seconds; modeled chains keep full resolution
    target: DifficultyTarget
    miner: int
    txs: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: int = 1
    powers: tuple = ()
    latency_base: float = 0.05
    latency_jitter: float = 0.05
    target_interval: float = 2.0
    retarget_window: int = 20
    horizon: float = 120.0
    mode: str = "modeled"
    seed: int = 0
    confirm_depth: int = 6
    tx_rate: float = 1.0
    initial_sweeps: int = 500
    seconds_per_sweep: float = 0.002
    real_target: DifficultyTarget | None = None
    real_solver: str = "sa"
    max_txs_per_block: int = 16

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("need at least one node")
        powers = self.powers or (1.0,) * self.nodes
        powers = tuple(float(p) for p in powers)
        object.__setattr__(self, "powers", powers)
        if len(powers) != self.nodes:
            raise ValueError("powers must list one entry per node")
        if any(p <= 0.0 for p in powers):
            raise ValueError("powers must be positive")
        if self.latency_base < 0.0 or self.latency_jitter < 0.0:
            raise ValueError("latencies must be non-negative")
        if self.target_interval <= 0.0 or self.horizon <= 0.0:
            raise ValueError("target_interval and horizon must be positive")
        if self.retarget_window < 2:
            raise ValueError("retarget_window must be at least 2")
        if self.mode not in ("modeled", "real"):
            raise ValueError("mode must be 'modeled' or 'real'")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.confirm_depth < 1:
            raise ValueError("confirm_depth must be at least 1")
        if self.tx_rate < 0.0:
            raise ValueError("tx_rate must be non-negative")
        if self.initial_sweeps < 1:
            raise ValueError("initial_sweeps must be at least 1")
        if self.seconds_per_sweep <= 0.0:
            raise ValueError("seconds_per_sweep must be positive")
        if self.real_solver not in ("sa", "gdsim"):
            raise ValueError("real_solver must be 'sa' or 'gdsim'")
        if self.max_txs_per_block < 0:
            raise ValueError("max_txs_per_block must be non-negative")
        if self.mode == "real" and self.real_target is None:
            object.__setattr__(
                self,
                "real_target",
                DifficultyTarget(16, 50, -1.0, 1.0, "qubo", self.initial_sweeps, 0),
            )

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown scenario keys: {unknown}")
        kw = dict(data)
        rt = kw.get("real_target")
        if rt is not None and not isinstance(rt, DifficultyTarget):
            if not isinstance(rt, dict):
                raise ValueError("real_target must be an object")
            tfields = {f.name for f in dataclasses.fields(DifficultyTarget)}
            bad = sorted(set(rt) - tfields)
            if bad:
                raise ValueError(f"unknown real_target keys: {bad}")
            kw["real_target"] = DifficultyTarget(**rt)
        if "powers" in kw:
            kw["powers"] = tuple(kw["powers"])
        return cls(**kw)


class NodeModel:
    """One honest miner: its own chain copy, mempool, and solve clock."""

    def __init__(self, node_id: int, power: float, chain: BlockStore, clock: SplitMix64):
        self.id = node_id
        self.power = power
        self.chain = chain
        self.mempool: "OrderedDict[bytes, float]" = OrderedDict()
        self.epoch = 0  # bumps on every tip change; stale clock events check it
        self.pending_epoch = -1
        self.clock = clock
        self.mined = 0
        self.attempts = 0


class Simulator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.params = ChainParams(cfg.target_interval, cfg.retarget_window)
        if cfg.mode == "modeled":
            genesis = ModelBlock(
                hashlib.sha256(b"model-genesis").digest(),
                GENESIS_PREV, 0.0, _dial(cfg.initial_sweeps), -1, (),
            )
            chains = [BlockStore(genesis, self.params, verify_fn=None) for _ in range(cfg.nodes)]
        else:
            genesis = genesis_block(cfg.real_target)
            chains = [BlockStore(genesis, self.params) for _ in range(cfg.nodes)]
        self.genesis_id = genesis.block_id
        self.nodes = [
            NodeModel(i, cfg.powers[i], chains[i],
                      SplitMix64(derive_seed(cfg.seed, SALT_NETSIM, _TAG_CLOCK, i)))
            for i in range(cfg.nodes)
        ]
        self.links = {
            (i, j): SplitMix64(derive_seed(cfg.seed, SALT_NETSIM, _TAG_LINK, i, j))
            for i in range(cfg.nodes)
            for j in range(cfg.nodes)
            if i != j
        }
        self.tx_rng = SplitMix64(derive_seed(cfg.seed, SALT_NETSIM, _TAG_TX))
        self.solver = (sa_miner() if cfg.real_solver == "sa" else gd_miner()) \
            if cfg.mode == "real" else None
        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.found: list = []  # (time, node, block_id) for every block mined
        self.found_time: dict = {}
        self.tx_time: dict = {}
        self.tx_count = 0
        self.event_count = 0
        self.log = hashlib.sha256()

    def _push(self, time: float, kind: str, payload: tuple) -> None:
        heapq.heappush(self.heap, SimEvent(time, self.seq, kind, payload))
        self.seq += 1

    def _all_agree(self) -> bool:
        tip0 = self.nodes[0].chain.tip
        return all(n.chain.tip == tip0 for n in self.nodes)

    def _should_mine(self) -> bool:
        # past the horizon, keep mining only to resolve a standing tie
        return self.now <= self.cfg.horizon or not self._all_agree()

    def _ensure_clock(self, node: NodeModel) -> None:
        if node.pending_epoch == node.epoch:
            return
        sweeps = node.chain.child_target(node.chain.tip).sa_sweeps
        dt = modeled_block_time(node.power, sweeps * self.cfg.seconds_per_sweep, node.clock)
        node.pending_epoch = node.epoch
        self._push(self.now + dt, "block_found", (node.id, node.epoch))

    def run(self) -> dict:
        cfg = self.cfg
        cap = 10.0 * cfg.horizon
        if cfg.tx_rate > 0.0:
            t0 = exp_draw(self.tx_rng, 1.0 / cfg.tx_rate)
            if t0 <= cfg.horizon:
                self._push(t0, "tx_arrival", ())
        for node in self.nodes:
            self._ensure_clock(node)
        while self.heap:
            ev = heapq.heappop(self.heap)
            if ev.time > cap:
                break
            self.now = ev.time
            self.event_count += 1
            if ev.kind == "tx_arrival":
                self._on_tx()
            elif ev.kind == "block_found":
                self._on_found(*ev.payload)
            else:
                self._on_deliver(*ev.payload)
            if self._should_mine():
                for node in self.nodes:
                    self._ensure_clock(node)
        return self._metrics()

    def _on_tx(self) -> None:
        label = b"tx" + struct.pack("<Q", self.tx_count)
        self.tx_count += 1
        self.tx_time[label] = self.now
        for node in self.nodes:
            node.mempool[label] = self.now
        self.log.update(b"T|%r|%s\n" % (self.now, label.hex().encode()))
        nxt = self.now + exp_draw(self.tx_rng, 1.0 / self.cfg.tx_rate)
        if nxt <= self.cfg.horizon:
            self._push(nxt, "tx_arrival", ())

    def _labels(self, chain: BlockStore, block_id: bytes) -> tuple:
        block = chain.blocks[block_id]
        if self.cfg.mode == "modeled":
            return block.txs
        return tuple(tx.payload for tx in block.transactions)

    def _commit_mempool(self, node: NodeModel, removed, added) -> None:
        for bid in removed:  # reorged-out txs go back to the pool
            for label in self._labels(node.chain, bid):
                if label in self.tx_time:
                    node.mempool[label] = self.tx_time[label]
        for bid in added:
            for label in self._labels(node.chain, bid):
                node.mempool.pop(label, None)

    def _make_block(self, node: NodeModel):
        chain = node.chain
        tip = chain.tip
        target = chain.child_target(tip)
        picked = sorted(node.mempool.items(), key=lambda kv: (kv[1], kv[0]))
        labels = tuple(k for k, _ in picked[: self.cfg.max_txs_per_block])
        node.attempts += 1
        if self.cfg.mode == "modeled":
            bid = hashlib.sha256(tip + struct.pack("<IQ", node.id, node.attempts)).digest()
            return ModelBlock(bid, tip, self.now, target, node.id, labels)
        coinbase = Transaction(b"cb" + struct.pack("<IQ", node.id, node.attempts))
        txs = (coinbase,) + tuple(Transaction(lb) for lb in labels)
        try:
            return mine(tip, txs, target, self.solver,
                        timestamp=int(round(self.now)), max_nonce=256)
        except MiningError:
            return None

    def _on_found(self, node_id: int, epoch: int) -> None:
        node = self.nodes[node_id]
        if epoch != node.epoch:
            return  # tip moved while this clock was running
        node.pending_epoch = -1
        if self.now > self.cfg.horizon and self._all_agree():
            return  # wind-down: nothing left to resolve
        block = self._make_block(node)
        if block is None:
            node.epoch += 1  # real-mode nonce exhaustion: try again later
            return
        res = node.chain.append(block)
        if res.status != "accepted":
            raise RuntimeError(f"own block not accepted: {res.status} {res.reason}")
        node.mined += 1
        node.epoch += 1
        bid = block.block_id
        self.found.append((self.now, node_id, bid))
        self.found_time[bid] = self.now
        self._commit_mempool(node, res.removed, res.added)
        self.log.update(b"F|%r|%d|%s\n" % (self.now, node_id, bid.hex().encode()))
        for other in self.nodes:
            if other.id == node_id:
                continue
            delay = self.cfg.latency_base
            if self.cfg.latency_jitter > 0.0:
                delay += exp_draw(self.links[(node_id, other.id)], self.cfg.latency_jitter)
            self._push(self.now + delay, "block_delivered", (other.id, block))

    def _on_deliver(self, node_id: int, block) -> None:
        node = self.nodes[node_id]
        bid = block.block_id
        self.log.update(b"D|%r|%d|%s\n" % (self.now, node_id, bid.hex().encode()))
        if bid in node.chain.blocks or bid in node.chain.orphans:
            return
        old_tip = node.chain.tip
        res = node.chain.append(block)
        if res.status == "rejected":
            return  # cannot happen between honest nodes
        self._commit_mempool(node, res.removed, res.added)
        if node.chain.tip != old_tip:
            node.epoch += 1

    def _metrics(self) -> dict:
        cfg = self.cfg
        ref = self.nodes[0].chain
        ids = ref.main_chain()
        canonical = []
        for bid in ids[1:]:
            b = ref.blocks[bid]
            canonical.append({
                "height": ref.heights[bid],
                "id": bid.hex(),
                "found_time": self.found_time[bid],
                "timestamp": float(b.timestamp),
                "sweeps": b.target.sa_sweeps,
                "miner": getattr(b, "miner", None),
                "txs": len(self._labels(ref, bid)),
            })
        times = [row["found_time"] for row in canonical]
        mean_interval = times[-1] / len(times) if times else None
        settle_h = 2 * cfg.retarget_window
        settled = [r["found_time"] for r in canonical if r["height"] > settle_h]
        mean_settled = None
        if len(settled) >= 2:
            mean_settled = (settled[-1] - settled[0]) / (len(settled) - 1)
        total_found = len(self.found)
        fork_rate = 0.0 if not total_found else (total_found - len(canonical)) / total_found
        tips = [n.chain.tip for n in self.nodes]
        tip0 = max(set(tips), key=lambda t: (tips.count(t), t))
        agreement = tips.count(tip0) / len(tips)
        k = cfg.confirm_depth
        conf = [times[i + k] - times[i] for i in range(len(times) - k)]
        mean_conf = sum(conf) / len(conf) if conf else None

        chains_ids = [n.chain.main_chain() for n in self.nodes]
        common = 0
        for i in range(min(len(c) for c in chains_ids)):
            if all(c[i] == chains_ids[0][i] for c in chains_ids):
                common = i + 1
            else:
                break
        prefix_labels = set()
        for bid in chains_ids[0][:common]:
            prefix_labels.update(self._labels(ref, bid))
        committed_total = 0
        safety = True
        for node, cids in zip(self.nodes, chains_ids):
            cut = max(len(cids) - k, 0)
            for bid in cids[:cut]:
                for label in self._labels(node.chain, bid):
                    committed_total += 1
                    if label not in prefix_labels:
                        safety = False
        return {
            "mode": cfg.mode,
            "nodes": cfg.nodes,
            "seed": cfg.seed,
            "horizon": cfg.horizon,
            "end_time": self.now,
            "blocks_found": total_found,
            "canonical_height": len(canonical),
            "canonical": canonical,
            "mean_interval": mean_interval,
            "mean_interval_settled": mean_settled,
            "final_sweeps": ref.child_target(ref.tip).sa_sweeps,
            "fork_rate": fork_rate,
            "tip_agreement": agreement,
            "all_agree": agreement == 1.0,
            "mean_confirmation_time": mean_conf,
            "confirm_depth": k,
            "tx_count": self.tx_count,
            "committed_tx_records": committed_total,
            "reorg_safety_ok": safety,
            "common_prefix_height": max(common - 1, 0),
            "event_count": self.event_count,
            "event_digest": self.log.hexdigest(),
            "per_node": [
                {
                    "node": n.id,
                    "power": n.power,
                    "blocks_mined": n.mined,
                    "tip": n.chain.tip.hex(),
                    "height": n.chain.tip_height,
                    "mempool": len(n.mempool),
                }
                for n in self.nodes
            ],
        }


def run_scenario(config) -> dict:
    """Execute one scenario; accepts a ScenarioConfig or a plain dict."""
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(dict(config))
    return Simulator(cfg).run()


def race_curve(honest_power: float, attacker_power: float, deficits, trials: int,
               seed: int = 0, max_steps: int = _RACE_STEP_CAP) -> dict:
    """Catch-up frequency per deficit, common random numbers across deficits.

    Each trial walks the block race (+1 attacker, -1 honest) and records
    the walk maximum; deficit z is caught iff the maximum reaches z.
    Sharing the walk across deficits makes the curve monotone by
    construction, which is the property retarget security relies on.
    """
    if honest_power <= 0.0:
        raise ValueError("honest power must be positive")
    if attacker_power < 0.0:
        raise ValueError("attacker power must be non-negative")
    if trials < 1:
        raise ValueError("need at least one trial")
    zs = sorted({int(z) for z in deficits})
    if not zs or zs[0] < 0:
        raise ValueError("deficits must be non-negative integers")
    if attacker_power == 0.0:
        return {z: (1.0 if z == 0 else 0.0) for z in zs}
    q = attacker_power / (attacker_power + honest_power)
    hi = zs[-1]
    sub50 = q < 0.5
    wins = dict.fromkeys(zs, 0)
    for trial in range(trials):
        g = SplitMix64(derive_seed(seed, SALT_NETSIM, _TAG_RACE, trial))
        s = 0
        smax = 0
        for _ in range(max_steps):
            if smax >= hi or (sub50 and s <= _RACE_FLOOR):
                break
            s += 1 if g.uniform() < q else -1
            if s > smax:
                smax = s
        for z in zs:
            if smax >= z:
                wins[z] += 1
    return {z: wins[z] / trials for z in zs}


def attacker_race(honest_power: float, attacker_power: float, deficit_z: int,
                  trials: int, seed: int = 0, max_steps: int = _RACE_STEP_CAP) -> float:
    """Monte Carlo frequency of an attacker erasing a z-block deficit."""
    return race_curve(honest_power, attacker_power, [deficit_z], trials, seed, max_steps)[
        int(deficit_z)
    ]
