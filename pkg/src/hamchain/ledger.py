"""Chain state: block storage, fork choice, reorganization, persistence.

Canonical chain = most blocks; ties break by earliest arrival, then
lowest block id.  Blocks whose parent is unknown wait in a bounded FIFO
orphan pool and are connected (re-verified) when the parent shows up.
"""

import struct
from collections import OrderedDict
from dataclasses import dataclass

from .pow import (
    GENESIS_PREV,
    Block,
    DifficultyTarget,
    VerifyError,
    adjust_difficulty,
    digest,
    merkle_root,
    verify,
)


@dataclass(frozen=True)
class ChainParams:
    target_interval: float = 600.0
    retarget_window: int = 2016
    max_orphans: int = 1024

    def __post_init__(self):
        if self.target_interval <= 0:
            raise ValueError("target_interval must be positive")
        if self.retarget_window < 2:
            raise ValueError("retarget_window must be at least 2")
        if self.max_orphans < 1:
            raise ValueError("max_orphans must be at least 1")


@dataclass(frozen=True)
class AppendResult:
    status: str  # accepted | orphaned | rejected
    reason: str = ""
    removed: tuple = ()  # ids leaving the main chain, tip-first
    added: tuple = ()  # ids joining it, oldest-first

    @property
    def reorged(self) -> bool:
        return bool(self.removed)


class BlockStore:
    """In-memory chain index.  Mutation is single-threaded by contract."""

    def __init__(self, genesis: Block, params: ChainParams | None = None, verify_fn=verify):
        if genesis.prev_id != GENESIS_PREV:
            raise ValueError("genesis must have an all-zero prev_id")
        self.params = params if params is not None else ChainParams()
        self.verify_fn = verify_fn
        gid = genesis.block_id
        self.genesis_id = gid
        self.blocks = {gid: genesis}
        self.heights = {gid: 0}
        self.children: dict = {}
        self.arrival = {gid: 0}
        self._next_seq = 1
        self.tip = gid
        self.orphans: "OrderedDict[bytes, Block]" = OrderedDict()

    def __contains__(self, block_id: bytes) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def block(self, block_id: bytes) -> Block:
        return self.blocks[block_id]

    def height(self, block_id: bytes) -> int:
        return self.heights[block_id]

    @property
    def tip_height(self) -> int:
        return self.heights[self.tip]

    def _key(self, block_id: bytes):
        return (-self.heights[block_id], self.arrival[block_id], block_id)

    def fork_choice(self) -> bytes:
        return min(self.blocks, key=self._key)

    def child_target(self, parent_id: bytes) -> DifficultyTarget:
        """Target a child of `parent_id` must declare (retarget at window boundaries)."""
        parent = self.blocks[parent_id]
        h = self.heights[parent_id] + 1
        w = self.params.retarget_window
        if h % w != 0:
            return parent.target
        lo = max(0, h - w - 1)
        pts = []
        b, bh = parent, h - 1
        while bh >= lo:
            pts.append((bh, b.timestamp))
            if bh == 0:
                break
            b = self.blocks[b.prev_id]
            bh -= 1
        pts.reverse()
        return adjust_difficulty(parent.target, pts, self.params.target_interval, w)

    def append(self, block: Block) -> AppendResult:
        bid = block.block_id
        if bid in self.blocks or bid in self.orphans:
            return AppendResult("rejected", "duplicate")
        old_tip = self.tip
        if block.prev_id not in self.blocks:
            self._pool_orphan(block)
            return AppendResult("orphaned")
        reason = self._connect(block)
        if reason:
            return AppendResult("rejected", reason)
        self._drain_orphans(bid)
        removed, added = self._diff(old_tip, self.tip)
        return AppendResult("accepted", "", tuple(removed), tuple(added))

    def _pool_orphan(self, block: Block) -> None:
        self.arrival[block.block_id] = self._next_seq
        self._next_seq += 1
        self.orphans[block.block_id] = block
        while len(self.orphans) > self.params.max_orphans:
            evicted, _ = self.orphans.popitem(last=False)
            del self.arrival[evicted]

    def _connect(self, block: Block) -> str:
        pid = block.prev_id
        if self.verify_fn is not None:
            try:
                self.verify_fn(block, pid, self.child_target(pid))
            except VerifyError as exc:
                return exc.reason
        bid = block.block_id
        self.blocks[bid] = block
        self.heights[bid] = self.heights[pid] + 1
        self.children.setdefault(pid, []).append(bid)
        if bid not in self.arrival:  # orphans keep their original arrival order
            self.arrival[bid] = self._next_seq
            self._next_seq += 1
        if self._key(bid) < self._key(self.tip):
            self.tip = bid
        return ""

    def _drain_orphans(self, root_id: bytes) -> None:
        stack = [root_id]
        while stack:
            pid = stack.pop()
            ready = [oid for oid, ob in self.orphans.items() if ob.prev_id == pid]
            for oid in ready:
                orphan = self.orphans.pop(oid)
                if self._connect(orphan):
                    del self.arrival[oid]  # failed verification: forget it
                else:
                    stack.append(oid)

    def _diff(self, old_tip: bytes, new_tip: bytes):
        if old_tip == new_tip:
            return [], []
        removed, added = [], []
        a, ha = old_tip, self.heights[old_tip]
        b, hb = new_tip, self.heights[new_tip]
        while hb > ha:
            added.append(b)
            b = self.blocks[b].prev_id
            hb -= 1
        while ha > hb:
            removed.append(a)
            a = self.blocks[a].prev_id
            ha -= 1
        while a != b:
            removed.append(a)
            added.append(b)
            a = self.blocks[a].prev_id
            b = self.blocks[b].prev_id
        added.reverse()
        return removed, added

    def main_chain(self) -> list:
        path = []
        b = self.tip
        while True:
            path.append(b)
            if self.heights[b] == 0:
                break
            b = self.blocks[b].prev_id
        path.reverse()
        return path

    def confirmations(self, block_id: bytes):
        """(depth below tip, on-main-chain flag); stale branches report (0, False)."""
        if block_id not in self.blocks:
            raise KeyError("unknown block id")
        h = self.heights[block_id]
        b, hb = self.tip, self.tip_height
        if h > hb:
            return 0, False
        while hb > h:
            b = self.blocks[b].prev_id
            hb -= 1
        if b != block_id:
            return 0, False
        return self.tip_height - h, True

    def validate_chain(self, head: bytes | None = None):
        """Re-verify genesis..head, retargets included.  None if ok, else first bad id."""
        head = self.tip if head is None else head
        path = []
        b = head
        while True:
            path.append(b)
            if self.heights[b] == 0:
                break
            b = self.blocks[b].prev_id
        path.reverse()
        g = self.blocks[path[0]]
        if (
            path[0] != self.genesis_id
            or g.block_id != path[0]
            or digest(g.header.pack() + g.solution.encoded) != g.block_id
            or g.prev_id != GENESIS_PREV
            or not g.transactions
            or merkle_root(g.transactions) != g.header.merkle_root
        ):
            return path[0]
        for i in range(1, len(path)):
            blk = self.blocks[path[i]]
            if blk.block_id != path[i]:
                return path[i]
            try:
                self.verify_fn(blk, path[i - 1], self.child_target(path[i - 1]))
            except VerifyError:
                return path[i]
        return None

    def _save_order(self):
        ids = list(self.blocks) + list(self.orphans)
        ids.sort(key=lambda bid: self.arrival[bid])
        return ids

    def save(self, path) -> None:
        """Append-style chain file: length-prefixed wire records in arrival order."""
        with open(path, "wb") as f:
            for bid in self._save_order():
                raw = (self.blocks.get(bid) or self.orphans[bid]).serialize()
                f.write(struct.pack("<I", len(raw)))
                f.write(raw)

    @classmethod
    def load(cls, path, params: ChainParams | None = None, verify_fn=verify) -> "BlockStore":
        records = []
        with open(path, "rb") as f:
            while True:
                head = f.read(4)
                if not head:
                    break
                if len(head) != 4:
                    raise ValueError("truncated record length")
                (size,) = struct.unpack("<I", head)
                raw = f.read(size)
                if len(raw) != size:
                    raise ValueError("truncated block record")
                records.append(raw)
        if not records:
            raise ValueError("empty chain file")
        store = cls(Block.deserialize(records[0]), params, verify_fn)
        for raw in records[1:]:
            res = store.append(Block.deserialize(raw))
            if res.status == "rejected":
                raise ValueError(f"chain file contains invalid block: {res.reason}")
        return store

    def summary(self) -> dict:
        """JSON-friendly view of the main chain."""
        rows = []
        for bid in self.main_chain():
            b = self.blocks[bid]
            rows.append(
                {
                    "height": self.heights[bid],
                    "id": bid.hex(),
                    "prev": b.prev_id.hex(),
                    "timestamp": b.timestamp,
                    "objective": b.solution.claimed_objective,
                    "sa_sweeps": b.target.sa_sweeps,
                    "mode": b.target.mode,
                    "n": b.target.n,
                    "txs": len(b.transactions),
                }
            )
        return {
            "height": self.tip_height,
            "tip": self.tip.hex(),
            "blocks": len(self.blocks),
            "orphans": len(self.orphans),
            "chain": rows,
        }
