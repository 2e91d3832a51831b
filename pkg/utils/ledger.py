# utils/ledger.py
"""
Embedded permissioned ledger
- Hash-chained blocks of decision records, fixed genesis block
- One orderer (single writer) cuts blocks; three peers hold full replicas
- Per-peer world state indexes every actor's history
- Chaincode-style operations: submit_log (ordered) and query_history
  (served by one peer, never touches the orderer)
- Tamper audit (verify_chain) and line-delimited export / import
"""

import hashlib
import json
import logging
import secrets
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from utils.clock import SystemClock
from utils.errors import (
    ConfigurationError,
    CorruptChain,
    DuplicateTransaction,
    LedgerUnavailable,
    OrdererUnavailable,
    PeerDown,
    UnauthorizedPeer,
)
from utils.model import HistoryRecord

logger = logging.getLogger(__name__)

SUBMITTER = "submitter"
READER = "reader"


# --------------------------
# Blocks
# --------------------------
@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: str
    timestamp: float
    transactions: Tuple[HistoryRecord, ...]
    hash: str
    metadata: Tuple[Tuple[str, str], ...] = ()

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
            "transactions": [t.to_canonical() for t in self.transactions],
            "metadata": dict(self.metadata),
            "hash": self.hash,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Block":
        return cls(
            index=int(data["index"]),
            prev_hash=data["prev_hash"],
            timestamp=float(data["timestamp"]),
            transactions=tuple(HistoryRecord.from_canonical(t) for t in data["transactions"]),
            hash=data["hash"],
            metadata=tuple(sorted(dict(data.get("metadata", {})).items())),
        )


def check_digest(name: str) -> str:
    try:
        size = hashlib.new(name).digest_size
    except (ValueError, TypeError) as e:
        raise ConfigurationError(f"unknown digest {name!r}") from e
    if size != 32:
        raise ConfigurationError(f"digest {name!r} is not 256 bits")
    return name


def canonical_block_bytes(
    index: int,
    prev_hash: str,
    timestamp: float,
    transactions: Sequence[HistoryRecord],
    metadata: Sequence[Tuple[str, str]] = (),
) -> bytes:
    body = {
        "index": index,
        "prev_hash": prev_hash,
        "timestamp": float(timestamp),
        "transactions": [t.to_canonical() for t in transactions],
        "metadata": dict(metadata),
    }
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def compute_block_hash(block: Block, digest: str) -> str:
    payload = canonical_block_bytes(
        block.index, block.prev_hash, block.timestamp, block.transactions, block.metadata
    )
    return hashlib.new(digest, payload).hexdigest()


def make_block(
    index: int,
    prev_hash: str,
    timestamp: float,
    transactions: Sequence[HistoryRecord],
    digest: str,
    metadata: Sequence[Tuple[str, str]] = (),
) -> Block:
    payload = canonical_block_bytes(index, prev_hash, timestamp, transactions, metadata)
    return Block(
        index=index,
        prev_hash=prev_hash,
        timestamp=float(timestamp),
        transactions=tuple(transactions),
        hash=hashlib.new(digest, payload).hexdigest(),
        metadata=tuple(metadata),
    )


def genesis_block(digest: str = "sha256") -> Block:
    return make_block(0, "0" * 64, 0.0, (), digest, metadata=(("digest", digest),))


# --------------------------
# Verification
# --------------------------
@dataclass(frozen=True)
class ChainVerification:
    valid: bool
    first_bad_index: Optional[int] = None

    def __bool__(self) -> bool:
        return self.valid


def verify_blocks(blocks: Sequence[Block], digest: Optional[str] = None) -> ChainVerification:
    if not blocks:
        return ChainVerification(False, 0)
    digest = digest or dict(blocks[0].metadata).get("digest", "sha256")
    try:
        check_digest(digest)
    except ConfigurationError:
        return ChainVerification(False, 0)
    if blocks[0] != genesis_block(digest):
        return ChainVerification(False, 0)

    for i, block in enumerate(blocks):
        if block.index != i:
            return ChainVerification(False, i)
        if i > 0 and block.prev_hash != blocks[i - 1].hash:
            return ChainVerification(False, i)
        if compute_block_hash(block, digest) != block.hash:
            return ChainVerification(False, i)
    return ChainVerification(True, None)


# --------------------------
# World state
# --------------------------
class WorldState:
    """actor_id -> ordered references (block index, tx index) into committed blocks."""

    def __init__(self):
        self._index: Dict[str, List[Tuple[int, int]]] = defaultdict(list)

    def apply(self, block: Block):
        for tx_index, tx in enumerate(block.transactions):
            self._index[tx.actor_id].append((block.index, tx_index))

    def refs(self, actor_id: str) -> List[Tuple[int, int]]:
        return list(self._index.get(actor_id, ()))

    def as_dict(self) -> Dict[str, List[Tuple[int, int]]]:
        return {actor: list(refs) for actor, refs in self._index.items() if refs}

    @classmethod
    def rebuild(cls, blocks: Iterable[Block]) -> "WorldState":
        state = cls()
        for block in blocks:
            state.apply(block)
        return state


# --------------------------
# Peers & orderer
# --------------------------
class Peer:
    def __init__(self, name: str, digest: str):
        self.name = name
        self.up = True
        self._digest = digest
        self._blocks: List[Block] = [genesis_block(digest)]
        self.world_state = WorldState()
        self._lock = threading.RLock()

    @property
    def height(self) -> int:
        with self._lock:
            return len(self._blocks)

    def blocks(self) -> Tuple[Block, ...]:
        with self._lock:
            return tuple(self._blocks)

    def chain_digest(self) -> str:
        with self._lock:
            return self._blocks[-1].hash

    def append(self, block: Block):
        if not self.up:
            raise PeerDown(self.name)
        with self._lock:
            last = self._blocks[-1]
            if block.index != len(self._blocks) or block.prev_hash != last.hash:
                raise LedgerUnavailable(
                    f"{self.name}: block {block.index} does not extend height {len(self._blocks)}"
                )
            self._blocks.append(block)
            self.world_state.apply(block)

    def query(self, actor_id: str, limit: int) -> List[HistoryRecord]:
        with self._lock:
            refs = self.world_state.refs(actor_id)
            if limit is not None:
                refs = refs[-limit:] if limit > 0 else []
            return [self._blocks[b].transactions[t] for b, t in reversed(refs)]


class Orderer:
    """Single writer: totally orders records and cuts them into blocks."""

    def __init__(self, digest: str, batch_size: int = 1, clock=None):
        if batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        self.digest = digest
        self.batch_size = batch_size
        self.available = True
        self._clock = clock or SystemClock()
        self._chain: List[Block] = [genesis_block(digest)]
        self._pending: List[HistoryRecord] = []
        self._lock = threading.Lock()

    @property
    def height(self) -> int:
        with self._lock:
            return len(self._chain)

    def order(self, record: HistoryRecord) -> Optional[Block]:
        with self._lock:
            if not self.available:
                raise OrdererUnavailable("orderer is not accepting transactions")
            self._pending.append(record)
            if len(self._pending) >= self.batch_size:
                return self._cut()
            return None

    def cut(self) -> Optional[Block]:
        with self._lock:
            if not self._pending:
                return None
            return self._cut()

    def _cut(self) -> Block:
        last = self._chain[-1]
        block = make_block(len(self._chain), last.hash, self._clock.now(), self._pending, self.digest)
        self._chain.append(block)
        self._pending = []
        return block

    def blocks_from(self, index: int) -> List[Block]:
        with self._lock:
            return list(self._chain[index:])


# --------------------------
# Ledger (single channel)
# --------------------------
@dataclass(frozen=True)
class PeerIdentity:
    peer: str
    role: str


@dataclass(frozen=True)
class CommitReceipt:
    request_id: str
    block_index: Optional[int]
    block_hash: Optional[str]


def generate_identities(submitter: str, peers: Sequence[str]) -> Dict[str, PeerIdentity]:
    """One submitting credential (BC-P-LOG) and one reading credential per peer."""
    identities = {secrets.token_hex(16): PeerIdentity(submitter, SUBMITTER)}
    for name in peers:
        identities[secrets.token_hex(16)] = PeerIdentity(name, READER)
    return identities


def load_identities(path) -> Dict[str, PeerIdentity]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        credential: PeerIdentity(entry["peer"], entry["role"])
        for credential, entry in data.get("credentials", {}).items()
    }


def save_identities(identities: Mapping[str, PeerIdentity], path):
    data = {"credentials": {c: {"peer": i.peer, "role": i.role} for c, i in identities.items()}}
    Path(path).write_text(json.dumps(data, indent=2), encoding="utf-8")


class Ledger:
    def __init__(self, settings, identities: Mapping[str, PeerIdentity], clock=None):
        self.settings = settings
        self.digest = check_digest(settings.digest)
        self.peers: Dict[str, Peer] = {name: Peer(name, self.digest) for name in settings.peers}
        if settings.submitter not in self.peers:
            raise ConfigurationError(f"submitting peer {settings.submitter!r} is not a channel peer")
        self.submitter = settings.submitter
        self.orderer = Orderer(self.digest, settings.batch_size, clock)
        self._identities = dict(identities)
        self._seen_ids = set()
        self._submit_lock = threading.Lock()
        self._replicator = ThreadPoolExecutor(max_workers=1, thread_name_prefix="ledger-replicate")

    def credential_for(self, peer: str, role: str) -> str:
        for credential, identity in self._identities.items():
            if identity.peer == peer and identity.role == role:
                return credential
        raise UnauthorizedPeer(f"no {role} identity registered for {peer}")

    def _identity(self, credential: str, role: Optional[str] = None) -> PeerIdentity:
        identity = self._identities.get(credential)
        if identity is None:
            raise UnauthorizedPeer("credential is not registered with the channel")
        if role and identity.role != role:
            raise UnauthorizedPeer(f"{identity.peer} credential may not act as {role}")
        return identity

    # --------------------------
    # Chaincode: persist a request
    # --------------------------
    def submit_log(self, record: HistoryRecord, credential: str) -> CommitReceipt:
        self._identity(credential, SUBMITTER)
        with self._submit_lock:
            if record.request_id in self._seen_ids:
                raise DuplicateTransaction(record.request_id)
            block = self.orderer.order(record)
            self._seen_ids.add(record.request_id)
        if block is None:
            return CommitReceipt(record.request_id, None, None)
        self._on_commit(block)
        return CommitReceipt(record.request_id, block.index, block.hash)

    def _on_commit(self, block: Block):
        logger.debug("block %d committed (%d tx)", block.index, len(block.transactions))
        delay = self.settings.propagation_delay_seconds
        if delay > 0:
            self._deliver(self.peers[self.submitter])
            self._replicator.submit(self._delayed_replicate, delay)
        else:
            self.replicate()

    def _delayed_replicate(self, delay: float):
        time.sleep(delay)
        self.replicate()

    # --------------------------
    # Chaincode: fetch history (no consensus, single peer)
    # --------------------------
    def query_history(self, actor_id: str, limit: int, credential: str) -> List[HistoryRecord]:
        identity = self._identity(credential)
        peer = self.peers[identity.peer]
        if not peer.up:
            peer = next((p for p in self.peers.values() if p.up), peer)
        return peer.query(actor_id, limit)

    # --------------------------
    # Replication
    # --------------------------
    def _deliver(self, peer: Peer) -> bool:
        if not peer.up:
            return False
        with peer._lock:
            missing = self.orderer.blocks_from(peer.height)
            for block in missing:
                peer.append(block)
        return True

    def replicate(self) -> Dict[str, bool]:
        """Bring every reachable peer up to the orderer's chain; down peers catch up later."""
        status = {}
        for name, peer in self.peers.items():
            try:
                status[name] = self._deliver(peer)
            except PeerDown:
                status[name] = False
            if not status[name]:
                logger.warning("peer %s is down; it will catch up on recovery", name)
        return status

    def set_peer_up(self, name: str, up: bool):
        self.peers[name].up = up
        logger.info("peer %s %s", name, "recovered" if up else "went down")
        if up:
            self._deliver(self.peers[name])

    def pause_orderer(self):
        self.orderer.available = False

    def resume_orderer(self):
        self.orderer.available = True

    def quiesce(self):
        block = self.orderer.cut()
        if block is not None:
            self._on_commit(block)
        self._replicator.submit(lambda: None).result()
        self.replicate()

    def close(self):
        self._replicator.shutdown(wait=True)

    # --------------------------
    # Audit
    # --------------------------
    def verify_chain(self, peer: str) -> ChainVerification:
        return verify_blocks(self.peers[peer].blocks(), self.digest)

    def chain_digests(self) -> Dict[str, str]:
        return {name: peer.chain_digest() for name, peer in self.peers.items()}

    def rebuild_world_state(self, peer: str) -> WorldState:
        return WorldState.rebuild(self.peers[peer].blocks())


def verify_chain(ledger: Ledger, peer: str) -> ChainVerification:
    return ledger.verify_chain(peer)


# --------------------------
# Export / import
# --------------------------
def export_chain(blocks: Iterable[Block], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for block in blocks:
            fh.write(json.dumps(block.to_json(), separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def import_chain(path) -> List[Block]:
    """Read a JSONL export; an unreadable line raises CorruptChain with its block position."""
    blocks = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                blocks.append(Block.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError, AttributeError) as e:
                raise CorruptChain(len(blocks), f"{type(e).__name__}: {e}") from e
    return blocks
