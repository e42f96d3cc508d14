"""Protocol scenarios and the routing medium they run on.

Scenarios never touch the node population directly. They act through a
:class:`NodeView` (one node's own identifiers and lookup table) and a
:class:`RoutingMedium` that forwards searches through the overlay and
registers new data objects.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .evaluators import AdversarialSuccessEvaluator
from .overlay import NodeKind, Overlay, SearchResult
from .snapshot import EventRecord, RecordKind


class ObjectKind(Enum):
    TRANSACTION = "TRANSACTION"
    BLOCK = "BLOCK"
    STORAGE_OBJECT = "STORAGE_OBJECT"


@dataclass
class DataObjectRecord:
    num_id: int
    owner: int
    slot_created: int
    kind: ObjectKind
    index: int  # overlay index of the DATA_OBJECT node
    validated: bool = False
    malicious_majority: bool = False


@dataclass
class CommitteeResult:
    members: list[int]
    malicious_count: int
    decided_valid: bool
    undersized: bool = False
    searches: list[SearchResult] = field(default_factory=list)

    @property
    def malicious_majority(self) -> bool:
        return not self.decided_valid


class NodeView:
    """What a single node knows about itself."""

    __slots__ = ("index", "num_id", "mem_vec", "malicious", "_table")

    def __init__(self, index: int, num_id: int, mem_vec: str, malicious: bool, table):
        self.index = index
        self.num_id = num_id
        self.mem_vec = mem_vec
        self.malicious = malicious
        self._table = table

    @property
    def table(self) -> list[tuple[int | None, int | None]]:
        return self._table()


class RoutingMedium:
    """Message-passing medium over one topology's overlay."""

    __slots__ = ("__ov", "__malicious", "__id_rng", "__vec_rng", "__taken", "__host", "redraws")

    def __init__(self, overlay: Overlay, malicious: set[int], id_rng, vec_rng, host: list[int]):
        self.__ov = overlay
        self.__malicious = malicious
        self.__id_rng = id_rng
        self.__vec_rng = vec_rng
        self.__taken = set(overlay.num_id)
        self.__host = host
        self.redraws = 0

    @property
    def vec_len(self) -> int:
        return self.__ov.L

    def search_by_num_id(self, initiator: NodeView, target: int) -> SearchResult:
        return self.__ov.search_by_num_id(initiator.index, target)

    def search_by_name_id(self, initiator: NodeView, target: int | str, peers_only: bool = False) -> SearchResult:
        return self.__ov.search_by_name_id(
            initiator.index, target, NodeKind.PEER if peers_only else None
        )

    def votes_to_corrupt(self, member: int) -> bool:
        """Behavior of a committee member that was reached by a search."""
        return member in self.__malicious

    def register_object(self, owner: NodeView, slot: int, kind: ObjectKind) -> DataObjectRecord:
        ov = self.__ov
        taken = self.__taken
        num_id = int(self.__id_rng.integers(0, 1 << 64, dtype=np.uint64))
        while num_id in taken:
            self.redraws += 1
            num_id = int(self.__id_rng.integers(0, 1 << 64, dtype=np.uint64))
        taken.add(num_id)
        vec = int(self.__vec_rng.integers(0, 1 << ov.L, dtype=np.uint64)) if ov.L else 0
        idx = ov.add_node(num_id, vec, NodeKind.DATA_OBJECT)
        self.__host.append(owner.index)
        ov.insert_node(idx, introducer=owner.index)
        return DataObjectRecord(num_id, owner.index, slot, kind, idx)


def committee_target(num_id: int, attempt: int, vec_len: int) -> int:
    """Pseudo-random membership-vector target for committee search ``attempt``."""
    digest = hashlib.sha256(f"{num_id}:{attempt}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") >> (64 - vec_len) if vec_len else 0


def select_committee(medium: RoutingMedium, initiator: NodeView, txb: DataObjectRecord, k: int) -> CommitteeResult:
    """Locate ``k`` distinct online peers by name-id searches on hashed targets."""
    members: list[int] = []
    searches = []
    max_attempts = 8 * k
    attempt = 0
    while len(members) < k and attempt < max_attempts:
        target = committee_target(txb.num_id, attempt, medium.vec_len)
        attempt += 1
        res = medium.search_by_name_id(initiator, target, peers_only=True)
        searches.append(res)
        if res.failed or res.terminal in members:
            continue
        members.append(res.terminal)
    bad = sum(medium.votes_to_corrupt(m) for m in members)
    valid = bad < math.ceil(k / 2)
    return CommitteeResult(members, bad, valid, undersized=len(members) < k, searches=searches)


def mint_transactions(
    medium: RoutingMedium, node: NodeView, slot: int, rate: int, kind: ObjectKind = ObjectKind.TRANSACTION
) -> list[DataObjectRecord]:
    return [medium.register_object(node, slot, kind) for _ in range(rate)]


class Scenario:
    """Base protocol scenario; subclasses override the callbacks they need."""

    name = "BASE"

    def __init__(self, config):
        self.config = config
        self.medium: RoutingMedium | None = None

    def bind(self, medium: RoutingMedium) -> None:
        self.medium = medium

    def on_slot_begin(self, slot: int) -> None:
        pass

    def on_node_act(self, node: NodeView, slot: int) -> list[EventRecord]:
        return []

    def on_query_complete(self, result: SearchResult) -> None:
        pass

    def on_slot_end(self, slot: int) -> None:
        pass

    def outputs(self) -> dict[str, tuple[float | None, int]]:
        return {}


class StorageScenario(Scenario):
    """Peers store objects in the overlay at TXB_RATE per slot."""

    name = "BASIC"
    object_kind = ObjectKind.STORAGE_OBJECT

    def __init__(self, config):
        super().__init__(config)
        self.objects: list[DataObjectRecord] = []

    def on_node_act(self, node: NodeView, slot: int) -> list[EventRecord]:
        new = mint_transactions(self.medium, node, slot, self.config.txb_rate, self.object_kind)
        self.objects.extend(new)
        self.after_mint(node, new)
        return [EventRecord(RecordKind.TXB_CREATE, node.index, rec.num_id) for rec in new]

    def after_mint(self, node: NodeView, records: list[DataObjectRecord]) -> None:
        pass

    def outputs(self):
        return {"txb_total": (float(len(self.objects)), len(self.objects))}


class BlockchainScenario(StorageScenario):
    """Simplified validation: each transaction is judged by a routed committee.

    Malicious members always vote to corrupt and honest members vote
    correctly, so a transaction is adversarially controlled exactly when its
    committee has a malicious majority. This is not the full LightChain
    consensus protocol, only enough of it to measure adversarial success.
    """

    name = "LIGHTCHAIN"
    object_kind = ObjectKind.TRANSACTION

    def __init__(self, config):
        super().__init__(config)
        self.adversarial = AdversarialSuccessEvaluator()
        self.validated = 0
        self.majority_bad = 0
        self.undersized = 0

    def after_mint(self, node: NodeView, records: list[DataObjectRecord]) -> None:
        k = self.config.committee_size
        for rec in records:
            c = select_committee(self.medium, node, rec, k)
            rec.validated = c.decided_valid
            rec.malicious_majority = c.malicious_majority
            self.validated += c.decided_valid
            self.majority_bad += c.malicious_majority
            self.undersized += c.undersized
            self.adversarial.feed(c.malicious_majority)

    def outputs(self):
        n = len(self.objects)
        out = dict(self.adversarial.values())
        out.update({
            "txb_total": (float(n), n),
            "txb_validated": (float(self.validated), n),
            "txb_malicious_majority": (float(self.majority_bad), n),
            "committee_undersized": (float(self.undersized), n),
        })
        return out


SCENARIOS: dict[str, type[Scenario]] = {
    BlockchainScenario.name: BlockchainScenario,
    StorageScenario.name: StorageScenario,
}
