"""Skip Graph overlay: identifiers, membership vectors, lookup tables and routing.

Nodes live in parallel index-addressed arrays. ``left[i][x]`` / ``right[i][x]``
hold the level-``i`` neighbor indices of node ``x`` (``-1`` when absent).
Membership vectors are stored as ``L``-bit integers, most significant bit
first, so the common prefix of two vectors is ``L - (a ^ b).bit_length()``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum

log = logging.getLogger(__name__)

NONE = -1
JOIN_ATTEMPTS = 4


class StructuralError(RuntimeError):
    """Raised when overlay state is inconsistent (e.g. mismatched vector lengths)."""


class QueryRejected(RuntimeError):
    """Raised when an offline node tries to initiate a query."""


class NodeKind(IntEnum):
    PEER = 0
    DATA_OBJECT = 1


def vector_length(system_capacity: int) -> int:
    """Membership vector length for a system of ``system_capacity`` nodes."""
    if system_capacity < 1:
        raise ValueError("system capacity must be >= 1")
    return math.ceil(math.log2(system_capacity)) + 4


def common_prefix_len(a: str, b: str) -> int:
    if len(a) != len(b):
        raise StructuralError(f"membership vector length mismatch: {len(a)} != {len(b)}")
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return len(a)


def bits_to_int(bits: str) -> int:
    return int(bits, 2) if bits else 0


def int_to_bits(value: int, length: int) -> str:
    return format(value, f"0{length}b") if length else ""


@dataclass
class SearchResult:
    terminal: int
    exact: bool
    path: list[int]
    failed: bool = False

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    @property
    def ok(self) -> bool:
        return not self.failed


@dataclass
class OverlayNode:
    """Read-only snapshot of one node, for inspection and tests."""

    index: int
    num_id: int
    mem_vec: str
    kind: NodeKind
    online: bool
    table: list[tuple[int | None, int | None]] = field(default_factory=list)


class Overlay:
    """A population of Skip Graph nodes sharing one membership-vector length."""

    def __init__(self, vec_len: int):
        if vec_len < 0:
            raise ValueError("vector length must be non-negative")
        self.L = vec_len
        self.num_id: list[int] = []
        self.mem_vec: list[int] = []
        self.kind: list[int] = []
        self.online: list[bool] = []
        self.left: list[list[int]] = [[] for _ in range(vec_len + 1)]
        self.right: list[list[int]] = [[] for _ in range(vec_len + 1)]
        self._n_online = 0
        self.isolated: set[int] = set()

    # ------------------------------------------------------------------
    # population management

    def add_node(self, num_id: int, mem_vec: int | str, kind: NodeKind = NodeKind.PEER) -> int:
        """Register an offline node and return its index."""
        if isinstance(mem_vec, str):
            if len(mem_vec) != self.L:
                raise StructuralError(f"membership vector {mem_vec!r} is not {self.L} bits")
            mem_vec = bits_to_int(mem_vec)
        elif not 0 <= mem_vec < (1 << self.L) and not (self.L == 0 and mem_vec == 0):
            raise StructuralError(f"membership vector {mem_vec} does not fit in {self.L} bits")
        if not 0 <= num_id < 1 << 64:
            raise ValueError(f"numerical id {num_id} outside [0, 2^64)")
        idx = len(self.num_id)
        self.num_id.append(num_id)
        self.mem_vec.append(mem_vec)
        self.kind.append(int(kind))
        self.online.append(False)
        for lvl in range(self.L + 1):
            self.left[lvl].append(NONE)
            self.right[lvl].append(NONE)
        return idx

    def __len__(self) -> int:
        return len(self.num_id)

    @property
    def n_online(self) -> int:
        return self._n_online

    def online_nodes(self) -> list[int]:
        return [i for i, up in enumerate(self.online) if up]

    def cpl(self, a: int, b: int) -> int:
        """Common prefix length of the membership vectors of nodes ``a`` and ``b``."""
        return self.L - (self.mem_vec[a] ^ self.mem_vec[b]).bit_length()

    def node(self, idx: int) -> OverlayNode:
        table = []
        for lvl in range(self.L + 1):
            lo, hi = self.left[lvl][idx], self.right[lvl][idx]
            table.append((None if lo < 0 else lo, None if hi < 0 else hi))
        return OverlayNode(
            index=idx,
            num_id=self.num_id[idx],
            mem_vec=int_to_bits(self.mem_vec[idx], self.L),
            kind=NodeKind(self.kind[idx]),
            online=self.online[idx],
            table=table,
        )

    def _top_level(self, x: int) -> int:
        for lvl in range(self.L, -1, -1):
            if self.left[lvl][x] >= 0 or self.right[lvl][x] >= 0:
                return lvl
        return NONE

    def _clear(self, x: int) -> None:
        for lvl in range(self.L + 1):
            self.left[lvl][x] = NONE
            self.right[lvl][x] = NONE

    # ------------------------------------------------------------------
    # routing

    def search_by_num_id(self, initiator: int, target: int, joiner: int = NONE) -> SearchResult:
        """Greedy no-overshoot search for the greatest numerical id <= ``target``.

        Falls back to the smallest id when every online id exceeds ``target``.
        A lookup entry naming an offline node is skipped by dropping a level;
        needing such an entry at level 0 fails the query. An initiator with an
        empty table while other nodes are online is cut off and fails too.
        ``joiner`` is the node locating its own position during a join: entries
        naming it mark that position instead of counting as dead.
        """
        online = self.online
        if not online[initiator]:
            raise QueryRejected(f"initiator {initiator} is offline")
        ids = self.num_id
        cur = initiator
        cur_id = ids[cur]
        path = [cur]
        lvl = self._top_level(cur)
        if lvl < 0:
            return SearchResult(cur, cur_id == target, path, failed=self._n_online > 1)
        if cur_id <= target:
            right = self.right
            while True:
                nxt = right[lvl][cur]
                if nxt >= 0:
                    nid = ids[nxt]
                    if cur_id < nid <= target:
                        if online[nxt]:
                            cur, cur_id = nxt, nid
                            path.append(cur)
                            continue
                        if lvl == 0 and nxt != joiner:
                            return SearchResult(cur, False, path, failed=True)
                lvl -= 1
                if lvl < 0:
                    return SearchResult(cur, cur_id == target, path)
        left = self.left
        while True:
            nxt = left[lvl][cur]
            if nxt >= 0:
                nid = ids[nxt]
                if target <= nid < cur_id:
                    if online[nxt]:
                        cur, cur_id = nxt, nid
                        path.append(cur)
                        if nid == target:
                            return SearchResult(cur, True, path)
                        continue
                    if lvl == 0 and nxt != joiner:
                        return SearchResult(cur, False, path, failed=True)
            lvl -= 1
            if lvl < 0:
                break
        # cur is the smallest reachable id above target; its level-0 left
        # neighbor (if any) is the greatest id below target.
        nxt = left[0][cur]
        if nxt < 0 or nxt == joiner:
            return SearchResult(cur, False, path)
        if not online[nxt]:
            return SearchResult(cur, False, path, failed=True)
        path.append(nxt)
        return SearchResult(nxt, False, path)

    def _walk_find(self, x: int, lvl: int, target: int, path: list[int]):
        """Walk the level-``lvl`` list through ``x`` looking for a node whose
        vector matches ``target`` in more than ``lvl`` bits.

        Walks left first, retraces, then walks right. Returns
        ``(found, members, stale)``; ``members`` is the full list in id order
        and ``stale`` reports a truncated walk, both only when nothing was found.
        """
        online, mv, L = self.online, self.mem_vec, self.L
        stale = False
        left_part = []
        cur = x
        row = self.left[lvl]
        while True:
            nxt = row[cur]
            if nxt < 0:
                break
            if not online[nxt]:
                stale = True
                break
            cur = nxt
            path.append(cur)
            if L - (mv[cur] ^ target).bit_length() > lvl:
                return cur, None, False
            left_part.append(cur)
        if left_part:
            path.extend(reversed(left_part[:-1]))
            path.append(x)
        right_part = []
        cur = x
        row = self.right[lvl]
        while True:
            nxt = row[cur]
            if nxt < 0:
                break
            if not online[nxt]:
                stale = True
                break
            cur = nxt
            path.append(cur)
            if L - (mv[cur] ^ target).bit_length() > lvl:
                return cur, None, False
            right_part.append(cur)
        left_part.reverse()
        return NONE, left_part + [x] + right_part, stale

    def _scan(self, x: int, lvl: int, path: list[int]):
        """Visit the whole level-``lvl`` list through ``x``; return (members, stale)."""
        online = self.online
        stale = False
        left_part = []
        cur = x
        row = self.left[lvl]
        while True:
            nxt = row[cur]
            if nxt < 0:
                break
            if not online[nxt]:
                stale = True
                break
            cur = nxt
            path.append(cur)
            left_part.append(cur)
        if left_part:
            path.extend(reversed(left_part[:-1]))
            path.append(x)
        right_part = []
        cur = x
        row = self.right[lvl]
        while True:
            nxt = row[cur]
            if nxt < 0:
                break
            if not online[nxt]:
                stale = True
                break
            cur = nxt
            path.append(cur)
            right_part.append(cur)
        left_part.reverse()
        return left_part + [x] + right_part, stale

    def search_by_name_id(
        self, initiator: int, target: int | str, kind: NodeKind | None = None
    ) -> SearchResult:
        """Find the online node whose membership vector shares the longest prefix
        with ``target`` (ties: smallest numerical id).

        With ``kind`` set, only nodes of that kind are eligible terminals;
        other nodes still relay the query.
        """
        if isinstance(target, str):
            if len(target) != self.L:
                raise StructuralError(f"target vector {target!r} is not {self.L} bits")
            target = bits_to_int(target)
        if not self.online[initiator]:
            raise QueryRejected(f"initiator {initiator} is offline")
        L, mv = self.L, self.mem_vec
        cur = initiator
        path = [cur]
        failed = self._top_level(cur) < 0 and self._n_online > 1
        lvl = L - (mv[cur] ^ target).bit_length()
        members = None
        while lvl < L:
            found, members, stale = self._walk_find(cur, lvl, target, path)
            failed |= stale
            if found < 0:
                break
            cur = found
            lvl = L - (mv[cur] ^ target).bit_length()
            members = None
        if members is None:
            # climbed to a full match; cur's level-L list holds every exact match
            members, stale = self._scan(cur, lvl, path)
            failed |= stale
        pos = path[-1]
        kinds = self.kind
        want = None if kind is None else int(kind)
        while True:
            chosen = next((m for m in members if want is None or kinds[m] == want), NONE)
            if chosen >= 0 or lvl == 0:
                break
            lvl -= 1
            members, stale = self._scan(pos, lvl, path)
            failed |= stale
            pos = path[-1]
        if chosen < 0:
            # nothing eligible reachable; only possible when kind excludes the initiator
            return SearchResult(pos, False, path, failed=True)
        # walk back along the last scanned list to the chosen member
        i_pos = members.index(pos)
        i_ch = members.index(chosen)
        step = 1 if i_ch > i_pos else -1
        path.extend(members[i_pos + step : i_ch + step : step] if i_ch != i_pos else [])
        exact = mv[chosen] == target
        return SearchResult(chosen, exact, path, failed=failed)

    # ------------------------------------------------------------------
    # membership changes

    def lowest_online(self) -> int:
        for i, up in enumerate(self.online):
            if up:
                return i
        return NONE

    def insert_node(self, joining: int, introducer: int | None = None) -> bool:
        """Bring ``joining`` online and splice it into every level it belongs to.

        The position is located by a numerical-id search from ``introducer``
        (default: lowest-index online node). If that search fails on stale
        entries, up to ``JOIN_ATTEMPTS - 1`` further online nodes are tried in
        index order. If all fail, the node stays outside the overlay, is put in
        ``isolated`` and keeps its old table; ``retry_isolated`` tries again.
        Returns whether the node is now online.
        """
        online, ids = self.online, self.num_id
        if online[joining]:
            raise StructuralError(f"node {joining} is already online")
        if introducer is not None and introducer >= 0 and not online[introducer]:
            raise QueryRejected(f"introducer {introducer} is offline")
        self.isolated.discard(joining)
        my_id = ids[joining]
        res = None
        for intro in self._introducers(introducer):
            # located while still offline so stale entries naming it stay dead
            res = self.search_by_num_id(intro, my_id, joiner=joining)
            if not res.failed:
                break
        if res is not None and res.failed:
            log.debug("node %d could not locate its position; left isolated", joining)
            self.isolated.add(joining)
            return False
        L = self.L
        prev_lo = [self.left[lvl][joining] for lvl in range(L + 1)]
        prev_hi = [self.right[lvl][joining] for lvl in range(L + 1)]
        self._clear(joining)
        online[joining] = True
        self._n_online += 1
        if res is None:
            return True
        t = res.terminal
        if ids[t] == my_id:
            raise StructuralError(f"numerical id {my_id} already present at node {t}")
        if ids[t] < my_id:
            self._splice(0, joining, t, self.right[0][t], prev_lo[0], prev_hi[0])
        else:
            self._splice(0, joining, self.left[0][t], t, prev_lo[0], prev_hi[0])
        mv = self.mem_vec
        my_vec = mv[joining]
        for lvl in range(1, L + 1):
            lrow, rrow = self.left[lvl - 1], self.right[lvl - 1]
            p = lrow[joining]
            while p >= 0 and online[p] and L - (mv[p] ^ my_vec).bit_length() < lvl:
                p = lrow[p]
            if p >= 0 and online[p]:
                self._splice(lvl, joining, p, self.right[lvl][p], prev_lo[lvl], prev_hi[lvl])
                continue
            q = rrow[joining]
            while q >= 0 and online[q] and L - (mv[q] ^ my_vec).bit_length() < lvl:
                q = rrow[q]
            if q >= 0 and online[q]:
                self._splice(lvl, joining, NONE, q, prev_lo[lvl], prev_hi[lvl])
                continue
            break
        return True

    def _introducers(self, first: int | None):
        tried = 0
        if first is not None and first >= 0:
            yield first
            tried = 1
        for i, up in enumerate(self.online):
            if tried >= JOIN_ATTEMPTS:
                return
            if up and i != first:
                yield i
                tried += 1

    def retry_isolated(self) -> int:
        """Re-run the join of every isolated node; returns how many got in."""
        return sum(self.insert_node(x) for x in sorted(self.isolated))

    def abandon(self, node: int) -> bool:
        """Drop a pending isolated join (the node's session ended first)."""
        if node in self.isolated:
            self.isolated.discard(node)
            return True
        return False

    def _splice(self, lvl: int, x: int, lo: int, hi: int, prev_lo: int = NONE, prev_hi: int = NONE) -> None:
        """Link ``x`` between ``lo`` and ``hi`` at ``lvl``.

        ``hi`` is advanced past smaller ids and misordered candidates are
        dropped, so every entry keeps left ids < own id < right ids even when
        stale entries mislead the join; list walks therefore always terminate.
        A dead neighbor is kept as a stale entry, as a joiner copying its
        predecessor's view would, and an entry naming ``x`` itself falls back
        to ``x``'s table from its previous session. Dead nodes' own tables are
        not written.
        """
        online, ids, rrow = self.online, self.num_id, self.right[lvl]
        my_id = ids[x]
        if lo == x:
            lo = prev_lo
        if lo >= 0 and ids[lo] > my_id:
            lo = NONE
        while hi >= 0:
            if hi == x:
                hi = prev_hi
            elif online[hi] and ids[hi] < my_id:
                lo, hi = hi, rrow[hi]
            else:
                break
        if hi >= 0 and ids[hi] < my_id:
            hi = NONE
        # tighten both ends past live nodes that a stale view missed
        lrow = self.left[lvl]
        while lo >= 0 and online[lo]:
            r = rrow[lo]
            if r < 0 or r == x or not online[r] or ids[r] > my_id:
                break
            lo = r
        while hi >= 0 and online[hi]:
            l = lrow[hi]
            if l < 0 or l == x or not online[l] or ids[l] < my_id:
                break
            hi = l
        self.left[lvl][x] = lo
        rrow[x] = hi
        if lo >= 0 and online[lo]:
            rrow[lo] = x
        if hi >= 0 and online[hi]:
            self.left[lvl][hi] = x

    def leave_cooperative(self, leaving: int) -> None:
        if not self.online[leaving]:
            if not self.abandon(leaving):
                log.warning("node %d already offline; cooperative leave ignored", leaving)
            return
        for lvl in range(self.L + 1):
            lo, hi = self.left[lvl][leaving], self.right[lvl][leaving]
            if lo < 0 and hi < 0:
                break
            if lo >= 0 and self.right[lvl][lo] == leaving:
                self.right[lvl][lo] = hi
            if hi >= 0 and self.left[lvl][hi] == leaving:
                self.left[lvl][hi] = lo
        self._clear(leaving)
        self.online[leaving] = False
        self._n_online -= 1

    def leave_adversarial(self, leaving: int) -> None:
        # neighbors keep their stale entries; routing discovers them
        if not self.online[leaving]:
            if not self.abandon(leaving):
                log.warning("node %d already offline; adversarial leave ignored", leaving)
            return
        self.online[leaving] = False
        self._n_online -= 1

    # ------------------------------------------------------------------
    # diagnostics

    def dump(self) -> str:
        """One line per node: index, num_id, mem_vec, state, then ``lvl:left,right``."""
        lines = []
        for x in range(len(self)):
            cells = []
            for lvl in range(self.L + 1):
                lo, hi = self.left[lvl][x], self.right[lvl][x]
                cells.append(f"{lvl}:{'-' if lo < 0 else lo},{'-' if hi < 0 else hi}")
            state = "up" if self.online[x] else "down"
            kind = NodeKind(self.kind[x]).name
            lines.append(
                f"{x}\t{self.num_id[x]}\t{int_to_bits(self.mem_vec[x], self.L)}\t{kind}\t{state}\t"
                + " ".join(cells)
            )
        return "\n".join(lines) + ("\n" if lines else "")
