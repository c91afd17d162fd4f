"""The region memory manager.

Regions are chains of fixed-size pages drawn from a global free list; the
header occupies the first words of the first page. Live regions form a
doubly-linked list ordered newest-first by a monotone sequence number.
Backtracking support lives in three frame stacks (disjunction, if-then-else,
commit) that protect backward-live regions from reclamation and instantly
reclaim memory allocated by backtracked-over computations.

Word counts are simulated units: a construction of arity n costs n words;
word-sized values (integers, enumeration constants, empty functors) cost
nothing and regions that can only ever hold such values are "virtual": their
creation is counted but they occupy no pages and never enter the region list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PAGE_SIZE = 2048          # words per page; one word links the chain
HEADER_WORDS = 8          # header footprint in the first page's data area
PAGE_BLOCK = 100          # pages requested from the host at a time


class SafetyViolation(Exception):
    pass


class Region:
    __slots__ = ("seq", "virtual", "page_count", "next_free", "words", "peak",
                 "prev_r", "next_r", "ite_protected", "commit_slot",
                 "destroy_at_commit", "removed", "reclaimed", "cells",
                 "label")

    def __init__(self, seq: int | None, virtual: bool = False, label: str = ""):
        self.seq = seq
        self.virtual = virtual
        self.page_count = 0 if virtual else 1
        self.next_free = HEADER_WORDS
        self.words = 0
        self.peak = 0
        self.prev_r: Region | None = None
        self.next_r: Region | None = None
        self.ite_protected = None          # IteFrame | None
        self.commit_slot: CommitEntry | None = None
        self.destroy_at_commit = False
        self.removed = False
        self.reclaimed = False
        self.cells: list | None = [] if not virtual else None
        self.label = label

    def size_record(self) -> tuple[int, int]:
        return (self.page_count, self.next_free)

    def __repr__(self):
        kind = "virt" if self.virtual else f"seq={self.seq}"
        return f"<Region {self.label or id(self)} {kind} words={self.words}>"


class CommitEntry:
    __slots__ = ("region", "prev")

    def __init__(self, region: Region, prev: "CommitEntry | None"):
        self.region = region
        self.prev = prev


DISJ_FIXED_SLOTS = 4
ITE_FIXED_SLOTS = 4
COMMIT_FIXED_SLOTS = 5


class DisjFrame:
    __slots__ = ("saved_seq", "prot", "snaps", "words")
    fixed_slots = DISJ_FIXED_SLOTS

    def __init__(self, saved_seq: int):
        self.saved_seq = saved_seq
        self.prot: list[Region] = []
        # (region, page_count, next_free, words, cell_count)
        self.snaps: list[tuple] = []
        self.words = 0

    @property
    def num_prot_region(self) -> int:
        return len(self.prot)

    @property
    def num_size_rec(self) -> int:
        return len(self.snaps)

    def size_words(self) -> int:
        return self.fixed_slots + 3 * len(self.snaps) + len(self.prot)


class IteFrame:
    __slots__ = ("saved_seq", "prot", "snaps", "words")
    fixed_slots = ITE_FIXED_SLOTS

    def __init__(self, saved_seq: int):
        self.saved_seq = saved_seq
        self.prot: list[Region | None] = []
        self.snaps: list[tuple] = []
        self.words = 0

    @property
    def num_prot_region(self) -> int:
        return len(self.prot)

    @property
    def num_size_rec(self) -> int:
        return len(self.snaps)

    def size_words(self) -> int:
        return self.fixed_slots + 3 * len(self.snaps) + len(self.prot)


class CommitFrame:
    __slots__ = ("saved_seq", "saved_disj_top", "saved_ite_top", "entries",
                 "words")
    fixed_slots = COMMIT_FIXED_SLOTS

    def __init__(self, saved_seq: int, saved_disj_top: int, saved_ite_top: int):
        self.saved_seq = saved_seq
        self.saved_disj_top = saved_disj_top
        self.saved_ite_top = saved_ite_top
        self.entries: list[CommitEntry] = []
        self.words = 0

    @property
    def num_saved_regions(self) -> int:
        return len(self.entries)

    def size_words(self) -> int:
        return self.fixed_slots + 2 * len(self.entries)


@dataclass
class FrameStats:
    total: int = 0
    live: int = 0
    max_live: int = 0
    words: int = 0
    live_words: int = 0
    max_words: int = 0
    size_records: int = 0
    protected: int = 0


@dataclass
class RunStats:
    regions_total: int = 0
    regions_live: int = 0
    regions_max: int = 0
    words_total: int = 0
    words_live: int = 0
    words_max: int = 0
    slr: int = 0
    wasted_words: int = 0
    pages_requested: int = 0
    ir_new_alloc: int = 0
    ir_new_region: int = 0
    ir_then: int = 0
    ir_commit: int = 0
    solutions: int = 0
    steps: int = 0
    frames: dict[str, FrameStats] = field(
        default_factory=lambda: {"disj": FrameStats(), "ite": FrameStats(),
                                 "commit": FrameStats()})

    @property
    def saving(self) -> float:
        if self.words_total == 0:
            return 0.0
        return 1.0 - self.words_max / self.words_total


class RegionManager:
    def __init__(self, page_size: int = PAGE_SIZE, page_block: int = PAGE_BLOCK,
                 check: bool = False):
        if page_size < HEADER_WORDS + 2:
            raise ValueError("page size too small")
        self.page_size = page_size
        self.usable = page_size - 1
        self.page_block = page_block
        self.check = check
        self.seq = 1
        self.free_pages = 0
        self.head: Region | None = None
        self.disj_stack: list[DisjFrame] = []
        self.ite_stack: list[IteFrame] = []
        self.commit_stack: list[CommitFrame] = []
        self.stats = RunStats()

    # -- pages ---------------------------------------------------------------

    def _take_page(self) -> None:
        if self.free_pages == 0:
            self.free_pages += self.page_block
            self.stats.pages_requested += self.page_block
        self.free_pages -= 1

    # -- region lifecycle ------------------------------------------------------

    def create_region(self, label: str = "") -> Region:
        self._take_page()
        r = Region(self.seq, label=label)
        self.seq += 1
        r.next_r = self.head
        if self.head is not None:
            self.head.prev_r = r
        self.head = r
        st = self.stats
        st.regions_total += 1
        st.regions_live += 1
        st.regions_max = max(st.regions_max, st.regions_live)
        return r

    def create_virtual_region(self, label: str = "") -> Region:
        """A region of word-sized content: counted as created, but it takes
        no page and never joins the region list."""
        self.stats.regions_total += 1
        return Region(None, virtual=True, label=label)

    def alloc(self, region: Region, functor: str, args: tuple) -> int:
        n = len(args)
        if region.reclaimed:
            raise SafetyViolation(f"allocation into reclaimed region "
                                  f"{region.label}")
        if region.virtual:
            raise SafetyViolation(f"allocation of {n} words into zero-sized "
                                  f"region {region.label}")
        if n > self.usable:
            raise SafetyViolation(f"allocation of {n} words exceeds page size")
        remaining = self.usable - region.next_free
        if remaining < n:
            self.stats.wasted_words += remaining
            self._take_page()
            region.page_count += 1
            region.next_free = 0
        region.next_free += n
        region.words += n
        if region.words > region.peak:
            region.peak = region.words
            if region.peak > self.stats.slr:
                self.stats.slr = region.peak
        st = self.stats
        st.words_total += n
        st.words_live += n
        if st.words_live > st.words_max:
            st.words_max = st.words_live
        idx = len(region.cells)
        region.cells.append((functor, args))
        return idx

    def deref(self, region: Region, idx: int) -> tuple:
        if region.reclaimed:
            raise SafetyViolation(f"read from reclaimed region {region.label}")
        cells = region.cells
        if cells is None or idx >= len(cells):
            raise SafetyViolation(f"read of stale cell in region {region.label}")
        return cells[idx]

    def is_disj_protected(self, region: Region) -> bool:
        return bool(self.disj_stack) and \
            region.seq < self.disj_stack[-1].saved_seq

    def _protected(self, region: Region) -> bool:
        return region.ite_protected is not None or self.is_disj_protected(region)

    def remove_region(self, region: Region):
        """Reclaims unless the region is backward-live-protected; a protected
        removal is remembered and given effect by the support points."""
        if region.virtual:
            region.removed = True
            return
        if region.reclaimed:
            raise SafetyViolation(f"remove of already-reclaimed region "
                                  f"{region.label}")
        if self._protected(region):
            region.removed = True
            if self.commit_stack:
                top = self.commit_stack[-1]
                if region.seq >= top.saved_seq:
                    region.destroy_at_commit = True
            return
        self.reclaim(region)

    def reclaim(self, region: Region, bucket: str | None = None):
        if region.reclaimed:
            raise SafetyViolation(f"region {region.label} reclaimed twice")
        entry = region.commit_slot
        while entry is not None:
            entry.region = None
            entry = entry.prev
        region.commit_slot = None
        # unlink from the region list
        if region.prev_r is not None:
            region.prev_r.next_r = region.next_r
        else:
            self.head = region.next_r
        if region.next_r is not None:
            region.next_r.prev_r = region.prev_r
        region.prev_r = region.next_r = None
        self.free_pages += region.page_count
        st = self.stats
        st.words_live -= region.words
        st.regions_live -= 1
        if bucket is not None:
            setattr(st, bucket, getattr(st, bucket) + region.words)
        region.reclaimed = True
        region.cells = None

    # -- frame bookkeeping ------------------------------------------------------

    def _frame_push(self, kind: str, frame):
        fs = self.stats.frames[kind]
        frame.words = frame.size_words()
        fs.total += 1
        fs.live += 1
        fs.max_live = max(fs.max_live, fs.live)
        fs.words += frame.words
        fs.live_words += frame.words
        fs.max_words = max(fs.max_words, fs.live_words)
        fs.size_records += frame.num_size_rec if hasattr(frame, "snaps") else 0
        fs.protected += (frame.num_prot_region if hasattr(frame, "prot")
                         else frame.num_saved_regions)

    def _frame_pop(self, kind: str, frame):
        fs = self.stats.frames[kind]
        fs.live -= 1
        fs.live_words -= frame.words

    # -- disjunction support ------------------------------------------------------

    def disj_enter(self, flavor: str, snapshot_regions, removed_regions=()) -> DisjFrame:
        """(d1): push a frame, save the sequence number and size records;
        a semidet disjunction also records the unprotected members of its
        removed set for the success points."""
        prev_top = self.disj_stack[-1] if self.disj_stack else None
        frame = DisjFrame(self.seq)
        self.disj_stack.append(frame)
        for r in snapshot_regions:
            if r.virtual or r.reclaimed:
                continue
            frame.snaps.append((r, r.page_count, r.next_free, r.words,
                                len(r.cells)))
        if flavor == "semidet":
            for r in removed_regions:
                if r.virtual or r.reclaimed:
                    continue
                if r.ite_protected is not None:
                    continue
                if prev_top is not None and r.seq < prev_top.saved_seq:
                    continue
                frame.prot.append(r)
        self._frame_push("disj", frame)
        return frame

    def _instant_reclaim_new(self, saved_seq: int, bucket: str):
        r = self.head
        while r is not None and r.seq >= saved_seq:
            nxt = r.next_r
            self.reclaim(r, bucket=bucket)
            r = nxt

    def _restore_snaps(self, snaps, bucket: str):
        for (r, pc, nf, words0, ncells) in snaps:
            if r.reclaimed:
                if self.check:
                    raise SafetyViolation(
                        f"snapshot region {r.label} reclaimed while protected")
                continue
            delta = r.words - words0
            if delta == 0 and r.page_count == pc:
                continue
            self.free_pages += r.page_count - pc
            r.page_count = pc
            r.next_free = nf
            r.words = words0
            del r.cells[ncells:]
            st = self.stats
            st.words_live -= delta
            setattr(st, bucket, getattr(st, bucket) + delta)

    def disj_resume(self, frame: DisjFrame, is_last: bool):
        """(d2)/(d3): instant reclaiming of new regions and of new
        allocations into old regions; the frame pops at the last disjunct."""
        assert self.disj_stack and self.disj_stack[-1] is frame
        self._instant_reclaim_new(frame.saved_seq, "ir_new_region")
        self._restore_snaps(frame.snaps, "ir_new_alloc")
        if is_last:
            self.disj_stack.pop()
            self._frame_pop("disj", frame)

    def disj_succeed_nonlast(self, frame: DisjFrame):
        """(e1)/(e2), semidet only: give effect to removes deferred by this
        frame's protection, then pop."""
        assert self.disj_stack and self.disj_stack[-1] is frame
        for r in frame.prot:
            if r.reclaimed:
                if self.check:
                    raise SafetyViolation(
                        f"protected region {r.label} reclaimed early")
                continue
            if r.removed:
                self.reclaim(r)
            # an unexecuted remove leaves the region live; nothing to do
        self.disj_stack.pop()
        self._frame_pop("disj", frame)

    # -- if-then-else support ------------------------------------------------------

    def ite_enter(self, protect_regions, snapshot_pairs) -> IteFrame:
        """(i1): push a frame, ite-protect the condition's removed set, save
        size records (conditionally for regions removed at the else start)."""
        frame = IteFrame(self.seq)
        self.ite_stack.append(frame)
        for r in protect_regions:
            if r.virtual or r.reclaimed:
                continue
            if r.ite_protected is not None or self.is_disj_protected(r):
                continue
            r.ite_protected = frame
            frame.prot.append(r)
        for r, conditional in snapshot_pairs:
            if r.virtual or r.reclaimed:
                continue
            if conditional:
                protected_before = self.is_disj_protected(r) or (
                    r.ite_protected is not None and r.ite_protected is not frame)
                if not protected_before:
                    continue
            frame.snaps.append((r, r.page_count, r.next_free, r.words,
                                len(r.cells)))
        self._frame_push("ite", frame)
        return frame

    def ite_then(self, frame: IteFrame, cond_nondet: bool):
        """(i2): reclaim the ite-protected regions. A nondet condition keeps
        the frame (popped at the failure continuation) and nulls reclaimed
        entries so re-entry cannot reclaim twice."""
        if not cond_nondet:
            assert self.ite_stack and self.ite_stack[-1] is frame
            for r in frame.prot:
                if r is None or r.reclaimed:
                    continue
                if r.removed:
                    self.reclaim(r, bucket="ir_then")
                else:
                    r.ite_protected = None
            self.ite_stack.pop()
            self._frame_pop("ite", frame)
            return
        for i, r in enumerate(frame.prot):
            if r is None or r.reclaimed:
                continue
            if r.removed and not self.is_disj_protected(r):
                self.reclaim(r, bucket="ir_then")
                frame.prot[i] = None

    def ite_else(self, frame: IteFrame):
        """(i3): unprotect, instant-reclaim the condition's allocations,
        pop."""
        assert self.ite_stack and self.ite_stack[-1] is frame
        for r in frame.prot:
            if r is not None and not r.reclaimed:
                r.ite_protected = None
        self._instant_reclaim_new(frame.saved_seq, "ir_new_region")
        self._restore_snaps(frame.snaps, "ir_new_alloc")
        self.ite_stack.pop()
        self._frame_pop("ite", frame)

    def ite_pop_after_success(self, frame: IteFrame):
        """Failure continuation of an if-then-else whose nondet condition
        succeeded at least once: pop the frame kept alive by (i2)."""
        assert self.ite_stack and self.ite_stack[-1] is frame
        for r in frame.prot:
            if r is not None and not r.reclaimed and r.ite_protected is frame:
                r.ite_protected = None
        self.ite_stack.pop()
        self._frame_pop("ite", frame)

    # -- commit support ------------------------------------------------------

    def commit_enter(self, removed_regions) -> CommitFrame:
        """(c1): push a frame, save the stack tops, and record the handle and
        previous commit slot of each unprotected region in the removed set."""
        frame = CommitFrame(self.seq, len(self.disj_stack), len(self.ite_stack))
        seen: set[int] = set()
        for r in removed_regions:
            if r.virtual or r.reclaimed or id(r) in seen:
                continue
            if self._protected(r):
                continue
            seen.add(id(r))
            entry = CommitEntry(r, r.commit_slot)
            r.commit_slot = entry
            frame.entries.append(entry)
        self.commit_stack.append(frame)
        self._frame_push("commit", frame)
        return frame

    def commit_success(self, frame: CommitFrame):
        """(c2): reclaim saved old regions and flagged new regions, restore
        the disj/ite stack tops, pop."""
        assert self.commit_stack and self.commit_stack[-1] is frame
        for e in frame.entries:
            r = e.region
            if r is None or r.reclaimed:
                continue
            if r.removed:
                self.reclaim(r, bucket="ir_commit")
            else:
                r.commit_slot = e.prev
        r = self.head
        pending = []
        while r is not None and r.seq >= frame.saved_seq:
            if r.destroy_at_commit:
                pending.append(r)
            r = r.next_r
        for r in pending:
            self.reclaim(r, bucket="ir_commit")
        while len(self.disj_stack) > frame.saved_disj_top:
            df = self.disj_stack.pop()
            self._frame_pop("disj", df)
        while len(self.ite_stack) > frame.saved_ite_top:
            itf = self.ite_stack.pop()
            for pr in itf.prot:
                if pr is not None and not pr.reclaimed and \
                        pr.ite_protected is itf:
                    pr.ite_protected = None
            self._frame_pop("ite", itf)
        self.commit_stack.pop()
        self._frame_pop("commit", frame)

    def commit_fail(self, frame: CommitFrame):
        """(c3): restore the saved regions' commit slots, pop."""
        assert self.commit_stack and self.commit_stack[-1] is frame
        for e in reversed(frame.entries):
            if e.region is not None:
                e.region.commit_slot = e.prev
        self.commit_stack.pop()
        self._frame_pop("commit", frame)

    # -- invariants (used by tests and --check-safety) ---------------------------

    def region_list_seqs(self) -> list[int]:
        out = []
        r = self.head
        while r is not None:
            out.append(r.seq)
            r = r.next_r
        return out

    def verify_invariants(self):
        seqs = self.region_list_seqs()
        assert seqs == sorted(seqs, reverse=True), "region list out of order"
        for i in range(1, len(self.disj_stack)):
            assert self.disj_stack[i - 1].saved_seq <= self.disj_stack[i].saved_seq
