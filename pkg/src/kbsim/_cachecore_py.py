"""Pure-Python cache-hierarchy core.

Reference implementation of the block-granular three-level model
(per-core L1D and non-inclusive L2, shared LLC with a DMA way quota).
`kbsim._cachecore` is an algorithm-identical compiled version; whichever
imports first is selected by `kbsim.mem`. Both operate on integer block
ids and integer LRU stamps, so their outputs are exactly interchangeable.

Replacement/motion policy (LRU everywhere):
- CPU fills allocate into L1 and L2; the LLC is filled by L2 victims.
- A dirty L1 victim merges into L2 (allocating if absent); clean victims
  are dropped.
- Every L2 victim moves to the LLC; a dirty one counts as an L2 writeback.
- An LLC hit on a CPU access promotes the block up and leaves a *clean*
  LLC copy in place (dirtiness travels with the promoted copy). Evicting
  an LLC entry never touches L1/L2 copies: the L2 is non-inclusive.
- DMA writes invalidate stale L1/L2 copies. With DCA they allocate dirty
  LLC lines restricted to the first `dca_quota` ways of each set;
  without DCA they go to DRAM and invalidate any LLC copy.
- Dirty evictions count as writebacks at the evicting level.
"""

L1, L2, LLC, DRAM = 1, 2, 3, 4


class CacheCore:
    def __init__(self, ncores, l1_sets, l1_ways, l2_sets, l2_ways,
                 llc_sets, llc_ways, dca_quota):
        if not 0 <= dca_quota <= llc_ways:
            raise ValueError("dca_quota must be within llc_ways")
        self.ncores = ncores
        self.l1_sets, self.l1_ways = l1_sets, l1_ways
        self.l2_sets, self.l2_ways = l2_sets, l2_ways
        self.llc_sets, self.llc_ways = llc_sets, llc_ways
        self.dca_quota = dca_quota

        def bank(n):
            return [-1] * n, [0] * n, [0] * n  # tag, dirty, stamp

        self._l1_tag, self._l1_dirty, self._l1_stamp = bank(ncores * l1_sets * l1_ways)
        self._l2_tag, self._l2_dirty, self._l2_stamp = bank(ncores * l2_sets * l2_ways)
        self._llc_tag, self._llc_dirty, self._llc_stamp = bank(llc_sets * llc_ways)
        self._stamp = 0

        self.l1_fills = self.l2_fills = self.llc_fills = 0
        self.l1_evictions = self.l2_evictions = self.llc_evictions = 0
        self.l1_invalidations = self.l2_invalidations = self.llc_invalidations = 0
        self.l1_writebacks = self.l2_writebacks = self.llc_writebacks = 0

    # -- internal helpers ---------------------------------------------------

    def _touch(self):
        self._stamp += 1
        return self._stamp

    def _probe(self, tags, base, ways, block):
        for w in range(ways):
            if tags[base + w] == block:
                return w
        return -1

    def _victim_way(self, tags, stamps, base, ways):
        """First invalid way, else least recently stamped."""
        best, best_stamp = 0, None
        for w in range(ways):
            if tags[base + w] == -1:
                return w
            s = stamps[base + w]
            if best_stamp is None or s < best_stamp:
                best, best_stamp = w, s
        return best

    def _llc_insert(self, block, dirty):
        base = (block % self.llc_sets) * self.llc_ways
        w = self._probe(self._llc_tag, base, self.llc_ways, block)
        if w >= 0:
            i = base + w
            self._llc_dirty[i] |= dirty
            self._llc_stamp[i] = self._touch()
            return
        w = self._victim_way(self._llc_tag, self._llc_stamp, base, self.llc_ways)
        i = base + w
        if self._llc_tag[i] != -1:
            self.llc_evictions += 1
            if self._llc_dirty[i]:
                self.llc_writebacks += 1
        self._llc_tag[i] = block
        self._llc_dirty[i] = dirty
        self._llc_stamp[i] = self._touch()
        self.llc_fills += 1

    def _l2_insert(self, core, block, dirty):
        base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
        w = self._probe(self._l2_tag, base, self.l2_ways, block)
        if w >= 0:
            i = base + w
            self._l2_dirty[i] |= dirty
            self._l2_stamp[i] = self._touch()
            return
        w = self._victim_way(self._l2_tag, self._l2_stamp, base, self.l2_ways)
        i = base + w
        if self._l2_tag[i] != -1:
            self.l2_evictions += 1
            if self._l2_dirty[i]:
                self.l2_writebacks += 1
            self._llc_insert(self._l2_tag[i], self._l2_dirty[i])
        self._l2_tag[i] = block
        self._l2_dirty[i] = dirty
        self._l2_stamp[i] = self._touch()
        self.l2_fills += 1

    def _l1_insert(self, core, block, dirty):
        base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
        w = self._probe(self._l1_tag, base, self.l1_ways, block)
        if w >= 0:
            i = base + w
            self._l1_dirty[i] |= dirty
            self._l1_stamp[i] = self._touch()
            return
        w = self._victim_way(self._l1_tag, self._l1_stamp, base, self.l1_ways)
        i = base + w
        if self._l1_tag[i] != -1:
            self.l1_evictions += 1
            if self._l1_dirty[i]:
                self.l1_writebacks += 1
                self._l2_insert(core, self._l1_tag[i], 1)
        self._l1_tag[i] = block
        self._l1_dirty[i] = dirty
        self._l1_stamp[i] = self._touch()
        self.l1_fills += 1

    # -- public operations --------------------------------------------------

    def cpu_access(self, core, block, is_write):
        """Returns (hit_level, l2_writeback_delta, llc_writeback_delta)."""
        w2, w3 = self.l2_writebacks, self.llc_writebacks
        wr = 1 if is_write else 0

        base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
        w = self._probe(self._l1_tag, base, self.l1_ways, block)
        if w >= 0:
            i = base + w
            self._l1_dirty[i] |= wr
            self._l1_stamp[i] = self._touch()
            return L1, 0, 0

        base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
        w = self._probe(self._l2_tag, base, self.l2_ways, block)
        if w >= 0:
            self._l2_stamp[base + w] = self._touch()
            self._l1_insert(core, block, wr)
            return L2, self.l2_writebacks - w2, self.llc_writebacks - w3

        base = (block % self.llc_sets) * self.llc_ways
        w = self._probe(self._llc_tag, base, self.llc_ways, block)
        if w >= 0:
            i = base + w
            carried = self._llc_dirty[i]
            self._llc_dirty[i] = 0  # dirtiness moves up with the promoted copy
            self._llc_stamp[i] = self._touch()
            self._l2_insert(core, block, carried)
            self._l1_insert(core, block, wr)
            return LLC, self.l2_writebacks - w2, self.llc_writebacks - w3

        self._l2_insert(core, block, 0)
        self._l1_insert(core, block, wr)
        return DRAM, self.l2_writebacks - w2, self.llc_writebacks - w3

    def _invalidate_upper(self, block):
        for core in range(self.ncores):
            base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
            w = self._probe(self._l1_tag, base, self.l1_ways, block)
            if w >= 0:
                self._l1_tag[base + w] = -1
                self._l1_dirty[base + w] = 0
                self.l1_invalidations += 1
            base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
            w = self._probe(self._l2_tag, base, self.l2_ways, block)
            if w >= 0:
                self._l2_tag[base + w] = -1
                self._l2_dirty[base + w] = 0
                self.l2_invalidations += 1

    def dma_write_range(self, block, nblocks, dca):
        """DMA-write nblocks consecutive blocks; returns llc_writeback delta."""
        w3 = self.llc_writebacks
        for b in range(block, block + nblocks):
            self._invalidate_upper(b)
            base = (b % self.llc_sets) * self.llc_ways
            w = self._probe(self._llc_tag, base, self.llc_ways, b)
            if dca:
                if w >= 0:
                    i = base + w
                    self._llc_dirty[i] = 1
                    self._llc_stamp[i] = self._touch()
                    continue
                w = self._victim_way(self._llc_tag, self._llc_stamp, base,
                                     self.dca_quota)
                i = base + w
                if self._llc_tag[i] != -1:
                    self.llc_evictions += 1
                    if self._llc_dirty[i]:
                        self.llc_writebacks += 1
                self._llc_tag[i] = b
                self._llc_dirty[i] = 1
                self._llc_stamp[i] = self._touch()
                self.llc_fills += 1
            else:
                if w >= 0:
                    self._llc_tag[base + w] = -1
                    self._llc_dirty[base + w] = 0
                    self.llc_invalidations += 1
        return self.llc_writebacks - w3

    def dma_read_range(self, block, nblocks):
        """Returns how many of the blocks are resident in any cache level."""
        found = 0
        for b in range(block, block + nblocks):
            if self._find_any(b):
                found += 1
        return found

    def _find_any(self, block):
        base = (block % self.llc_sets) * self.llc_ways
        if self._probe(self._llc_tag, base, self.llc_ways, block) >= 0:
            return True
        for core in range(self.ncores):
            base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
            if self._probe(self._l1_tag, base, self.l1_ways, block) >= 0:
                return True
            base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
            if self._probe(self._l2_tag, base, self.l2_ways, block) >= 0:
                return True
        return False

    # -- instrumentation (tests, debugging) ----------------------------------

    def llc_way_of(self, block):
        base = (block % self.llc_sets) * self.llc_ways
        return self._probe(self._llc_tag, base, self.llc_ways, block)

    def resident(self, level):
        tags = {L1: self._l1_tag, L2: self._l2_tag, LLC: self._llc_tag}[level]
        return sum(1 for t in tags if t != -1)
