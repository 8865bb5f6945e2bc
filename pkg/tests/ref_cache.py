"""Brute-force reference model of the cache-hierarchy policy.

Deliberately naive: per-way line records, linear scans, a shared event
counter for recency. Used by the tests as the independent oracle against
which both cache-core backends are checked on random traces.

Policy, restated from scratch:
- CPU access checks L1(core), then L2(core), then LLC, then DRAM.
- On a CPU fill the block lands in L2 and L1 (LLC is not filled directly).
- LRU victim choice per set: any empty way first, else oldest recency.
- A valid L1 victim is dropped if clean, merged into L2 if dirty
  (counting an L1 writeback).
- A valid L2 victim always moves to the LLC; dirty counts an L2 writeback.
- A valid LLC victim is dropped; dirty counts an LLC writeback.
- An LLC hit on a CPU access leaves a clean LLC copy and carries the
  dirty bit into the new L2 copy; the L1 copy is dirty iff the access
  writes.
- A DMA write invalidates L1/L2 copies everywhere. With DCA it refreshes
  an existing LLC copy to dirty, else allocates a dirty copy choosing the
  victim among ways [0, quota). Without DCA it invalidates any LLC copy.
"""

L1, L2, LLC, DRAM = 1, 2, 3, 4


class Line:
    def __init__(self, block, dirty, used):
        self.block = block
        self.dirty = dirty
        self.used = used


class RefBank:
    def __init__(self, sets, ways):
        self.sets = sets
        self.ways = ways
        self.grid = [[None] * ways for _ in range(sets)]

    def find(self, block):
        row = self.grid[block % self.sets]
        for way, line in enumerate(row):
            if line is not None and line.block == block:
                return way
        return -1

    def victim(self, block, limit=None):
        row = self.grid[block % self.sets]
        ways = self.ways if limit is None else limit
        oldest_way, oldest = None, None
        for way in range(ways):
            if row[way] is None:
                return way
            if oldest is None or row[way].used < oldest:
                oldest_way, oldest = way, row[way].used
        return oldest_way

    def get(self, block, way):
        return self.grid[block % self.sets][way]

    def put(self, block, way, line):
        self.grid[block % self.sets][way] = line

    def drop(self, block, way):
        self.grid[block % self.sets][way] = None

    def resident(self):
        return sum(1 for row in self.grid for line in row if line is not None)


class RefHierarchy:
    def __init__(self, ncores, l1_sets, l1_ways, l2_sets, l2_ways,
                 llc_sets, llc_ways, dca_quota):
        self.l1 = [RefBank(l1_sets, l1_ways) for _ in range(ncores)]
        self.l2 = [RefBank(l2_sets, l2_ways) for _ in range(ncores)]
        self.llc = RefBank(llc_sets, llc_ways)
        self.quota = dca_quota
        self.ncores = ncores
        self.clock = 0
        self.l1_writebacks = self.l2_writebacks = self.llc_writebacks = 0

    def _tick(self):
        self.clock += 1
        return self.clock

    def _llc_insert(self, block, dirty, limit=None):
        way = self.llc.find(block)
        if way >= 0:
            line = self.llc.get(block, way)
            line.dirty = line.dirty or dirty
            line.used = self._tick()
            return
        way = self.llc.victim(block, limit)
        old = self.llc.get(block, way)
        if old is not None and old.dirty:
            self.llc_writebacks += 1
        self.llc.put(block, way, Line(block, dirty, self._tick()))

    def _l2_insert(self, core, block, dirty):
        bank = self.l2[core]
        way = bank.find(block)
        if way >= 0:
            line = bank.get(block, way)
            line.dirty = line.dirty or dirty
            line.used = self._tick()
            return
        way = bank.victim(block)
        old = bank.get(block, way)
        if old is not None:
            if old.dirty:
                self.l2_writebacks += 1
            self._llc_insert(old.block, old.dirty)
        bank.put(block, way, Line(block, dirty, self._tick()))

    def _l1_insert(self, core, block, dirty):
        bank = self.l1[core]
        way = bank.find(block)
        if way >= 0:
            line = bank.get(block, way)
            line.dirty = line.dirty or dirty
            line.used = self._tick()
            return
        way = bank.victim(block)
        old = bank.get(block, way)
        if old is not None and old.dirty:
            self.l1_writebacks += 1
            self._l2_insert(core, old.block, True)
        bank.put(block, way, Line(block, dirty, self._tick()))

    def cpu_access(self, core, block, is_write):
        way = self.l1[core].find(block)
        if way >= 0:
            line = self.l1[core].get(block, way)
            line.dirty = line.dirty or is_write
            line.used = self._tick()
            return L1
        way = self.l2[core].find(block)
        if way >= 0:
            self.l2[core].get(block, way).used = self._tick()
            self._l1_insert(core, block, is_write)
            return L2
        way = self.llc.find(block)
        if way >= 0:
            line = self.llc.get(block, way)
            carried = line.dirty
            line.dirty = False
            line.used = self._tick()
            self._l2_insert(core, block, carried)
            self._l1_insert(core, block, is_write)
            return LLC
        self._l2_insert(core, block, False)
        self._l1_insert(core, block, is_write)
        return DRAM

    def dma_write(self, block, dca):
        for core in range(self.ncores):
            for bank in (self.l1[core], self.l2[core]):
                way = bank.find(block)
                if way >= 0:
                    bank.drop(block, way)
        way = self.llc.find(block)
        if dca:
            if way >= 0:
                line = self.llc.get(block, way)
                line.dirty = True
                line.used = self._tick()
            else:
                self._llc_insert(block, True, limit=self.quota)
        elif way >= 0:
            self.llc.drop(block, way)
