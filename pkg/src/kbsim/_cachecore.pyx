# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cache-hierarchy core.

Same algorithm as kbsim._cachecore_py (see that module for the policy
description); this version keeps the tag/dirty/stamp banks in flat C
arrays so the per-packet block loops run at native speed. Outputs are
bit-identical to the pure-Python implementation.
"""

from libc.stdlib cimport calloc, free

DEF LEVEL_L1 = 1
DEF LEVEL_L2 = 2
DEF LEVEL_LLC = 3
DEF LEVEL_DRAM = 4


cdef class CacheCore:
    cdef long long *l1_tag
    cdef long long *l2_tag
    cdef long long *llc_tag
    cdef long long *l1_stamp
    cdef long long *l2_stamp
    cdef long long *llc_stamp
    cdef char *l1_dirty
    cdef char *l2_dirty
    cdef char *llc_dirty
    cdef long long stamp
    cdef public int ncores, l1_sets, l1_ways, l2_sets, l2_ways
    cdef public int llc_sets, llc_ways, dca_quota
    cdef public long long l1_fills, l2_fills, llc_fills
    cdef public long long l1_evictions, l2_evictions, llc_evictions
    cdef public long long l1_invalidations, l2_invalidations, llc_invalidations
    cdef public long long l1_writebacks, l2_writebacks, llc_writebacks

    def __cinit__(self, int ncores, int l1_sets, int l1_ways, int l2_sets,
                  int l2_ways, int llc_sets, int llc_ways, int dca_quota):
        cdef Py_ssize_t n1 = ncores * l1_sets * l1_ways
        cdef Py_ssize_t n2 = ncores * l2_sets * l2_ways
        cdef Py_ssize_t n3 = llc_sets * llc_ways
        cdef Py_ssize_t i
        if dca_quota < 0 or dca_quota > llc_ways:
            raise ValueError("dca_quota must be within llc_ways")
        self.ncores = ncores
        self.l1_sets, self.l1_ways = l1_sets, l1_ways
        self.l2_sets, self.l2_ways = l2_sets, l2_ways
        self.llc_sets, self.llc_ways = llc_sets, llc_ways
        self.dca_quota = dca_quota
        self.l1_tag = <long long *> calloc(n1, sizeof(long long))
        self.l2_tag = <long long *> calloc(n2, sizeof(long long))
        self.llc_tag = <long long *> calloc(n3, sizeof(long long))
        self.l1_stamp = <long long *> calloc(n1, sizeof(long long))
        self.l2_stamp = <long long *> calloc(n2, sizeof(long long))
        self.llc_stamp = <long long *> calloc(n3, sizeof(long long))
        self.l1_dirty = <char *> calloc(n1, sizeof(char))
        self.l2_dirty = <char *> calloc(n2, sizeof(char))
        self.llc_dirty = <char *> calloc(n3, sizeof(char))
        if (self.l1_tag == NULL or self.l2_tag == NULL or self.llc_tag == NULL
                or self.l1_stamp == NULL or self.l2_stamp == NULL
                or self.llc_stamp == NULL or self.l1_dirty == NULL
                or self.l2_dirty == NULL or self.llc_dirty == NULL):
            raise MemoryError()
        for i in range(n1):
            self.l1_tag[i] = -1
        for i in range(n2):
            self.l2_tag[i] = -1
        for i in range(n3):
            self.llc_tag[i] = -1
        self.stamp = 0

    def __dealloc__(self):
        free(self.l1_tag); free(self.l2_tag); free(self.llc_tag)
        free(self.l1_stamp); free(self.l2_stamp); free(self.llc_stamp)
        free(self.l1_dirty); free(self.l2_dirty); free(self.llc_dirty)

    cdef inline int _probe(self, long long *tags, Py_ssize_t base, int ways,
                           long long block) nogil:
        cdef int w
        for w in range(ways):
            if tags[base + w] == block:
                return w
        return -1

    cdef inline int _victim_way(self, long long *tags, long long *stamps,
                                Py_ssize_t base, int ways) nogil:
        cdef int w, best = 0
        cdef long long best_stamp = -1
        for w in range(ways):
            if tags[base + w] == -1:
                return w
            if best_stamp == -1 or stamps[base + w] < best_stamp:
                best = w
                best_stamp = stamps[base + w]
        return best

    cdef void _llc_insert(self, long long block, char dirty) nogil:
        cdef Py_ssize_t base = (block % self.llc_sets) * self.llc_ways
        cdef int w = self._probe(self.llc_tag, base, self.llc_ways, block)
        cdef Py_ssize_t i
        if w >= 0:
            i = base + w
            self.llc_dirty[i] |= dirty
            self.stamp += 1
            self.llc_stamp[i] = self.stamp
            return
        w = self._victim_way(self.llc_tag, self.llc_stamp, base, self.llc_ways)
        i = base + w
        if self.llc_tag[i] != -1:
            self.llc_evictions += 1
            if self.llc_dirty[i]:
                self.llc_writebacks += 1
        self.llc_tag[i] = block
        self.llc_dirty[i] = dirty
        self.stamp += 1
        self.llc_stamp[i] = self.stamp
        self.llc_fills += 1

    cdef void _l2_insert(self, int core, long long block, char dirty) nogil:
        cdef Py_ssize_t base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
        cdef int w = self._probe(self.l2_tag, base, self.l2_ways, block)
        cdef Py_ssize_t i
        if w >= 0:
            i = base + w
            self.l2_dirty[i] |= dirty
            self.stamp += 1
            self.l2_stamp[i] = self.stamp
            return
        w = self._victim_way(self.l2_tag, self.l2_stamp, base, self.l2_ways)
        i = base + w
        if self.l2_tag[i] != -1:
            self.l2_evictions += 1
            if self.l2_dirty[i]:
                self.l2_writebacks += 1
            self._llc_insert(self.l2_tag[i], self.l2_dirty[i])
        self.l2_tag[i] = block
        self.l2_dirty[i] = dirty
        self.stamp += 1
        self.l2_stamp[i] = self.stamp
        self.l2_fills += 1

    cdef void _l1_insert(self, int core, long long block, char dirty) nogil:
        cdef Py_ssize_t base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
        cdef int w = self._probe(self.l1_tag, base, self.l1_ways, block)
        cdef Py_ssize_t i
        if w >= 0:
            i = base + w
            self.l1_dirty[i] |= dirty
            self.stamp += 1
            self.l1_stamp[i] = self.stamp
            return
        w = self._victim_way(self.l1_tag, self.l1_stamp, base, self.l1_ways)
        i = base + w
        if self.l1_tag[i] != -1:
            self.l1_evictions += 1
            if self.l1_dirty[i]:
                self.l1_writebacks += 1
                self._l2_insert(core, self.l1_tag[i], 1)
        self.l1_tag[i] = block
        self.l1_dirty[i] = dirty
        self.stamp += 1
        self.l1_stamp[i] = self.stamp
        self.l1_fills += 1

    def cpu_access(self, int core, long long block, bint is_write):
        """Returns (hit_level, l2_writeback_delta, llc_writeback_delta)."""
        cdef long long w2 = self.l2_writebacks
        cdef long long w3 = self.llc_writebacks
        cdef char wr = 1 if is_write else 0
        cdef Py_ssize_t base, i
        cdef int w
        cdef char carried

        base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
        w = self._probe(self.l1_tag, base, self.l1_ways, block)
        if w >= 0:
            i = base + w
            self.l1_dirty[i] |= wr
            self.stamp += 1
            self.l1_stamp[i] = self.stamp
            return LEVEL_L1, 0, 0

        base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
        w = self._probe(self.l2_tag, base, self.l2_ways, block)
        if w >= 0:
            self.stamp += 1
            self.l2_stamp[base + w] = self.stamp
            self._l1_insert(core, block, wr)
            return LEVEL_L2, self.l2_writebacks - w2, self.llc_writebacks - w3

        base = (block % self.llc_sets) * self.llc_ways
        w = self._probe(self.llc_tag, base, self.llc_ways, block)
        if w >= 0:
            i = base + w
            carried = self.llc_dirty[i]
            self.llc_dirty[i] = 0
            self.stamp += 1
            self.llc_stamp[i] = self.stamp
            self._l2_insert(core, block, carried)
            self._l1_insert(core, block, wr)
            return LEVEL_LLC, self.l2_writebacks - w2, self.llc_writebacks - w3

        self._l2_insert(core, block, 0)
        self._l1_insert(core, block, wr)
        return LEVEL_DRAM, self.l2_writebacks - w2, self.llc_writebacks - w3

    cdef void _invalidate_upper(self, long long block) nogil:
        cdef int core, w
        cdef Py_ssize_t base
        for core in range(self.ncores):
            base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
            w = self._probe(self.l1_tag, base, self.l1_ways, block)
            if w >= 0:
                self.l1_tag[base + w] = -1
                self.l1_dirty[base + w] = 0
                self.l1_invalidations += 1
            base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
            w = self._probe(self.l2_tag, base, self.l2_ways, block)
            if w >= 0:
                self.l2_tag[base + w] = -1
                self.l2_dirty[base + w] = 0
                self.l2_invalidations += 1

    def dma_write_range(self, long long block, int nblocks, bint dca):
        """DMA-write nblocks consecutive blocks; returns llc_writeback delta."""
        cdef long long w3 = self.llc_writebacks
        cdef long long b
        cdef Py_ssize_t base, i
        cdef int w
        for b in range(block, block + nblocks):
            self._invalidate_upper(b)
            base = (b % self.llc_sets) * self.llc_ways
            w = self._probe(self.llc_tag, base, self.llc_ways, b)
            if dca:
                if w >= 0:
                    i = base + w
                    self.llc_dirty[i] = 1
                    self.stamp += 1
                    self.llc_stamp[i] = self.stamp
                    continue
                w = self._victim_way(self.llc_tag, self.llc_stamp, base,
                                     self.dca_quota)
                i = base + w
                if self.llc_tag[i] != -1:
                    self.llc_evictions += 1
                    if self.llc_dirty[i]:
                        self.llc_writebacks += 1
                self.llc_tag[i] = b
                self.llc_dirty[i] = 1
                self.stamp += 1
                self.llc_stamp[i] = self.stamp
                self.llc_fills += 1
            else:
                if w >= 0:
                    self.llc_tag[base + w] = -1
                    self.llc_dirty[base + w] = 0
                    self.llc_invalidations += 1
        return self.llc_writebacks - w3

    def dma_read_range(self, long long block, int nblocks):
        """Returns how many of the blocks are resident in any cache level."""
        cdef int found = 0
        cdef long long b
        for b in range(block, block + nblocks):
            if self._find_any(b):
                found += 1
        return found

    cdef bint _find_any(self, long long block) nogil:
        cdef Py_ssize_t base = (block % self.llc_sets) * self.llc_ways
        cdef int core
        if self._probe(self.llc_tag, base, self.llc_ways, block) >= 0:
            return True
        for core in range(self.ncores):
            base = (core * self.l1_sets + block % self.l1_sets) * self.l1_ways
            if self._probe(self.l1_tag, base, self.l1_ways, block) >= 0:
                return True
            base = (core * self.l2_sets + block % self.l2_sets) * self.l2_ways
            if self._probe(self.l2_tag, base, self.l2_ways, block) >= 0:
                return True
        return False

    def llc_way_of(self, long long block):
        cdef Py_ssize_t base = (block % self.llc_sets) * self.llc_ways
        return self._probe(self.llc_tag, base, self.llc_ways, block)

    def resident(self, int level):
        cdef Py_ssize_t i, n
        cdef long long *tags
        cdef long long count = 0
        if level == LEVEL_L1:
            tags = self.l1_tag
            n = self.ncores * self.l1_sets * self.l1_ways
        elif level == LEVEL_L2:
            tags = self.l2_tag
            n = self.ncores * self.l2_sets * self.l2_ways
        else:
            tags = self.llc_tag
            n = self.llc_sets * self.llc_ways
        for i in range(n):
            if tags[i] != -1:
                count += 1
        return count
