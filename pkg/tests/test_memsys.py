"""Cache hierarchy tests: latencies, LRU, prefetch accounting, MSHR merging."""

import pytest

from r3dla.memsys import (MemorySystem, CacheConfig, LevelConfig, MemError,
                          MT, LT)


def small_config(**kw):
    base = dict(
        l1=LevelConfig(1024, 2, 64, 3),
        l2=LevelConfig(4096, 4, 64, 9),
        l3=LevelConfig(16384, 8, 64, 36),
        dram_latency=200,
        mshr=4,
    )
    base.update(kw)
    return CacheConfig(**base)


def test_cold_access_latency():
    mem = MemorySystem()
    res = mem.access(0x1000, "load", MT, 0)
    assert res.hit_level == "DRAM"
    assert res.latency == 3 + 9 + 36 + 200


def test_immediate_repeat_hits_l1():
    mem = MemorySystem()
    mem.access(0x1000, "load", MT, now=0)
    mem.drain(10_000)
    res = mem.access(0x1000, "load", MT, now=10_000)
    assert res.hit_level == "L1"
    assert res.latency == 3


def test_distinct_lines_count_traffic():
    mem = MemorySystem()
    for i in range(1000):
        mem.access(i * 64, "load", MT, now=i * 300)
    assert mem.l1[MT].misses == 1000
    assert mem.traffic_lines == 1000


def test_private_l1_per_thread():
    mem = MemorySystem()
    mem.access(0x1000, "load", MT, 0)
    mem.drain(1000)
    res = mem.access(0x1000, "load", LT, 1000)
    # LT missed its private L1/L2 but the shared L3 has the line
    assert res.hit_level == "L3"


def test_lru_eviction_in_set():
    cfg = small_config()
    mem = MemorySystem(cfg)
    n_sets = 1024 // (64 * 2)
    way = n_sets * 64
    # 3 lines into a 2-way set: first one gets evicted
    for k in range(3):
        mem.access(k * way, "load", MT, now=k * 1000)
    mem.drain(100_000)
    res = mem.access(0, "load", MT, now=100_000)
    assert res.hit_level != "L1"


def test_prefetch_then_demand_is_useful():
    mem = MemorySystem()
    mem.access(0x2000, "prefetch", MT, now=0)
    mem.drain(1000)
    res = mem.access(0x2000, "load", MT, now=1000)
    assert res.hit_level == "L1"
    assert res.was_prefetched
    assert mem.pf_stats.prefetch_useful == 1


def test_useless_prefetches():
    mem = MemorySystem()
    for i in range(10):
        mem.access(0x100000 + i * 64, "prefetch", MT, now=i)
    assert mem.pf_stats.prefetch_issued == 10
    assert mem.pf_stats.prefetch_useful == 0
    assert mem.traffic_lines == 10


def test_demand_merges_with_inflight_prefetch():
    mem = MemorySystem()
    mem.access(0x3000, "prefetch", MT, now=0)       # fill lands at 248
    res = mem.access(0x3000, "load", MT, now=100)
    assert res.merged
    assert res.latency == 248 - 100
    assert mem.pf_stats.prefetch_late == 1


def test_l1_hits_do_not_occupy_mshrs():
    mem = MemorySystem(small_config(mshr=2))
    mem.access(0x4000, "load", MT, now=0)
    mem.drain(10_000)
    for _ in range(10):
        mem.access(0x4000, "load", MT, now=10_000)
    assert len(mem.in_flight) == 0


def test_prefetch_dropped_when_mshrs_full():
    mem = MemorySystem(small_config(mshr=2))
    mem.access(0x5000, "prefetch", MT, now=0)
    mem.access(0x6000, "prefetch", MT, now=0)
    before = mem.traffic_lines
    res = mem.access(0x7000, "prefetch", MT, now=0)
    assert res.latency == 0
    assert mem.traffic_lines == before      # dropped: no fill happened
    assert mem.pf_stats.prefetch_issued == 2


def test_negative_address_rejected():
    with pytest.raises(MemError):
        MemorySystem().access(-64, "load", MT, 0)


def test_config_validation():
    with pytest.raises(MemError, match="line sizes"):
        CacheConfig(l1=LevelConfig(1024, 2, 32, 3))
    with pytest.raises(MemError, match="power-of-two"):
        CacheConfig(l1=LevelConfig(1024 + 64, 2, 64, 3))


def test_config_from_dict():
    cfg = CacheConfig.from_dict({"dram_latency": 123, "mshr": 7,
                                 "l1": {"size": 2048, "assoc": 2,
                                        "line": 64, "hit_latency": 2}})
    assert cfg.dram_latency == 123
    assert cfg.mshr == 7
    assert cfg.l1.hit_latency == 2


def test_stats_shape():
    mem = MemorySystem()
    mem.access(0, "load", MT, 0)
    st = mem.stats(instructions=1000)
    assert st["L1.MT"]["misses"] == 1
    assert st["L1.MT"]["mpki"] == 1.0
    assert "traffic_lines" in st
