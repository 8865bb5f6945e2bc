import pytest

from kbsim.config import defaults
from kbsim.experiment import (run_search, run_sweep, run_sweep_point,
                              sweep_points)


def quick(**kw):
    cfg = defaults()
    cfg["loadgen.mode"] = "search"
    cfg["search.hold_window_ms"] = 1.0
    cfg["search.drain_grace_ms"] = 0.5
    cfg.update(kw)
    return cfg


def search_gbps(cfg):
    report, _ = run_search(cfg)
    return report["results"]["search"]["max_sustainable_gbps"]


def test_throughput_monotone_in_frequency():
    # kernel path is cycle-bound: bandwidth must not decrease with frequency
    results = [search_gbps(quick(**{"stack.kind": "kernel",
                                    "core.freq_ghz": f}))
               for f in (2.0, 2.5, 3.0)]
    assert results == sorted(results)
    assert results[-1] > results[0]


def test_throughput_monotone_in_per_packet_cost():
    # raising the kernel per-packet costs must not increase bandwidth
    results = []
    for scale in (1, 2, 4):
        cfg = quick(**{"stack.kind": "kernel"})
        cfg["kernel.softirq_per_packet"] *= scale
        cfg["kernel.socket_overhead_per_packet"] *= scale
        results.append(search_gbps(cfg))
    assert results == sorted(results, reverse=True)
    assert results[-1] < results[0]


def test_pmd_insensitive_to_process_cycles_when_nic_bound():
    base = search_gbps(quick())
    cheaper = quick()
    cheaper["pmd.per_packet_process"] = 70
    assert search_gbps(cheaper) == base


def test_sweep_nics_axis_rows_and_order(tmp_path):
    from kbsim.cli import main
    cfg_path = tmp_path / "s.cfg"
    cfg_path.write_text("search.hold_window_ms = 1.0\n"
                        "search.drain_grace_ms = 0.5\n")
    out = tmp_path / "out"
    assert main(["sweep", str(cfg_path), "--axis", "nics", "--nics", "1,2",
                 "--stacks", "pmd,kernel", "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "axis_point,max_sustainable_gbps"
    labels = [l.split(",")[0] for l in lines[1:]]
    assert labels == ["1xnic-pmd", "2xnic-pmd", "1xnic-kernel", "2xnic-kernel"]
    values = {l.split(",")[0]: float(l.split(",")[1]) for l in lines[1:]}
    # pmd beats kernel at every point; pmd non-decreasing in port count
    assert values["1xnic-pmd"] > values["1xnic-kernel"]
    assert values["2xnic-pmd"] > values["2xnic-kernel"]
    assert values["2xnic-pmd"] >= values["1xnic-pmd"]


def test_sweep_records_per_point_failures_and_continues(monkeypatch):
    import kbsim.experiment as exp
    real = exp.run_search

    def flaky(cfg):
        if cfg["topology.nic_count"] == 2:
            raise RuntimeError("boom")
        return real(cfg)

    monkeypatch.setattr(exp, "run_search", flaky)
    results = run_sweep(quick(), "nics", nics=(1, 2), stacks=("kernel",))
    by_label = {label: (gbps, err) for label, gbps, _, err in results}
    assert by_label["1xnic-kernel"][1] is None
    assert by_label["2xnic-kernel"][0] is None
    assert "boom" in by_label["2xnic-kernel"][1]


def test_knob_sweep_is_cumulative():
    pts = dict(sweep_points(defaults(), "knobs", stacks=("pmd",),
                            knobs=["3ghz", "dca"]))
    assert pts["2ghz-base-pmd"]["core.freq_ghz"] == 2.0
    assert pts["3ghz-pmd"]["core.freq_ghz"] == 3.0
    assert pts["3ghz-pmd"]["mem.dca_enabled"] is False
    assert pts["dca-pmd"]["core.freq_ghz"] == 3.0  # includes earlier knob
    assert pts["dca-pmd"]["mem.dca_enabled"] is True


def test_parallel_sweep_matches_serial():
    cfg = quick(**{"stack.kind": "kernel"})
    serial = run_sweep(cfg, "nics", nics=(1, 2), stacks=("kernel",), jobs=1)
    parallel = run_sweep(cfg, "nics", nics=(1, 2), stacks=("kernel",), jobs=2)
    assert [(l, g) for l, g, _, _ in serial] == [(l, g) for l, g, _, _ in parallel]


def test_backends_produce_identical_reports():
    # Backend choice is an import-time decision: compare via subprocesses.
    import os
    import subprocess
    import sys
    snippet = (
        "import re\n"
        "from kbsim.config import defaults\n"
        "from kbsim.experiment import run_static, report_to_json\n"
        "from kbsim.mem import CACHE_BACKEND\n"
        "cfg = defaults(); cfg['duration_ms'] = 0.3\n"
        "report, _ = run_static(cfg)\n"
        "report['generator']['cache_backend'] = 'X'\n"
        "text = report_to_json(report)\n"
        "text = re.sub(r'\"wall_clock_seconds\": [0-9.]+', '', text)\n"
        "import sys; sys.stdout.write(text)\n")
    outs = {}
    for backend in ("python", "cython"):
        env = dict(os.environ, KBSIM_CACHE_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", snippet],
                              capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        outs[backend] = proc.stdout
    assert outs["python"] == outs["cython"]
