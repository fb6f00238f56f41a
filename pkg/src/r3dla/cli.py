"""Command line front ends: experiment configs, reports, comparisons.

Three console scripts live here:

  sim     run | compare | sweep | ablate    (timing experiments)
  skel    build                             (skeleton files)
  fetchq  analyze | harvest                 (fetch buffer model)

Configs are JSON; validation errors name the offending field path.  Exit
codes: 0 ok, 1 runtime error, 2 config error.  ``R3DLA_SEED`` overrides the
workload seed for quick reproduction runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

from . import __version__, uisa, skeleton, fetchq, engine
from .memsys import CacheConfig
from .engine import CoreParams, DlaParams, Features

FEATURE_NAMES = ("t1", "value_reuse", "fetch_buffer", "recycle")


class ConfigError(Exception):
    """Invalid configuration; message carries the field path."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _expect(d, path: str, cls=dict):
    if not isinstance(d, cls):
        _fail(path, f"expected {cls.__name__}, got {type(d).__name__}")
    return d


def _check_keys(d: dict, path: str, allowed) -> None:
    for k in d:
        if k not in allowed:
            _fail(f"{path}.{k}" if path else k, "unknown field")


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON: {e}") from None
    return validate_config(cfg)


TOP_KEYS = {"workload", "core", "cache", "engine", "dla", "features",
            "skeleton", "version", "limit", "max_cycles", "mode", "seed",
            "name"}


def validate_config(cfg: dict) -> dict:
    _expect(cfg, "<config>")
    _check_keys(cfg, "", TOP_KEYS)
    wl = _expect(cfg.get("workload"), "workload")
    if "program_file" in wl:
        if not os.path.exists(wl["program_file"]):
            _fail("workload.program_file", f"no such file {wl['program_file']!r}")
    else:
        kind = wl.get("kind")
        if kind not in uisa._GENERATORS:
            _fail("workload.kind",
                  f"unknown generator {kind!r}; one of {sorted(uisa._GENERATORS)}")
        _expect(wl.get("params", {}), "workload.params")
    for section, cls in (("core", CoreParams), ("dla", DlaParams),
                         ("features", Features)):
        if section in cfg:
            d = _expect(cfg[section], section)
            try:
                cls.from_dict(d)
            except TypeError as e:
                _fail(section, str(e))
    if "cache" in cfg:
        try:
            CacheConfig.from_dict(_expect(cfg["cache"], "cache"))
        except Exception as e:
            _fail("cache", str(e))
    eng = cfg.get("engine", "baseline")
    if eng not in ("baseline", "dla"):
        _fail("engine", f"expected 'baseline' or 'dla', got {eng!r}")
    limit = cfg.get("limit", 10_000_000)
    if not isinstance(limit, int) or limit <= 0:
        _fail("limit", "must be a positive integer")
    version = cfg.get("version", 0)
    if not isinstance(version, int) or not (0 <= version < 6):
        _fail("version", "must be an integer in 0..5")
    mode = cfg.get("mode", "normal")
    if mode not in ("normal", "ideal_fetch", "ideal_backend"):
        _fail("mode", f"unknown mode {mode!r}")
    if "skeleton" in cfg:
        sk = _expect(cfg["skeleton"], "skeleton")
        if "path" in sk and not os.path.exists(sk["path"]):
            _fail("skeleton.path", f"no such file {sk['path']!r}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def build_workload(cfg: dict) -> uisa.StaticProgram:
    wl = cfg["workload"]
    if "program_file" in wl:
        with open(wl["program_file"]) as f:
            return uisa.parse_program(f.read(), name=wl["program_file"])
    seed = cfg.get("seed", wl.get("seed", 0))
    env_seed = os.environ.get("R3DLA_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    return uisa.gen_workload(wl["kind"], wl.get("params"), seed=seed)


def run_config(cfg: dict) -> engine.RunStats:
    prog = build_workload(cfg)
    core = CoreParams.from_dict(cfg["core"]) if "core" in cfg else None
    cache = CacheConfig.from_dict(cfg["cache"]) if "cache" in cfg else None
    common = dict(params=core, cache_config=cache,
                  limit=cfg.get("limit", 10_000_000),
                  max_cycles=cfg.get("max_cycles", 200_000_000))
    if cfg.get("engine", "baseline") == "baseline":
        return engine.run_baseline(prog, mode=cfg.get("mode", "normal"), **common)
    sk_cfg = cfg.get("skeleton", {"auto": True})
    if "path" in sk_cfg:
        skel = skeleton.load_skeleton(sk_cfg["path"], prog)
    else:
        skel = skeleton.build(prog, cache_config=cache)
    prof = skeleton.profile(prog, cache_config=cache)
    bd = engine.bias_directions(skel, prof)
    feats = Features.from_dict(cfg["features"]) if "features" in cfg else None
    dla = DlaParams.from_dict(cfg["dla"]) if "dla" in cfg else None
    return engine.run_dla(prog, skel, dla=dla, features=feats,
                          version=cfg.get("version", 0), bias_dirs=bd, **common)


def make_report(cfg: dict, stats: engine.RunStats) -> dict:
    return {"tool_version": __version__, "config_hash": config_hash(cfg),
            "config": cfg, "stats": stats.to_dict()}


def _write_json(doc, path: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# sim subcommands

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    stats = run_config(cfg)
    _write_json(make_report(cfg, stats), args.out)
    return 0


def _summary_row(name: str, st: engine.RunStats) -> dict:
    return {"name": name, "cycles": st.cycles, "instructions": st.instructions,
            "ipc": round(st.ipc, 6),
            "mpki_l1": round(st.mem["L1.MT"]["mpki"], 4),
            "traffic_lines": st.mem["traffic_lines"],
            "mispredicts": st.mispredicts, "reboots": st.reboots}


def _write_csv(rows: list[dict], path: str | None) -> None:
    cols = list(rows[0].keys())
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
    finally:
        if path:
            out.close()


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least 2 configs")
    cfgs = [load_config(p) for p in args.configs]
    base_wl = json.dumps(cfgs[0]["workload"], sort_keys=True)
    for p, c in zip(args.configs[1:], cfgs[1:]):
        if json.dumps(c["workload"], sort_keys=True) != base_wl and not args.force:
            raise ConfigError(
                f"{p}: workload differs from {args.configs[0]} (use --force)")
    rows = []
    ref = None
    for path, cfg in zip(args.configs, cfgs):
        st = run_config(cfg)
        row = _summary_row(cfg.get("name", path), st)
        if ref is None:
            ref = row
        row["speedup_vs_first"] = round(ref["cycles"] / max(1, row["cycles"]), 4)
        row["traffic_vs_first"] = round(
            row["traffic_lines"] / max(1, ref["traffic_lines"]), 4)
        rows.append(row)
    _write_csv(rows, args.out)
    return 0


def _set_path(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = []
    for tok in args.values.split(","):
        try:
            values.append(json.loads(tok))
        except json.JSONDecodeError:
            values.append(tok)
    rows = []
    for v in values:
        c = json.loads(json.dumps(cfg))
        _set_path(c, args.param, v)
        c = validate_config(c)
        st = run_config(c)
        row = _summary_row(f"{args.param}={v}", st)
        rows.append(row)
    _write_csv(rows, args.out)
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    if cfg.get("engine") != "dla":
        raise ConfigError("engine: ablate needs a dla config")

    def run_with(feature_set: set[str]) -> int:
        c = json.loads(json.dumps(cfg))
        feats = dict(c.get("features", {}))
        for name in FEATURE_NAMES:
            on = name in feature_set
            feats[name] = ("dynamic" if on else "off") if name == "recycle" else on
        c["features"] = feats
        return run_config(c).cycles

    none_cycles = run_with(set())
    all_cycles = run_with(set(FEATURE_NAMES))
    rows = []
    for name in FEATURE_NAMES:
        alone = run_with({name})
        without = run_with(set(FEATURE_NAMES) - {name})
        rows.append({
            "feature": name,
            "speedup_first": round(none_cycles / max(1, alone), 4),
            "speedup_last": round(without / max(1, all_cycles), 4),
        })
    rows.append({"feature": "(all)",
                 "speedup_first": round(none_cycles / max(1, all_cycles), 4),
                 "speedup_last": round(none_cycles / max(1, all_cycles), 4)})
    _write_csv(rows, args.out)
    return 0


# ---------------------------------------------------------------------------
# skel / fetchq subcommands

def cmd_skel_build(args) -> int:
    cfg = load_config(args.config)
    prog = build_workload(cfg)
    cache = CacheConfig.from_dict(cfg["cache"]) if "cache" in cfg else None
    skel = skeleton.build(prog, cache_config=cache)
    skeleton.save_skeleton(skel, prog, args.out)
    total = len(prog.instrs)
    for m in skel.versions:
        print(f"v{m.version_id}: {len(m.bits)}/{total} static instrs, "
              f"{len(m.converted_branches)} converted branches")
    print(f"s_bits: {sorted(skel.s_bits)}")
    return 0


def _load_pair(path: str) -> tuple[fetchq.Distribution, fetchq.Distribution]:
    with open(path) as f:
        doc = json.load(f)
    return fetchq.harvest_distributions(doc)


def cmd_fetchq_analyze(args) -> int:
    demand, supply = _load_pair(args.pair)
    if args.sweep:
        lo, hi = (int(x) for x in args.sweep.split(":"))
        rows = [{"capacity": n, "expected_bubbles": round(b, 6)}
                for n, b, _ in fetchq.capacity_sweep(demand, supply,
                                                     range(lo, hi + 1))]
        _write_csv(rows, args.out)
        return 0
    model = fetchq.QueueModel.solve(demand, supply, args.capacity)
    doc = {"capacity": args.capacity,
           "demand": demand.to_map(), "supply": supply.to_map(),
           "steady_state": [round(float(q), 9) for q in model.q_ss],
           "expected_bubbles": model.bubbles()}
    _write_json(doc, args.out)
    return 0


def cmd_fetchq_harvest(args) -> int:
    cfg = load_config(args.config)
    if cfg.get("engine", "baseline") != "baseline":
        raise ConfigError("engine: harvest uses baseline runs")
    hists = {}
    for mode, key in (("ideal_fetch", "demand_hist"),
                      ("ideal_backend", "supply_hist")):
        c = json.loads(json.dumps(cfg))
        c["mode"] = mode
        st = run_config(c)
        hists[key] = getattr(st, key)
    _write_json(hists, args.out)
    return 0


# ---------------------------------------------------------------------------
# entry points

def _dispatch(parser: argparse.ArgumentParser, argv) -> int:
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def sim_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="sim", description="timing experiments")
    sub = p.add_subparsers(required=True)

    r = sub.add_parser("run", help="run one config, emit a JSON report")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="side-by-side CSV for several configs")
    c.add_argument("configs", nargs="+")
    c.add_argument("--out", default=None)
    c.add_argument("--force", action="store_true",
                   help="allow differing workloads")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="vary one config field")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help="dotted field path")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", help="per-feature first/last contributions")
    a.add_argument("--config", required=True)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_ablate)

    return _dispatch(p, argv)


def skel_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="skel", description="skeleton files")
    sub = p.add_subparsers(required=True)
    b = sub.add_parser("build", help="profile a workload and save its skeleton")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_skel_build)
    return _dispatch(p, argv)


def fetchq_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="fetchq", description="fetch buffer model")
    sub = p.add_subparsers(required=True)

    a = sub.add_parser("analyze", help="solve the queue model for a (D,S) pair")
    a.add_argument("--pair", required=True,
                   help="JSON file with demand_hist/supply_hist")
    a.add_argument("--capacity", type=int, default=32)
    a.add_argument("--sweep", default=None, help="LO:HI capacity sweep -> CSV")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_fetchq_analyze)

    h = sub.add_parser("harvest", help="measure demand/supply from a workload")
    h.add_argument("--config", required=True)
    h.add_argument("--out", default=None)
    h.set_defaults(func=cmd_fetchq_harvest)

    return _dispatch(p, argv)


if __name__ == "__main__":
    sys.exit(sim_main())
