"""``axialym run <config.json>`` and ``axialym inspect <path>``.

Exit codes: 0 every experiment passed, 1 some metric failed, 2 usage or
configuration error (including unreadable artefacts for ``inspect``).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .lab import ConfigError, ExperimentConfig, recompute_pass, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _schema(name: str) -> dict:
    return json.loads(resources.files("axialym").joinpath("schemas", name).read_text())


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def load_config(path: Path, seed: int | None = None) -> tuple[dict, list[ExperimentConfig], bytes]:
    """Read, validate and expand a run config. Raises ConfigError with a located message."""
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    try:
        jsonschema.validate(doc, _schema("config.schema.json"))
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}: schema violation at {loc}: {e.message}") from None
    base = int(doc.get("seed", 0)) if seed is None else int(seed)
    if not 0 <= base < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    cfgs = [ExperimentConfig.from_dict(e, seed=base) for e in doc["experiments"]]
    return doc, cfgs, raw


def cmd_run(config_path, seed=None, out=None, workers=None) -> int:
    path = Path(config_path)
    try:
        doc, cfgs, raw = load_config(path, seed)
    except ConfigError as e:
        _err(str(e))
        return EXIT_USAGE
    workers = int(doc.get("workers", 1) if workers is None else workers)
    if workers < 1:
        _err("--workers must be >= 1")
        return EXIT_USAGE
    out_dir = Path(out) if out else Path("runs") / path.stem
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool_version": __version__,
        "config_path": str(path.resolve()),
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "seed_base": cfgs[0].seed,
        "out_dir": str(out_dir.resolve()),
        "workers": workers,
        "started": _now(),
        "experiments": [],
    }
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    status = EXIT_OK
    for i, cfg in enumerate(cfgs):
        t0 = time.perf_counter()
        try:
            rep = run_experiment(cfg, workers=workers, out_dir=str(out_dir))
        except ConfigError as e:
            _err(f"experiment {i} ({cfg.experiment}): {e}")
            manifest["finished"] = _now()
            mpath.write_text(json.dumps(manifest, indent=2) + "\n")
            return EXIT_USAGE
        name = f"{i:02d}_{cfg.experiment}.json"
        (out_dir / name).write_text(rep.to_json())
        entry = {"report": name, "experiment": cfg.experiment, "config_hash": cfg.config_hash,
                 "pass": rep.passed, "runtime_s": round(time.perf_counter() - t0, 3)}
        manifest["experiments"].append(entry)
        mpath.write_text(json.dumps(manifest, indent=2) + "\n")
        flag = "PASS" if rep.passed else "FAIL"
        print(f"[{flag}] {cfg.experiment} -> {out_dir / name}")
        for m in rep.failing():
            print(f"  failing metric: {cfg.experiment}.{m}", file=sys.stderr)
        if not rep.passed:
            status = EXIT_FAIL
    manifest["finished"] = _now()
    mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    return status


# -- inspect -------------------------------------------------------------------------


def _inspect_json(path: Path) -> int:
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        _err(f"{path}: not valid JSON ({e})")
        return EXIT_USAGE
    if isinstance(doc, dict) and "metrics" in doc:
        try:
            jsonschema.validate(doc, _schema("report.schema.json"))
        except jsonschema.ValidationError as e:
            _err(f"{path}: report schema violation: {e.message}")
            return EXIT_USAGE
        print(f"report: {doc['experiment']}  config {doc['config_hash'][:12]}")
        print(f"{'metric':<40} {'estimate':>12} {'se':>10} {'lo':>10} {'hi':>10}  pass")
        consistent = True
        for m in doc["metrics"]:
            fmt = lambda v: "-" if v is None else f"{v:.4g}"  # noqa: E731
            print(f"{m['name']:<40} {fmt(m['estimate']):>12} {fmt(m.get('se')):>10} "
                  f"{fmt(m.get('lo')):>10} {fmt(m.get('hi')):>10}  {m['pass']}")
            consistent &= recompute_pass(m) == m["pass"]
        print(f"overall pass: {all(m['pass'] for m in doc['metrics'])}; flags recomputed consistently: {consistent}")
        return EXIT_OK if consistent else EXIT_USAGE
    if isinstance(doc, dict) and "tool_version" in doc:
        print(f"manifest: version {doc['tool_version']}, seed {doc.get('seed_base')}, "
              f"config sha256 {doc.get('config_sha256', '')[:12]}")
        for e in doc.get("experiments", []):
            print(f"  {e['report']:<32} pass={e['pass']}  {e['runtime_s']} s")
        return EXIT_OK
    _err(f"{path}: unrecognised JSON artefact")
    return EXIT_USAGE


def _inspect_field(path: Path) -> int:
    from .spectral import read_field

    try:
        f, grid = read_field(path)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        _err(f"{path}: {e}")
        return EXIT_USAGE
    f = f.reshape((-1, grid.N, grid.N))
    print(f"grid field: L={grid.L} N={grid.N} channels={f.shape[0]}")
    for k, ch in enumerate(f):
        l2 = float(np.sqrt(np.sum(ch**2)) * grid.h)
        print(f"  channel {k}: L2={l2:.6g} min={ch.min():.6g} max={ch.max():.6g}")
    return EXIT_OK


def _inspect_csv(path: Path) -> int:
    from .roughpath import Level2Path, chen_defect, sym_defect
    from .transport import TransportPath

    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
    except (OSError, StopIteration, UnicodeDecodeError) as e:
        _err(f"{path}: {e}")
        return EXIT_USAGE
    try:
        if len(header) > 1 and header[1].startswith("re_"):
            p = TransportPath.from_csv(path)
            print(f"transport path: n={p.U.shape[-1]} nodes={p.t.size} unitarity drift={p.unitarity_drift():.3e}")
            return EXIT_OK
        if len(header) > 1 and header[1].startswith("x_"):
            p = Level2Path.from_csv(path)
            chen, sym = chen_defect(p), sym_defect(p)
            ok = chen <= 1e-10 and sym <= 1e-10
            print(f"level-2 path: d={p.dim} nodes={p.n_nodes} chen defect={chen:.3e} "
                  f"symmetric-part defect={sym:.3e} consistent={ok}")
            return EXIT_OK
    except ValueError as e:
        _err(f"{path}: {e}")
        return EXIT_USAGE
    _err(f"{path}: unrecognised CSV header")
    return EXIT_USAGE


def cmd_inspect(artifact_path) -> int:
    path = Path(artifact_path)
    if not path.is_file():
        _err(f"{path}: no such file")
        return EXIT_USAGE
    if path.suffix == ".json":
        return _inspect_json(path)
    if path.suffix == ".csv":
        return _inspect_csv(path)
    if Path(str(path) + ".json").is_file():
        return _inspect_field(path)
    _err(f"{path}: unknown artefact format")
    return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axialym", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments named in a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the 64-bit base seed")
    r.add_argument("--out", help="output directory (default runs/<config stem>)")
    r.add_argument("--workers", type=int, help="worker processes for sample chunks")
    i = sub.add_parser("inspect", help="summarise a report, manifest, field or path file")
    i.add_argument("path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out, args.workers)
    return cmd_inspect(args.path)


if __name__ == "__main__":
    sys.exit(main())
