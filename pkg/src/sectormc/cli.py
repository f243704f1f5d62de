"""Command-line entry point: ``sectormc build | run | oracle | fixtures-check``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import yaml

from . import __version__, oracle
from .codes import CssCode, GuardError, build_code, build_sector
from .dynamics import SamplerFailure
from .experiments import ConfigError, ExperimentConfig, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_SAMPLER = 0, 2, 3, 4
OUT_ENV = "SECTORMC_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


# ---------------------------------------------------------------- config files

def flatten(obj: dict, prefix: str = "") -> dict:
    """Nested mappings become dotted keys; already-dotted keys pass through."""
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in ("params",) and not key.startswith("params."):
            out.update(flatten(v, key + "."))
        elif isinstance(v, dict):
            out.update({f"{key}.{kk}": vv for kk, vv in v.items()})
        else:
            out[key] = v
    return out


def load_config(path: str, overrides: list[str] = ()) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    flat = flatten(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        flat[k.strip()] = yaml.safe_load(v)
    return ExperimentConfig.from_flat(flat)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_flat(), sort_keys=True, default_flow_style=None)


# ---------------------------------------------------------------- manifest

def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, cfg: ExperimentConfig, files: list[str], started: float, ended: float) -> str:
    manifest = {
        "config": cfg.to_flat(),
        "engine_version": __version__,
        "seed": cfg.seed,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "ended": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ended)),
        "files": {os.path.basename(p): sha256_file(p) for p in files},
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def verify_manifest(out_dir: str) -> bool:
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    return all(sha256_file(os.path.join(out_dir, name)) == digest for name, digest in manifest["files"].items())


# ---------------------------------------------------------------- commands

def _code_spec(args) -> dict:
    spec = {"code": args.code}
    for key in ("side", "width", "w", "sector"):
        val = getattr(args, key, None)
        if val is not None:
            spec[key] = val
    return spec


def cmd_build(args) -> int:
    try:
        code = build_code(_code_spec(args))
    except (KeyError, ValueError, TypeError) as exc:
        print(f"invalid code spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sectors = [("x", code.x_sector), ("z", code.z_sector)] if isinstance(code, CssCode) else [("", code)]
    if isinstance(code, CssCode):
        print(f"{args.code}: n={code.n} k={code.k}")
    for name, c in sectors:
        ell, d = c.measured_profile()
        line = f"n={c.n} m={c.m} t={c.t} rank={c.rank}"
        if not name:
            line += f" k={c.n - c.rank}"
        print((f"sector {name}: " if name else "") + line + f" ell={ell} d={d}")
        print("  radius width boundary/volume")
        for R, w, ratio in c.network.amenability_profile(args.radii, (1,)):
            print(f"  {R:6d} {w:5d} {ratio:.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.set or [])
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = args.out or cfg.output or os.environ.get(OUT_ENV, "runs")
    out_dir = os.path.join(root, f"{cfg.experiment}-seed{cfg.seed}") if not args.out else args.out
    threads = args.threads or os.cpu_count() or 1
    started = time.time()
    try:
        result = run_experiment(cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except SamplerFailure as exc:
        print(f"sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    files = result.write(out_dir)
    cfg_path = os.path.join(out_dir, "config.yaml")
    with open(cfg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_config(cfg))
    write_manifest(out_dir, cfg, files + [cfg_path], started, time.time())
    print(out_dir)
    return EXIT_OK


def _parse_partition(text: str, m: int) -> tuple[list[int], list[int], list[int]]:
    parts = text.split("|")
    if len(parts) != 3:
        raise ConfigError("partition must look like 'A|B|C' with comma-separated checks; one part may be 'rest'")
    sets: list[list[int] | None] = []
    for p in parts:
        p = p.strip()
        sets.append(None if p == "rest" else [int(x) for x in p.split(",") if x.strip()])
    used = {c for s in sets if s is not None for c in s}
    rest = [c for c in range(m) if c not in used]
    A, B, C = (rest if s is None else s for s in sets)
    return A, B, C


def cmd_oracle(args) -> int:
    try:
        code = build_sector(_code_spec(args))
    except (KeyError, ValueError, TypeError) as exc:
        print(f"invalid code spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.what == "gibbs":
            dist = oracle.exact_gibbs(code, args.beta)
            out = {"code": code.name, "beta": args.beta, "states": len(dist), "total": float(dist.probs.sum()),
                   "probabilities": {format(s, "x"): float(p) for s, p in zip(dist.states, dist.probs)}}
        elif args.what == "kernel":
            out = oracle.fixture(code, args.beta, args.chain, args.L, args.R, spec=_code_spec(args))
        elif args.what == "peierls":
            V = [int(x) for x in args.V.split(",") if x.strip()] if args.V else []
            lhs, rhs = oracle.peierls_check(code, args.beta, V)
            out = {"code": code.name, "beta": args.beta, "V": V, "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs}
        elif args.what == "markov":
            if not args.partition:
                raise ConfigError("markov needs --partition A|B|C")
            A, B, C = _parse_partition(args.partition, code.m)
            defect = oracle.markov_property_check(code, args.beta, A, B, C, not args.no_eras)
            out = {"code": code.name, "beta": args.beta, "A": A, "B": B, "C": C, "eras": not args.no_eras,
                   "defect": defect}
        else:
            raise ConfigError(f"unknown oracle query {args.what!r}")
    except GuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def check_fixtures(directory: str) -> list[str]:
    """Recompute every oracle kernel fixture in ``directory``; return mismatch messages."""
    bad = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(directory, name), encoding="utf-8") as fh:
            fx = json.load(fh)
        if "kernel_sha256" not in fx or "spec" not in fx:
            continue
        code = build_sector(fx["spec"])
        fresh = oracle.fixture(code, fx["beta"], fx["chain_kind"], fx["L"], fx["R"])
        if fresh["kernel_sha256"] != fx["kernel_sha256"]:
            bad.append(f"{name}: kernel digest changed")
        for k, p in fx["key_probabilities"].items():
            q = fresh["key_probabilities"].get(k)
            if q is None or abs(q - p) > 1e-12:
                bad.append(f"{name}: probability of {k} changed")
    return bad


def cmd_fixtures_check(args) -> int:
    bad = check_fixtures(args.dir)
    for msg in bad:
        print(msg, file=sys.stderr)
    if not bad:
        print("fixtures ok")
    return EXIT_OK if not bad else 1


def _add_code_args(p):
    p.add_argument("--code", required=True, choices=["ising1d", "ising2d", "toric4d"])
    p.add_argument("--side", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--sector", choices=["x", "z"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sectormc", description="Syndrome dynamics experiments")
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="construct a code and print its summary")
    _add_code_args(p)
    p.add_argument("--radii", type=int, nargs="+", default=[1, 2, 3])
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="exact computations on enumerable instances")
    p.add_argument("what", choices=["gibbs", "kernel", "peierls", "markov"])
    _add_code_args(p)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--chain", default="syndrome", choices=list(oracle.CHAIN_KINDS))
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--R", type=int)
    p.add_argument("--V", help="comma-separated checks for peierls")
    p.add_argument("--partition", help="'A|B|C' comma-separated check lists; one part may be 'rest'")
    p.add_argument("--no-eras", action="store_true", help="drop the erasability conditioning")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fixtures-check", help="recompute stored oracle fixtures")
    p.add_argument("--dir", default=os.path.join("tests", "fixtures"))
    p.set_defaults(func=cmd_fixtures_check)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
