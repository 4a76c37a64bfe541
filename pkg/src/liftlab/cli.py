"""Command-line front end.

    liftlab estimate-psi      --config run.json [--seed N] [--threads N] [--out PATH] [--key=value ...]
    liftlab verify-derivative --config run.json ...
    liftlab compare-endpoints --config run.json ...
    liftlab ground-state      --config run.json [--zero-external-field] [--csv PATH] ...
    liftlab gibbs-average     --config run.json ...

Every record is one JSON line carrying the master seed, a hash of the
resolved configuration and the package version. ``wall_ms`` is the only
timing field, so reruns are byte-identical once it is removed.

Exit codes: 0 success / PASS, 1 verification FAIL, 2 configuration error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, derivative, models
from .derivative import verify_derivative
from .errors import LiftLabError, NonfiniteInput
from .gibbs import ObservableKind, gibbs_average
from .ladder import psi
from .process import IndexedSets, load_sets
from .schedule import EstimatorConfig, validate_schedule

logger = logging.getLogger("liftlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("estimate-psi", "verify-derivative", "compare-endpoints", "ground-state", "gibbs-average")

# keys that never influence results and are left out of the config hash
_NON_RESULT_KEYS = ("threads", "out", "csv")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {p!r} is not an object")
    node[parts[-1]] = value


def _overrides(extra: list[str]) -> list[tuple[str, object]]:
    out = []
    for item in extra:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"unrecognized argument {item!r} (overrides take the form --key=value)")
        key, _, text = item[2:].partition("=")
        out.append((key.replace("-", "_") if "." not in key else key, _parse_value(text)))
    return out


def resolve_config(args, extra: list[str]) -> dict:
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        try:
            cfg = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    cfg = copy.deepcopy(cfg)
    for key, value in _overrides(extra):
        _set_dotted(cfg, key, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif "seed" not in cfg:
        env = os.environ.get("LIFTLAB_SEED")
        if env is not None:
            try:
                cfg["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"LIFTLAB_SEED must be a decimal integer, got {env!r}") from None
    cfg.setdefault("seed", 0)
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.out is not None:
        cfg["out"] = args.out
    if getattr(args, "zero_external_field", False):
        cfg["zero_external_field"] = True
    if getattr(args, "csv", None):
        cfg["csv"] = args.csv
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _NON_RESULT_KEYS}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config field {key!r}")
    return cfg[key]


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _float(cfg: dict, key: str, default=None) -> float:
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing config field {key!r}")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"field {key!r} must be a number, got {v!r}") from None


def _grid(cfg: dict, single: str, grid: str, default=None) -> list[float]:
    if grid in cfg:
        vals = _as_list(cfg[grid])
    elif single in cfg:
        vals = _as_list(cfg[single])
    elif default is not None:
        vals = list(default)
    else:
        raise ConfigError(f"missing config field {single!r} (or {grid!r})")
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"field {grid!r} must hold numbers") from None


def build_schedule(cfg: dict):
    sch = _require(cfg, "schedule")
    if not isinstance(sch, dict):
        raise ConfigError("field 'schedule' must be an object with p, q, m")
    r = sch.get("r")
    try:
        p, q, m = sch["p"], sch["q"], sch["m"]
    except KeyError as e:
        if r is None:
            raise ConfigError(f"schedule is missing {e.args[0]!r}") from None
        # defaults: p0 = q0 = 1, evenly spaced down to 0; m evenly spaced in (0, 1]
        r = int(r)
        p = sch.get("p", [1 - k / (r + 1) for k in range(r + 1)] + [0.0])
        q = sch.get("q", list(p))
        m = sch.get("m", [1.0] + [1 - k / (r + 1) for k in range(1, r + 1)] + [0.0])
    return validate_schedule(p, q, m, force=bool(sch.get("force", False)))


def build_sets(cfg: dict) -> IndexedSets:
    spec = _require(cfg, "sets")
    if isinstance(spec, str):
        spec = {"file": spec}
    if "file" in spec:
        path = Path(spec["file"])
        if not path.exists():
            raise ConfigError(f"sets file not found: {path}")
        return load_sets(path)
    gen = spec.get("generator", "unit_sphere")
    seed = int(spec.get("seed", 0))
    if gen == "unit_sphere":
        n = int(_require(spec, "n"))
        m_dim = int(spec.get("m_dim", n))
        l_x = int(spec.get("l_x", spec.get("l", 1)))
        l_y = int(spec.get("l_y", spec.get("l", 1)))
        return models.random_unit_sets(n, m_dim, l_x, l_y, seed)
    raise ConfigError(f"unknown sets generator {gen!r}")


def build_estimator(cfg: dict, schedule) -> EstimatorConfig:
    spl = _require(cfg, "samples_per_level")
    threads = cfg.get("threads")
    est = EstimatorConfig(
        samples_per_level=tuple(_as_list(spl)),
        fd_step=_float(cfg, "fd_step", 0.02),
        seed=int(cfg["seed"]),
        replica_streams_independent=bool(cfg.get("replica_streams_independent", True)),
        stream_salts=tuple(dict(cfg.get("stream_salts", {})).items()),
        threads=int(threads) if threads is not None else (os.cpu_count() or 1),
    )
    if schedule is not None:
        est.check_levels(schedule)
    return est


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Emitter:
    def __init__(self, command: str, cfg: dict):
        self.meta = {"command": command, "seed": int(cfg["seed"]), "config_hash": config_hash(cfg), "version": __version__}
        self.lines: list[str] = []

    def emit(self, record: dict, wall_ms: float | None = None) -> None:
        rec = dict(self.meta)
        rec.update(_clean(record))
        if wall_ms is not None:
            rec["wall_ms"] = round(wall_ms, 3)
        self.lines.append(json.dumps(rec, sort_keys=False))

    def write(self, out) -> None:
        text = "".join(line + "\n" for line in self.lines)
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()


@contextlib.contextmanager
def _test_hook(cfg: dict):
    hook = cfg.get("_test_hook")
    if hook not in (None, "flip_phi_sign"):
        raise ConfigError(f"unknown _test_hook {hook!r}")
    saved = derivative._FLIP_PHI_SIGN
    derivative._FLIP_PHI_SIGN = hook == "flip_phi_sign"
    try:
        yield
    finally:
        derivative._FLIP_PHI_SIGN = saved


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_estimate_psi(cfg: dict, em: Emitter) -> int:
    schedule = build_schedule(cfg)
    sets = build_sets(cfg)
    est = build_estimator(cfg, schedule)
    s = _float(cfg, "s", 1.0)
    for beta in _grid(cfg, "beta", "betas"):
        for t in _grid(cfg, "t", "t_grid"):
            start = time.perf_counter()
            e = psi(schedule, sets, beta, s, t, est)
            em.emit(
                {"t": t, "beta": beta, "s": s, "psi": e.value, "std_error": e.std_error, "n_outer": e.n_outer},
                (time.perf_counter() - start) * 1e3,
            )
    return EXIT_OK


def cmd_verify_derivative(cfg: dict, em: Emitter) -> int:
    schedule = build_schedule(cfg)
    sets = build_sets(cfg)
    est = build_estimator(cfg, schedule)
    ts = _grid(cfg, "t", "t_grid")
    bad = [t for t in ts if t <= 0.0 or t >= 1.0]
    if bad:
        raise ConfigError(f"verify-derivative needs t strictly inside (0, 1); got {bad}")
    status = EXIT_OK
    with _test_hook(cfg):
        for s in _grid(cfg, "s", "s_grid"):
            for beta in _grid(cfg, "beta", "betas"):
                for t in ts:
                    rep = verify_derivative(schedule, sets, beta, s, t, est)
                    d = rep.to_dict()
                    wall = d.pop("wall_ms")
                    d["status"] = "PASS" if rep.passed else "FAIL"
                    em.emit(d, wall)
                    if not rep.passed:
                        status = EXIT_FAIL
    return status


def cmd_compare_endpoints(cfg: dict, em: Emitter) -> int:
    schedule = build_schedule(cfg)
    sets = build_sets(cfg)
    est = build_estimator(cfg, schedule)
    s = _float(cfg, "s", 1.0)
    seed0 = est.seed
    seed1 = int(cfg.get("seed_t1", (seed0 + 1) % 2**64))
    for beta in _grid(cfg, "beta", "betas"):
        start = time.perf_counter()
        e0 = psi(schedule, sets, beta, s, 0.0, est)
        e1 = psi(schedule, sets, beta, s, 1.0, est.replace(seed=seed1))
        em.emit(
            {
                "beta": beta,
                "s": s,
                "psi_t0": e0.value,
                "psi_t0_std_error": e0.std_error,
                "psi_t1": e1.value,
                "psi_t1_std_error": e1.std_error,
                "difference": e1.value - e0.value,
                "combined_std_error": math.hypot(e0.std_error, e1.std_error),
                "seed_t0": seed0,
                "seed_t1": seed1,
                "n_outer": e0.n_outer,
            },
            (time.perf_counter() - start) * 1e3,
        )
    return EXIT_OK


_MODEL_S = {
    models.HOPFIELD_POS: 1.0,
    models.HOPFIELD_NEG: -1.0,
    models.LITTLE_POS: 1.0,
    models.LITTLE_NEG: -1.0,
    models.PERC_SPHERICAL: -1.0,
    models.PERC_BINARY: -1.0,
}


def _model_sets(kind: str, spec: dict) -> IndexedSets:
    n = int(_require(spec, "n"))
    m_dim = int(spec.get("m_dim", n))
    l_y = int(spec.get("l_y", 512))
    seed = int(spec.get("sets_seed", 0))
    if kind == models.PERC_SPHERICAL:
        X = models.sphere_set(n, int(spec.get("l_x", 64)), False, seed)
    else:
        X = models.hypercube_set(n)
    if kind in (models.LITTLE_POS, models.LITTLE_NEG):
        Y = models.hypercube_set(m_dim)
    else:
        positive = kind in (models.PERC_SPHERICAL, models.PERC_BINARY) or bool(spec.get("positive_orthant", False))
        Y = models.sphere_set(m_dim, l_y, positive, seed + 1)
    return IndexedSets.from_arrays(X, Y)


def cmd_ground_state(cfg: dict, em: Emitter) -> int:
    kind = cfg.get("model", models.HOPFIELD_POS)
    if kind not in models.MODEL_KINDS:
        raise ConfigError(f"unknown model {kind!r}; expected one of {list(models.MODEL_KINDS)}")
    spec = dict(cfg.get("sets", {})) if isinstance(cfg.get("sets"), dict) else {}
    for key in ("n", "m_dim", "l_x", "l_y", "sets_seed", "positive_orthant"):
        if key in cfg:
            spec[key] = cfg[key]
    if "file" in spec:
        sets = build_sets(cfg)
    else:
        sets = _model_sets(kind, spec)
    est = build_estimator(cfg, None)
    s = _float(cfg, "s", _MODEL_S[kind])
    zero_field = bool(cfg.get("zero_external_field", False))
    start = time.perf_counter()
    cont = None
    if cfg.get("continuous_oracle", True):
        Gs = models.sweep_gaussians(sets.n, sets.m_dim, est)
        cont = math.copysign(1.0, s) * models.oracle_mean(kind, Gs)
    table = models.beta_sweep_ground_state(
        sets, _grid(cfg, "beta", "betas"), s, est, zero_external_field=zero_field, model=kind, continuous_target=cont
    )
    wall = (time.perf_counter() - start) * 1e3
    for row in table.rows:
        em.emit(
            {
                "model": kind,
                "n": sets.n,
                "m_dim": sets.m_dim,
                "alpha": table.alpha,
                "beta": row.beta,
                "s": s,
                "estimate": row.estimate,
                "std_error": row.std_error,
                "target": row.target,
                "gap": row.gap,
                "envelope": row.envelope,
                "sandwich_ok": row.sandwich_ok,
                "continuous_target": cont,
                "heuristic": kind == models.PERC_SPHERICAL,
                "zero_external_field": zero_field,
                "n_samples": table.n_samples,
            }
        )
    em.emit({"summary": True, "gap_non_increasing": table.gap_non_increasing()}, wall)
    if cfg.get("csv"):
        Path(cfg["csv"]).write_text(table.to_csv())
    return EXIT_OK


def cmd_gibbs_average(cfg: dict, em: Emitter) -> int:
    schedule = build_schedule(cfg)
    sets = build_sets(cfg)
    est = build_estimator(cfg, schedule)
    s = _float(cfg, "s", 1.0)
    tag = cfg.get("observable", "BRACKET")
    k1 = cfg.get("k1")
    k1 = int(k1) if k1 is not None else None
    if tag in ("BRACKET", "ONE_PAIR"):
        if k1 is None or not 1 <= k1 <= schedule.r + 1:
            raise ConfigError(f"observable {tag} needs k1 in 1..{schedule.r + 1}")
        p_ref = cfg.get("p_ref", float(schedule.p_vec[k1 - 1]))
        q_ref = cfg.get("q_ref", float(schedule.q_vec[k1 - 1]))
    else:
        p_ref = cfg.get("p_ref", 1.0)
        q_ref = cfg.get("q_ref", float(schedule.q_vec[0]))
    kind = ObservableKind(tag, float(p_ref), float(q_ref))
    for beta in _grid(cfg, "beta", "betas"):
        for t in _grid(cfg, "t", "t_grid"):
            start = time.perf_counter()
            e = gibbs_average(kind, k1, schedule, sets, beta, s, t, est)
            em.emit(
                {
                    "observable": tag,
                    "k1": k1,
                    "p_ref": kind.p_ref,
                    "q_ref": kind.q_ref,
                    "t": t,
                    "beta": beta,
                    "s": s,
                    "value": e.value,
                    "std_error": e.std_error,
                    "n_outer": e.n_outer,
                },
                (time.perf_counter() - start) * 1e3,
            )
    return EXIT_OK


_HANDLERS = {
    "estimate-psi": cmd_estimate_psi,
    "verify-derivative": cmd_verify_derivative,
    "compare-endpoints": cmd_compare_endpoints,
    "ground-state": cmd_ground_state,
    "gibbs-average": cmd_gibbs_average,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liftlab", description=__doc__.split("\n\n")[0], allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, allow_abbrev=False)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="master seed (fallback: LIFTLAB_SEED)")
        sp.add_argument("--threads", type=int, help="worker threads (default: all cores)")
        sp.add_argument("--out", help="write JSON-lines records here instead of stdout")
        if name == "ground-state":
            sp.add_argument("--zero-external-field", action="store_true", help="drop the u4 field in the sweep")
            sp.add_argument("--csv", help="also write the sweep table as CSV")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="liftlab: %(message)s")
    args, extra = _parser().parse_known_args(argv)
    try:
        cfg = resolve_config(args, extra)
        em = Emitter(args.command, cfg)
        code = _HANDLERS[args.command](cfg, em)
        em.write(cfg.get("out"))
        return code
    except (ConfigError, OSError) as e:
        print(f"liftlab: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonfiniteInput, ArithmeticError) as e:
        print(f"liftlab: numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except LiftLabError as e:
        print(f"liftlab: configuration error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
