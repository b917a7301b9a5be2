"""Command-line entry point: ``qsphere <subcommand> [--config FILE] [--set section.key=value]``.

Each subcommand writes ``<out>/<subcommand>.json`` (deterministic, sorted
keys) and ``<out>/<subcommand>.meta.json`` (timing, argv, versions).  Exit
status is 0 on success, 1 when a check fails and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, kernels
from .dirac import (
    BUILTINS,
    EquivariantDirac,
    commutator_bound_check,
    commutator_norms,
    counting_sequence,
    dump_spectrum,
    from_expression,
    from_table,
    optimality_check,
    spectral_dimension_estimate,
)
from .errors import SignPatternError, VerificationError
from .extension import (
    ModuleSpaceModel,
    Monomial,
    ev1_pullback_check,
    reconstruct_elementary,
    residual_series,
)
from .growth_graph import (
    classify_sign_pattern,
    graph_from_report,
    khomology_class,
    lemma_path,
    path_length_closed_form,
    random_lemma_pair,
)
from .index_pairing import pairing
from .lattice import Truncation
from .qoperators import covariance_residual, dump_operator, generators, random_phases, relation_residuals

log = logging.getLogger("qsphere")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULTS: dict[str, dict[str, Any]] = {
    "experiment": {"ell": 1, "q": 0.5, "n_max": 8, "m_max": 8, "interior_margin": 1, "seed": 0},
    "dirac": {"name": "torus", "table": "", "expression": "", "fallback": ""},
    "thresholds": {
        "norm_tol": 1e-10,
        "sphere_tol": 1e-12,
        "covariance_tol": 1e-12,
        "trend_threshold": 1e-3,
        "slope_tol": 0.1,
        "decay_max": 0.55,
    },
    "relations": {"n_phases": 20},
    "growth_graph": {"n_pairs": 100, "pair_bound": 4},
    "spectral": {"n_lo": 0, "n_hi": 0},
    "extension": {"words": ["z{top}"], "n_max": 10, "f_max": 1},
    "reconstruct": {"max_index": 2, "max_shift": 2},
    "ev1": {"f_max": 2},
    "output": {"dir": "reports", "dump_operators": False, "dump_spectrum": False},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Merged configuration: defaults, then the TOML file, then ``--set`` overrides."""

    data: dict[str, dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.data[section]

    @property
    def ell(self) -> int:
        return self.data["experiment"]["ell"]

    @property
    def q(self) -> float:
        return self.data["experiment"]["q"]

    def trunc(self) -> Truncation:
        e = self.data["experiment"]
        return Truncation(e["ell"], e["n_max"], e["m_max"], e["interior_margin"])

    def merge(self, other: dict[str, Any], origin: str) -> None:
        for section, values in other.items():
            if section not in self.data:
                raise ConfigError(f"{origin}: unknown section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"{origin}: [{section}] must be a table")
            for key, value in values.items():
                if key not in self.data[section]:
                    raise ConfigError(f"{origin}: unknown key {section}.{key}")
                self.data[section][key] = _coerce(self.data[section][key], value, f"{section}.{key}")

    def validate(self) -> None:
        e = self.data["experiment"]
        if not isinstance(e["ell"], int) or e["ell"] < 1:
            raise ConfigError("experiment.ell must be a positive integer")
        if not 0.0 < float(e["q"]) < 1.0:
            raise ConfigError("experiment.q must lie strictly between 0 and 1")
        if e["n_max"] < 1 or e["m_max"] < 1:
            raise ConfigError("window bounds must be >= 1")
        if not 0 <= e["interior_margin"] <= min(e["n_max"], e["m_max"]):
            raise ConfigError("experiment.interior_margin out of range")
        d = self.data["dirac"]
        if not (d["table"] or d["expression"]) and d["name"] not in BUILTINS:
            raise ConfigError(f"dirac.name must be one of {sorted(BUILTINS)}")
        for key, val in self.data["thresholds"].items():
            if val <= 0:
                raise ConfigError(f"thresholds.{key} must be positive")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _coerce(default: Any, value: Any, name: str) -> Any:
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                return [w.strip() for w in value.split(",") if w.strip()]
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot use {value!r}") from None
    return str(value)


def _parse_override(text: str) -> dict[str, dict[str, Any]]:
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    section, key = path.split(".", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return {section.strip(): {key.strip(): value}}


def load_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        try:
            with open(path, "rb") as fh:
                cfg.merge(tomllib.load(fh), path)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for text in overrides:
        cfg.merge(_parse_override(text), "--set")
    cfg.validate()
    return cfg


def make_dirac(cfg: ExperimentConfig) -> EquivariantDirac:
    d = cfg["dirac"]
    try:
        if d["table"]:
            return from_table(cfg.ell, d["table"], d["fallback"] or None)
        if d["expression"]:
            return from_expression(cfg.ell, d["expression"])
    except (OSError, ValueError, SyntaxError) as exc:
        raise ConfigError(f"dirac: {exc}") from None
    return BUILTINS[d["name"]](cfg.ell)


# ---- subcommands -------------------------------------------------------------------
# each returns (report, passed)


def run_verify_relations(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    th = cfg["thresholds"]
    gens = generators(cfg.q, cfg.trunc())
    rel = relation_residuals(gens)
    rng = np.random.default_rng(cfg["experiment"]["seed"])
    cov = [covariance_residual(gens, random_phases(rng, cfg.ell + 1)) for _ in range(cfg["relations"]["n_phases"])]
    ok = rel.passed(th["norm_tol"], th["sphere_tol"]) and max(cov) <= th["covariance_tol"]
    if cfg["output"]["dump_operators"]:
        for k in range(1, cfg.ell + 2):
            with open(out / f"z{k}.coo", "w") as fh:
                dump_operator(gens[k], fh)
    return {"relations": rel.to_dict(), "covariance_max": max(cov), "n_phases": len(cov)}, ok


def run_check_dirac(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    dirac = make_dirac(cfg)
    trunc = cfg.trunc()
    rep = commutator_bound_check(dirac, cfg.q, trunc, cfg["thresholds"]["trend_threshold"])
    body = {"boundedness": rep.to_dict()}
    if rep.verdict == "bounded":
        body["norms"] = commutator_norms(dirac, generators(cfg.q, trunc), cfg["thresholds"]["norm_tol"])
    body["optimality"] = optimality_check(dirac, trunc, cfg["thresholds"]["trend_threshold"]).to_dict()
    if cfg["output"]["dump_spectrum"]:
        with open(out / "spectrum.csv", "w") as fh:
            dump_spectrum(dirac, trunc, fh)
    return body, rep.verdict == "bounded"


def run_growth_graph(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    dirac = make_dirac(cfg)
    trunc = cfg.trunc()
    rep = commutator_bound_check(dirac, cfg.q, trunc, cfg["thresholds"]["trend_threshold"])
    if rep.verdict != "bounded":
        return {"boundedness": rep.to_dict(), "error": "commutators not bounded"}, False
    graph = graph_from_report(dirac, rep, trunc)
    rng = np.random.default_rng(cfg["experiment"]["seed"])
    failures = []
    n = cfg["growth_graph"]["n_pairs"]
    for _ in range(n):
        a, b, k = random_lemma_pair(rng, cfg.ell, cfg["growth_graph"]["pair_bound"])
        path = lemma_path(a, b, k)
        try:
            graph.check_path(a, path)
            if len(path) != path_length_closed_form(a, b, k) or (path and path[-1] != b):
                raise VerificationError("length or endpoint mismatch")
        except VerificationError as exc:
            failures.append({"start": list(a), "end": list(b), "k": k, "reason": str(exc)})
    edges = {str(k): int(graph.directional_edges(k).sum()) for k in range(1, cfg.ell + 2)}
    return {"c": graph.c, "directional_edges": edges, "pairs_checked": n, "failures": failures}, not failures


def run_classify_sign(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    dirac = make_dirac(cfg)
    try:
        pat = classify_sign_pattern(dirac, cfg.trunc())
    except SignPatternError as exc:
        return {"error": str(exc), "reason": exc.reason, "search_bound": exc.search_bound}, False
    return {"pattern": pat.to_dict(), "khomology_class": khomology_class(pat)}, True


def run_index_pairing(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    rep = pairing(make_dirac(cfg), cfg.q, cfg.trunc())
    return rep.to_dict(), True


def run_spectral_dimension(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    dirac = make_dirac(cfg)
    sp_cfg = cfg["spectral"]
    lo, hi = sp_cfg["n_lo"], sp_cfg["n_hi"]
    if not lo or not hi:
        lo, hi = {1: (10, 50), 2: (40, 80)}.get(cfg.ell, (10, 30))
    slope = spectral_dimension_estimate(dirac, (lo, hi))
    ns = list(range(lo, hi + 1))
    counts = counting_sequence(dirac, ns).tolist()
    ok = abs(slope - (cfg.ell + 1)) <= cfg["thresholds"]["slope_tol"]
    return {"n_range": [lo, hi], "slope": slope, "expected": cfg.ell + 1, "counts": counts}, ok


def run_extension_lift(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    ext = cfg["extension"]
    model = ModuleSpaceModel(cfg.ell, ext["n_max"], ext["f_max"])
    series, ok = [], True
    for text in ext["words"]:
        word = Monomial.parse(text.replace("{top}", str(cfg.ell + 1)), cfg.ell)
        s = residual_series(word, cfg.q, model)
        series.append(s.to_dict())
        if word.uses_only(range(1, cfg.ell + 1)):
            ok &= s.exact_zero
        else:
            ok &= s.monotone and s.decay is not None and s.decay <= cfg["thresholds"]["decay_max"]
    return {"series": series}, bool(ok)


def run_reconstruct_ideal(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    rc = cfg["reconstruct"]
    top, shift = rc["max_index"], rc["max_shift"]
    trunc = Truncation(cfg.ell, max(top, 1) + 2, shift + 2)
    rows, failures = [], []
    rng = range(top + 1)
    for i in itertools.product(rng, repeat=cfg.ell):
        for j in itertools.product(rng, repeat=cfg.ell):
            for k in range(-shift, shift + 1):
                try:
                    _, r = reconstruct_elementary(i, j, k, cfg.q, trunc, cfg["thresholds"]["norm_tol"])
                    rows.append(r.to_dict())
                except VerificationError as exc:
                    failures.append({"i": list(i), "j": list(j), "k": k, "reason": str(exc)})
    worst = max((r["max_abs_error"] for r in rows), default=0.0)
    return {"cases": len(rows) + len(failures), "max_abs_error": worst, "failures": failures, "words": rows}, not failures


def run_ev1_check(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    rep = ev1_pullback_check(cfg.q, cfg.trunc(), cfg["ev1"]["f_max"])
    return rep.to_dict(), rep.passed


COMMANDS: dict[str, Callable[[ExperimentConfig, Path], tuple[dict, bool]]] = {
    "verify-relations": run_verify_relations,
    "check-dirac": run_check_dirac,
    "growth-graph": run_growth_graph,
    "classify-sign": run_classify_sign,
    "index-pairing": run_index_pairing,
    "spectral-dimension": run_spectral_dimension,
    "extension-lift": run_extension_lift,
    "reconstruct-ideal": run_reconstruct_ideal,
    "ev1-check": run_ev1_check,
}


def write_report(out: Path, name: str, body: dict, passed: bool, cfg: ExperimentConfig) -> Path:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "passed": passed,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output"},
        "report": body,
    }
    path = out / f"{name}.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_meta(out: Path, name: str, elapsed: float, argv: list[str]) -> None:
    meta = {
        "command": name,
        "argv": argv,
        "elapsed_s": elapsed,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / f"{name}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsphere", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=[*COMMANDS, "all"])
    p.add_argument("--config", "-c", help="TOML experiment file")
    p.add_argument("--set", "-s", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--ell", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--dirac", help="builtin name (torus, neg_torus, abs_torus)")
    p.add_argument("--table", help="CSV spectrum g1,...,d")
    p.add_argument("--out", "-o", help="report directory")
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def _shortcut_overrides(args: argparse.Namespace) -> list[str]:
    pairs = [
        ("experiment.ell", args.ell),
        ("experiment.q", args.q),
        ("experiment.n_max", args.n_max),
        ("experiment.m_max", args.m_max),
        ("dirac.name", None if args.dirac is None else json.dumps(args.dirac)),
        ("dirac.table", None if args.table is None else json.dumps(args.table)),
        ("output.dir", None if args.out is None else json.dumps(args.out)),
    ]
    return [f"{k}={v}" for k, v in pairs if v is not None]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.set + _shortcut_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    names = list(COMMANDS) if args.command == "all" else [args.command]
    status = EXIT_OK
    for name in names:
        t0 = time.perf_counter()
        try:
            body, passed = COMMANDS[name](cfg, out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (VerificationError, ValueError) as exc:
            body, passed = {"error": f"{type(exc).__name__}: {exc}"}, False
        write_report(out, name, body, passed, cfg)
        write_meta(out, name, time.perf_counter() - t0, argv)
        print(f"{name}: {'ok' if passed else 'FAILED'}")
        log.info("%s", json.dumps(body, sort_keys=True, default=_jsonable)[:400])
        if not passed:
            status = EXIT_FAIL
    return status


if __name__ == "__main__":
    raise SystemExit(main())
