"""Experiment runner: YAML config in, CSV trajectory out.

Config layout (every section except ``problem`` and ``topology`` may be
omitted; omitted hyperparameters are filled from the step-size defaults)::

    problem:
      kind: synthetic        # synthetic | auc | quadratic
      n_samples: 1250        # synthetic
      n_features: 20
      pos_frac: 0.1
      separation: 2.5
      test_frac: 0.2         # synthetic, auc
      reg: 0.001             # synthetic, auc
    topology: {kind: erdos_renyi, workers: 10, edge_prob: 0.5}
    estimator: dsgda         # dsgda | storm | spider
    hyper: {gamma1: ..., gamma2: ..., eta: 0.9, s0: ..., s1: ..., rho1: ...,
            beta: ..., q: ..., T: 500, epsilon: 0.01, step_scale: 1.0, strict: false}
    seeds: {data: 0, topology: 0, run: 0}
    output: run.csv
    metrics: {stationarity: false, potential: false, log_every: 1}

``auc`` problems take ``path`` (LIBSVM), optional ``test_path``,
``n_features`` and ``scale`` (max-abs). ``quadratic`` problems take
``n_per_worker``, ``dim_x``, ``dim_y``, ``mu``, ``curvature``,
``coupling`` and ``spread``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import yaml

from .dataio import (
    Dataset,
    count_samples,
    max_abs_scale,
    parse_libsvm,
    partition,
    split,
    synthetic_imbalanced,
)
from .errors import ConfigError, DSGDAError, SchemaError
from .estimators import ESTIMATOR_KINDS, Schedule, make_estimator
from .metrics import CSV_COLUMNS
from .optimizer import HyperParams, run, theorem_defaults
from .problems import AUCProblem, QuadraticSaddle
from .topology import MixingMatrix, build_graph, dump_edge_list, metropolis_weights

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "apply_defaults",
    "dump_config",
    "build_experiment",
    "run_experiment",
    "compare",
    "main",
]

PROBLEM_KEYS = {
    "synthetic": {"n_samples", "n_features", "pos_frac", "separation", "test_frac", "reg"},
    "auc": {"path", "test_path", "n_features", "scale", "test_frac", "reg"},
    "quadratic": {"n_per_worker", "dim_x", "dim_y", "mu", "curvature", "coupling", "spread"},
}
TOPOLOGY_KINDS = ("erdos_renyi", "line", "ring", "complete")


@dataclass
class ProblemConfig:
    kind: str
    path: str | None = None
    test_path: str | None = None
    n_features: int | None = None
    scale: bool = False
    test_frac: float = 0.2
    reg: float = 0.001
    n_samples: int | None = None
    pos_frac: float = 0.1
    separation: float = 2.5
    n_per_worker: int | None = None
    dim_x: int = 4
    dim_y: int = 4
    mu: float = 1.0
    curvature: list[float] = field(default_factory=lambda: [0.5, 1.5])
    coupling: float = 0.3
    spread: float = 0.2


@dataclass
class TopologyConfig:
    kind: str = "erdos_renyi"
    workers: int = 10
    edge_prob: float = 0.5


@dataclass
class HyperConfig:
    gamma1: float | None = None
    gamma2: float | None = None
    eta: float | None = None
    s0: int | None = None
    s1: int | None = None
    rho1: float | None = None
    beta: float | None = None
    q: int | None = None
    T: int = 500
    epsilon: float = 0.01
    step_scale: float = 1.0
    strict: bool = False


@dataclass
class SeedConfig:
    data: int = 0
    topology: int = 0
    run: int = 0


@dataclass
class MetricsConfig:
    stationarity: bool = False
    potential: bool = False
    log_every: int = 1


@dataclass
class RunConfig:
    problem: ProblemConfig
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    estimator: str = "dsgda"
    hyper: HyperConfig = field(default_factory=HyperConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output: str = "run.csv"
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    base_dir: str = field(default=".", repr=False, compare=False)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        allowed = PROBLEM_KEYS.get(self.problem.kind, set()) | {"kind"}
        out["problem"] = {k: v for k, v in out["problem"].items() if k in allowed}
        return out


def _section(cls, raw, path: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names or key == "base_dir":
            raise ConfigError(f"{path}.{key}", "unknown key")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    """Build a RunConfig from a nested mapping, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    top = {f.name for f in dataclasses.fields(RunConfig)} - {"base_dir"}
    for key in raw:
        if key not in top:
            raise ConfigError(key, "unknown key")
    if "problem" not in raw:
        raise ConfigError("problem", "missing problem section")
    prob = raw["problem"]
    if not isinstance(prob, dict) or "kind" not in prob:
        raise ConfigError("problem.kind", "missing problem kind")
    if prob["kind"] not in PROBLEM_KEYS:
        raise ConfigError("problem.kind", f"expected one of {sorted(PROBLEM_KEYS)}, got {prob['kind']!r}")
    for key in prob:
        if key != "kind" and key not in PROBLEM_KEYS[prob["kind"]]:
            raise ConfigError(f"problem.{key}", f"not valid for {prob['kind']} problems")
    return RunConfig(
        problem=_section(ProblemConfig, prob, "problem"),
        topology=_section(TopologyConfig, raw.get("topology"), "topology"),
        estimator=raw.get("estimator", "dsgda"),
        hyper=_section(HyperConfig, raw.get("hyper"), "hyper"),
        seeds=_section(SeedConfig, raw.get("seeds"), "seeds"),
        output=str(raw.get("output", "run.csv")),
        metrics=_section(MetricsConfig, raw.get("metrics"), "metrics"),
        base_dir=str(base_dir),
    )


def _resolve_path(cfg: RunConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def _validate(cfg: RunConfig) -> None:
    p, t, h = cfg.problem, cfg.topology, cfg.hyper
    if cfg.estimator not in ESTIMATOR_KINDS:
        raise ConfigError("estimator", f"expected one of {ESTIMATOR_KINDS}, got {cfg.estimator!r}")
    if t.kind not in TOPOLOGY_KINDS:
        raise ConfigError("topology.kind", f"expected one of {TOPOLOGY_KINDS}, got {t.kind!r}")
    if t.workers < 1 or (t.workers < 2 and t.kind != "complete"):
        raise ConfigError("topology.workers", f"invalid worker count {t.workers}")
    if not 0 < t.edge_prob <= 1:
        raise ConfigError("topology.edge_prob", "must lie in (0, 1]")
    if p.kind in ("synthetic", "auc"):
        if not 0 < p.test_frac < 1:
            raise ConfigError("problem.test_frac", "must lie in (0, 1)")
        if p.reg < 0:
            raise ConfigError("problem.reg", "must be >= 0")
    if p.kind == "synthetic":
        if p.n_samples is None or p.n_samples < 2:
            raise ConfigError("problem.n_samples", "required, >= 2")
        if not 0 < p.pos_frac < 1:
            raise ConfigError("problem.pos_frac", "must lie in (0, 1)")
        if p.n_features is None or p.n_features < 1:
            raise ConfigError("problem.n_features", "required, >= 1")
    elif p.kind == "auc":
        if not p.path:
            raise ConfigError("problem.path", "required for auc problems")
        for key in ("path", "test_path"):
            val = getattr(p, key)
            if val and not _resolve_path(cfg, val).is_file():
                raise ConfigError(f"problem.{key}", f"file not found: {val}")
    elif p.kind == "quadratic":
        if p.n_per_worker is None or p.n_per_worker < 1:
            raise ConfigError("problem.n_per_worker", "required, >= 1")
        if p.mu <= 0:
            raise ConfigError("problem.mu", "must be positive")
        if min(p.dim_x, p.dim_y) < 1:
            raise ConfigError("problem.dim_x", "dimensions must be positive")
    for key in ("gamma1", "gamma2"):
        val = getattr(h, key)
        if val is not None and not (math.isfinite(val) and val > 0):
            raise ConfigError(f"hyper.{key}", f"must be finite and positive, got {val}")
    if h.eta is not None and not 0 < h.eta <= 1:
        raise ConfigError("hyper.eta", f"must lie in (0, 1], got {h.eta}")
    for key in ("rho1", "beta"):
        val = getattr(h, key)
        if val is not None and not 0 <= val <= 1:
            raise ConfigError(f"hyper.{key}", f"must lie in [0, 1], got {val}")
    for key in ("s0", "s1", "q"):
        val = getattr(h, key)
        if val is not None and val < 1:
            raise ConfigError(f"hyper.{key}", f"must be >= 1, got {val}")
    if h.T < 1:
        raise ConfigError("hyper.T", "must be >= 1")
    if h.epsilon <= 0 or h.step_scale <= 0:
        raise ConfigError("hyper.epsilon", "epsilon and step_scale must be positive")
    if cfg.metrics.log_every < 1:
        raise ConfigError("metrics.log_every", "must be >= 1")


def _samples_per_worker(cfg: RunConfig) -> int:
    p, K = cfg.problem, cfg.topology.workers
    if p.kind == "quadratic":
        return p.n_per_worker
    if p.kind == "synthetic":
        N = p.n_samples - int(np.floor(p.n_samples * p.test_frac))
    elif p.test_path:
        N = count_samples(_resolve_path(cfg, p.path))
    else:
        total = count_samples(_resolve_path(cfg, p.path))
        N = total - int(np.floor(total * p.test_frac))
    if N < K:
        raise ConfigError("topology.workers", f"{N} training samples cannot fill {K} workers")
    return N // K


def build_mixing(cfg: RunConfig) -> MixingMatrix:
    t = cfg.topology
    if t.workers == 1:
        return MixingMatrix(np.ones((1, 1)))
    return metropolis_weights(build_graph(t.kind, t.workers, t.edge_prob, cfg.seeds.topology))


def _pad(ds: Dataset, d: int) -> Dataset:
    X = sp.csr_matrix(ds.features)
    return Dataset(sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], d)), ds.labels)


def build_problem(cfg: RunConfig):
    """Return ``(problem, test_set)``; ``test_set`` is None for quadratic problems."""
    p, K, seed = cfg.problem, cfg.topology.workers, cfg.seeds.data
    # independent streams so generation, splitting and dealing never share draws
    gen_seed, split_seed, part_seed = np.random.SeedSequence(seed).spawn(3)
    if p.kind == "quadratic":
        prob = QuadraticSaddle.random(
            K, p.n_per_worker, p.dim_x, p.dim_y, p.mu, seed, tuple(p.curvature), p.coupling, p.spread
        )
        return prob, None
    if p.kind == "synthetic":
        ds = synthetic_imbalanced(p.n_samples, p.n_features, p.pos_frac, p.separation, gen_seed)
        train, test = split(ds, p.test_frac, split_seed)
    else:
        train = parse_libsvm(_resolve_path(cfg, p.path), p.n_features)
        if p.test_path:
            test = parse_libsvm(_resolve_path(cfg, p.test_path), p.n_features)
            d = max(train.d, test.d)
            train, test = _pad(train, d), _pad(test, d)
        else:
            train, test = split(train, p.test_frac, split_seed)
    if p.kind == "auc" and p.scale:
        train, test = max_abs_scale(train, test)
    part = partition(train, K, part_seed)
    return AUCProblem.from_dataset(train, part, reg=p.reg), test


def apply_defaults(cfg: RunConfig) -> RunConfig:
    """Fill omitted hyperparameters; already-set fields are left alone."""
    _validate(cfg)
    h = cfg.hyper
    n = _samples_per_worker(cfg)
    lam = build_mixing(cfg).lam
    root = math.ceil(math.sqrt(n))
    if h.strict:
        c = build_problem(cfg)[0].constants()
        base = theorem_defaults(n, c.L, c.mu, lam, h.T, strict=True)
        g1, g2, eta = base.gamma1, base.gamma2, base.eta
    else:
        g1 = g2 = (1 - lam) ** 2
        eta = 0.9
    kind = cfg.estimator
    if kind == "storm":
        g1, g2 = g1 * h.epsilon, g2 * h.epsilon
        s0 = s1 = min(64, n)
    else:
        s0 = s1 = root
    new = dataclasses.replace(
        h,
        gamma1=h.gamma1 if h.gamma1 is not None else g1 * h.step_scale,
        gamma2=h.gamma2 if h.gamma2 is not None else g2 * h.step_scale,
        eta=h.eta if h.eta is not None else eta,
        s0=h.s0 if h.s0 is not None else s0,
        s1=h.s1 if h.s1 is not None else s1,
        beta=h.beta if h.beta is not None else h.epsilon * min(1.0, n * h.epsilon),
        q=h.q if h.q is not None else root,
    )
    new.rho1 = h.rho1 if h.rho1 is not None else new.s1 / (2 * n)
    for key in ("s0", "s1"):
        if getattr(new, key) > n:
            raise ConfigError(f"hyper.{key}", f"batch size {getattr(new, key)} exceeds n={n}")
    out = dataclasses.replace(cfg, hyper=new)
    _validate(out)
    return out


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return apply_defaults(parse_config(raw, base_dir=path.parent))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def build_experiment(cfg: RunConfig):
    """Materialize ``(problem, mixing, hyper, estimator, test_set)`` from a defaulted config."""
    h = cfg.hyper
    problem, test_set = build_problem(cfg)
    mixing = build_mixing(cfg)
    hyper = HyperParams(h.gamma1, h.gamma2, h.eta, Schedule(h.s0, h.s1, h.rho1), h.T)
    est = make_estimator(cfg.estimator, problem.n, s0=h.s0, s1=h.s1, rho1=h.rho1, beta=h.beta, q=h.q)
    return problem, mixing, hyper, est, test_set


def write_csv(records, path: str | Path, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow(rec.as_row(columns))


def run_experiment(cfg: RunConfig, out=None) -> int:
    """Run a defaulted config and write its CSV. Returns the exit status."""
    out = sys.stdout if out is None else out
    start = time.perf_counter()
    try:
        problem, mixing, hyper, est, test_set = build_experiment(cfg)
        m = cfg.metrics
        result = run(
            problem,
            mixing,
            hyper,
            est,
            seed=cfg.seeds.run,
            test_set=test_set,
            track_stationarity=m.stationarity,
            track_potential=m.potential,
            log_every=m.log_every,
        )
    except DSGDAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    columns = CSV_COLUMNS + (("stationarity",) if m.stationarity else ()) + (("potential",) if m.potential else ())
    output = _resolve_path(cfg, cfg.output)
    write_csv(result.records, output, columns)
    final = result.records[-1]
    auc = "nan" if final.test_auc is None else f"{final.test_auc:.6f}"
    print(
        f"{cfg.estimator}: rounds={hyper.T} final_auc={auc} grad_evals={final.grad_evals} "
        f"wall_time={time.perf_counter() - start:.2f}s csv={output}",
        file=out,
    )
    return 0


@dataclass(frozen=True)
class CompareRow:
    path: str
    round: int | None
    grad_evals: int | None

    @property
    def reached(self) -> bool:
        return self.round is not None


def compare(paths, target_auc: float) -> list[CompareRow]:
    """First round and gradient count at which each CSV reaches ``target_auc``."""
    rows = []
    header = None
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                cols = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: empty file") from None
            missing = {"t", "grad_evals", "test_auc"} - set(cols)
            if missing:
                raise SchemaError(f"{path}: missing columns {sorted(missing)}")
            if header is not None and cols != header:
                raise SchemaError(f"{path}: header {cols} differs from {header}")
            header = cols
            ti, gi, ai = cols.index("t"), cols.index("grad_evals"), cols.index("test_auc")
            hit = CompareRow(str(path), None, None)
            for line in reader:
                if float(line[ai]) >= target_auc:
                    hit = CompareRow(str(path), int(line[ti]), int(line[gi]))
                    break
            rows.append(hit)
    return rows


def format_compare(rows, target_auc: float) -> str:
    lines = [f"target_auc={target_auc}", "file,round,grad_evals"]
    for r in rows:
        if r.reached:
            lines.append(f"{r.path},{r.round},{r.grad_evals}")
        else:
            lines.append(f"{r.path},unreached,unreached")
    return "\n".join(lines) + "\n"


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, DSGDAError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.output:
        cfg = dataclasses.replace(cfg, output=str(Path(args.output).resolve()))
    return run_experiment(cfg)


def _cmd_compare(args) -> int:
    try:
        rows = compare(args.csv, args.target)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = format_compare(rows, args.target)
    sys.stdout.write(report)
    if args.out:
        Path(args.out).write_text(report)
    return 0


def _cmd_graph(args) -> int:
    try:
        g = build_graph(args.kind, args.workers, args.edge_prob, args.seed)
        m = metropolis_weights(g)
    except (DSGDAError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"kind={args.kind} K={g.node_count} edges={len(g.edges)} lambda={m.lam:.10f} gap={m.spectral_gap:.10f}")
    if args.dump:
        dump_edge_list(g, args.dump)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsgda", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a YAML config")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="override the config's CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="rounds/gradients needed to reach a target AUC")
    p_cmp.add_argument("csv", nargs="+")
    p_cmp.add_argument("--target", type=float, required=True)
    p_cmp.add_argument("--out", help="also write the table here")
    p_cmp.set_defaults(func=_cmd_compare)

    p_graph = sub.add_parser("graph", help="build a topology and report its spectral gap")
    p_graph.add_argument("--kind", choices=TOPOLOGY_KINDS, default="erdos_renyi")
    p_graph.add_argument("--workers", type=int, default=10)
    p_graph.add_argument("--edge-prob", type=float, default=0.5)
    p_graph.add_argument("--seed", type=int, default=0)
    p_graph.add_argument("--dump", help="write the edge list to this file")
    p_graph.set_defaults(func=_cmd_graph)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
