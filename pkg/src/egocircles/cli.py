"""Command-line front end.

Exit status: 0 on success, 1 on a usage error, 2 when input data cannot be
read or parsed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _backend
from .data import CircleAssignment, DataFormatError, EgoNetwork, ModelParams, load_ego_network, read_circles, write_ego_network
from .evaluate import ber, f1, match_circles
from .extensions import NewNode, SeedSet, UnknownSeedNode, fit_seeded, predict_memberships
from .features import SCHEMES, EdgeFeatureCache
from .mcmc import AnnealSchedule, NonBinaryFeatures, fit_mcmc
from .synth import PlantedSpec, generate
from .trainer import AUTO, FitConfig, fit

log = logging.getLogger("egocircles")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
ENGINES = ("coordinate", "mcmc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    fit: FitConfig | None = None
    scheme: str = "phi1"
    engine: str = "coordinate"
    outputs: dict = field(default_factory=dict)
    verbosity: int = 0

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise UsageError(f"unknown engine {self.engine!r}")
        if self.engine == "mcmc" and self.fit is not None and self.fit.k == AUTO:
            raise UsageError("--engine mcmc needs an explicit --k (BIC selection is not run for the sampler)")


# ---------------------------------------------------------------------------
# output helpers


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: str | None) -> None:
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _json_clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def fit_output_schema() -> dict:
    return json.loads(resources.files("egocircles").joinpath("schemas/fit_output.schema.json").read_text())


def validate_fit_output(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, fit_output_schema())


PLOT_COLUMNS = ("dataset", "scheme", "metric", "value", "stderr")


def emit_plot_data(results, aggregate: bool = False, label: str = "all") -> list[dict]:
    """Long-format rows ``(dataset, scheme, metric, value, stderr)``.

    ``results`` holds dicts with ``dataset``, ``scheme``, ``metric`` and
    ``value``.  With ``aggregate`` the rows are collapsed over datasets into
    a mean and its standard error.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to emit")
    if not aggregate:
        return [{"dataset": r["dataset"], "scheme": r["scheme"], "metric": r["metric"],
                 "value": float(r["value"]), "stderr": r.get("stderr", float("nan"))} for r in results]
    groups: dict = {}
    for r in results:
        groups.setdefault((r["scheme"], r["metric"]), []).append(float(r["value"]))
    rows = []
    for (scheme, metric), vals in groups.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
        rows.append({"dataset": label, "scheme": scheme, "metric": metric, "value": float(v.mean()), "stderr": se})
    return rows


def plot_rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=PLOT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _threads() -> int:
    raw = os.environ.get("CIRCLES_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CIRCLES_THREADS must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def _parse_k(text: str):
    if text == AUTO:
        return AUTO
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k must be an integer or {AUTO!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("--k must be at least 1")
    return k


def _fit_config(args) -> FitConfig:
    return FitConfig(k=args.k, lam=args.lam, max_outer_iters=args.max_iters, seed=args.seed, k_max=args.k_max)


def _fit_one(job):
    directory, ego, directed, scheme, engine, config, schedule = job
    network, profiles, _ = load_ego_network(directory, ego, directed=directed)
    features = EdgeFeatureCache(network, profiles, scheme, dense=engine != "mcmc")
    if engine == "mcmc":
        result = fit_mcmc(network, features, config, schedule)
    else:
        result = fit(network, features, config)
    doc = _json_clean(result.to_json())
    doc.update(features=scheme, engine=engine, ego=ego)
    validate_fit_output(doc)
    return ego, doc


def cmd_fit(args) -> int:
    config = _fit_config(args)
    run = RunConfig("fit", {"dir": args.dir, "ego": args.ego}, config, args.features, args.engine,
                    {"out": args.out}, args.verbose)
    schedule = AnnealSchedule(args.t0, args.decay, args.sweeps)
    jobs = [(args.dir, _ego_id(e), args.directed, run.scheme, run.engine, config, schedule) for e in args.ego]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    for ego, doc in results:
        text = json.dumps(doc, indent=2) + "\n"
        if len(results) == 1:
            _emit(text, args.out)
        elif args.out:
            write_atomic(os.path.join(args.out, f"{ego}.json"), text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def _ego_id(text):
    try:
        return int(text)
    except ValueError:
        return text


def _load_prediction(path) -> CircleAssignment:
    with open(path, encoding="utf-8") as fh:
        if path.endswith(".json"):
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataFormatError(path, exc.lineno, exc.msg) from None
            circles = doc["circles"] if isinstance(doc, dict) else doc
            return CircleAssignment([set(c) for c in circles])
    return read_circles(path)


def cmd_eval(args) -> int:
    pred = _load_prediction(args.pred)
    truth = read_circles(args.truth)
    match = match_circles(pred, truth, metric=args.metric, strict=args.strict)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted", "truth", "ber", "f1"])
    bers, f1s = [], []
    for p, t in sorted(match.mapping.items()):
        b, f = ber(pred.circles[p], truth.circles[t]), f1(pred.circles[p], truth.circles[t])
        bers.append(b)
        f1s.append(f)
        w.writerow([p, truth.names[t] if truth.names else t, f"{b:.6f}", f"{f:.6f}"])
    if bers:
        w.writerow(["mean", "", f"{np.mean(bers):.6f}", f"{np.mean(f1s):.6f}"])
    w.writerow(["matched_score", args.metric, "", ""] if not bers else ["matched_score", args.metric, f"{match.score:.6f}", ""])
    _emit(buf.getvalue(), args.out)
    if args.plot_data:
        rows = [{"dataset": args.dataset, "scheme": args.scheme, "metric": "1-ber", "value": 1 - float(np.mean(bers)) if bers else 0.5},
                {"dataset": args.dataset, "scheme": args.scheme, "metric": "f1", "value": float(np.mean(f1s)) if f1s else 0.0}]
        write_atomic(args.plot_data, plot_rows_to_csv(emit_plot_data(rows)))
    return EXIT_OK


def _read_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(path, exc.lineno, exc.msg) from None
    try:
        validate_fit_output(doc)
    except Exception as exc:
        raise DataFormatError(path, None, f"not a fit output: {exc}") from None
    theta = np.asarray(doc["theta"], dtype=float).reshape(len(doc["theta"]), -1)
    return doc, ModelParams(theta, np.asarray(doc["alpha"], dtype=float))


def read_new_node(path, directed: bool = False) -> NewNode:
    """First line ``nodeId b1 ... bL``; every further line ``src dst`` names one edge of the new node."""
    with open(path, encoding="utf-8") as fh:
        lines = [(i, ln.split()) for i, ln in enumerate(fh, 1) if ln.strip()]
    if not lines:
        raise DataFormatError(path, None, "empty new-node file")
    lineno, head = lines[0]
    node = _ego_id(head[0])
    try:
        bits = np.asarray([int(t) for t in head[1:]], dtype=np.int8)
    except ValueError:
        raise DataFormatError(path, lineno, "feature values must be integers") from None
    out_n, in_n = [], []
    for lineno, toks in lines[1:]:
        if len(toks) != 2:
            raise DataFormatError(path, lineno, "expected 'src dst'")
        x, y = _ego_id(toks[0]), _ego_id(toks[1])
        if x == node and y != node:
            out_n.append(y)
        elif y == node and x != node:
            (in_n if directed else out_n).append(x)
        else:
            raise DataFormatError(path, lineno, f"edge does not join the new node {node!r} to another node")
    return NewNode(node, bits, tuple(out_n), tuple(in_n))


def cmd_maintain(args) -> int:
    doc, params = _read_model(args.model)
    network, profiles, _ = load_ego_network(args.dir, _ego_id(args.ego), directed=args.directed)
    scheme = doc.get("features", args.features)
    features = EdgeFeatureCache(network, profiles, scheme)
    circles = CircleAssignment([set(c) for c in doc["circles"]])
    try:
        circles.validate(network)
    except ValueError as exc:
        raise DataFormatError(args.model, None, str(exc)) from None
    node = read_new_node(args.new_node, args.directed)
    if node.profile.size != profiles.n_leaves:
        raise DataFormatError(args.new_node, 1, f"{node.profile.size} features, expected {profiles.n_leaves}")
    try:
        bits = predict_memberships(node, features, circles, params)
    except KeyError as exc:
        raise DataFormatError(args.new_node, None, str(exc)) from None
    out = {"node": node.id, "memberships": [int(b) for b in bits],
           "circles": [i for i, b in enumerate(bits) if b]}
    _emit(json.dumps(_json_clean(out), indent=2) + "\n", args.out)
    return EXIT_OK


def _read_seeds(path) -> SeedSet:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(path, exc.lineno, exc.msg) from None
    if not isinstance(doc, dict) or not all(isinstance(v, list) for v in doc.values()):
        raise DataFormatError(path, None, "seeds must be a JSON object mapping circle names to node-id lists")
    return SeedSet.from_mapping(doc)


def cmd_seed(args) -> int:
    seeds = _read_seeds(args.seeds)
    network, profiles, _ = load_ego_network(args.dir, _ego_id(args.ego), directed=args.directed)
    features = EdgeFeatureCache(network, profiles, args.features)
    config = FitConfig(k=seeds.k, lam=args.lam, max_outer_iters=args.max_iters, seed=args.seed)
    try:
        result = fit_seeded(network, features, seeds, config)
    except UnknownSeedNode as exc:
        raise DataFormatError(args.seeds, None, str(exc.args[0])) from None
    doc = _json_clean(result.to_json(drop_empty=False))
    doc.update(features=args.features, engine="coordinate", ego=_ego_id(args.ego))
    validate_fit_output(doc)
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _read_spec(path) -> PlantedSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(path, exc.lineno, exc.msg) from None
    try:
        return PlantedSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(path, None, str(exc)) from None


def cmd_synth(args) -> int:
    spec = _read_spec(args.spec)
    network, profiles, circles, params = generate(spec)
    write_ego_network(args.out_dir, args.ego, network, profiles, circles)
    truth = {"theta": params.thetas.tolist(), "alpha": params.alphas.tolist(), "spec": spec.to_dict()}
    write_atomic(os.path.join(args.out_dir, f"{args.ego}.params.json"), json.dumps(truth, indent=2) + "\n")
    return EXIT_OK


def _bench_instance(n, k, seed, n_groups=8):
    """Planted graph with at most ``n_groups`` distinct feature codes."""
    spec = PlantedSpec(n=n, k=k, overlap_structure="mixed", separation=4.0, seed=seed,
                       feature_dim=max(2 * k, 2), mean_circle_size=22.0)
    network, profiles, circles, _ = generate(spec)
    rng = np.random.default_rng(seed)
    L = profiles.n_leaves
    palette = rng.integers(0, 2, size=(n_groups, L)).astype(np.int8)
    feats = {v: palette[rng.integers(n_groups)] for v in network.nodes}
    from .data import ProfileStore

    return network, ProfileStore(profiles.feat_names, feats, profiles.ego_features), circles


def sweep_timing(n, k, sweeps, seed, kernels_module=None):
    """Seconds per annealed sweep on a planted graph of ``n`` nodes."""
    from . import mcmc

    network, profiles, _ = _bench_instance(n, k, seed)
    features = EdgeFeatureCache(network, profiles, "phi1", dense=False)
    rng = np.random.default_rng(seed)
    state = mcmc.MCMCState(network, features, ModelParams.initial(k, features.dimension, rng))
    saved = mcmc.kernels
    if kernels_module is not None:
        mcmc.kernels = kernels_module
    try:
        start = time.perf_counter()
        for s in range(sweeps):
            mcmc.mcmc_sweep(state, 1.0, rng)
        return (time.perf_counter() - start) / max(sweeps, 1)
    finally:
        mcmc.kernels = saved


def cmd_bench(args) -> int:
    from . import _kernels_py

    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError:
        raise UsageError("--sizes must be a comma-separated list of integers") from None
    backends = [("python", _kernels_py)]
    if _backend.NAME == "compiled":
        backends.insert(0, ("compiled", _backend.kernels))
    if args.backend != "both":
        backends = [b for b in backends if b[0] == args.backend]
        if not backends:
            raise UsageError(f"backend {args.backend!r} is not available")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["engine", "backend", "n", "k", "seconds_per_sweep"])
    for n in sizes:
        for name, mod in backends:
            sec = sweep_timing(n, args.k, args.sweeps, args.seed, mod)
            w.writerow([args.engine, name, n, args.k, f"{sec:.6f}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def seed_sweep(network, profiles, truth: CircleAssignment, seeds_per_circle, k_target, repeats, config, scheme="phi1"):
    """Score seeded fits for several seed counts against one fixed set of target circles.

    The same ``k_target`` truth circles are drawn once per repeat and reused for
    every seed count, and predictions are matched against exactly those circles.
    """
    features = EdgeFeatureCache(network, profiles, scheme)
    rng = np.random.default_rng(config.seed)
    candidates = [i for i, c in enumerate(truth.circles) if c]
    if len(candidates) < k_target:
        raise ValueError(f"only {len(candidates)} non-empty circles for {k_target} targets")
    scores = {s: [] for s in seeds_per_circle}
    for r in range(repeats):
        targets = sorted(rng.choice(candidates, size=k_target, replace=False).tolist())
        target_circles = [truth.circles[t] for t in targets]
        order = [rng.permutation(sorted(c, key=str)).tolist() for c in target_circles]
        # one fit seed per repeat, so runs with different seed counts are paired
        cfg = FitConfig(k=k_target, lam=config.lam, max_outer_iters=config.max_outer_iters,
                        seed=int(rng.integers(2**31)))
        for s in seeds_per_circle:
            seeds = SeedSet(tuple(tuple(o[:s]) for o in order))
            result = fit_seeded(network, features, seeds, cfg)
            scores[s].append(match_circles(result.circles, target_circles).score)
    return scores


def cmd_seed_sweep(args) -> int:
    try:
        counts = [int(s) for s in args.seeds_per_circle.split(",") if s]
    except ValueError:
        raise UsageError("--seeds-per-circle must be a comma-separated list of integers") from None
    if args.spec:
        network, profiles, truth, _ = generate(_read_spec(args.spec))
        dataset = os.path.basename(args.spec)
    else:
        if not args.dir or args.ego is None:
            raise UsageError("seed-sweep needs --spec or both --dir and --ego")
        network, profiles, truth = load_ego_network(args.dir, _ego_id(args.ego), directed=args.directed)
        if truth is None:
            raise DataFormatError(os.path.join(args.dir, f"{args.ego}.circles"), None, "ground-truth circles are required")
        dataset = str(args.ego)
    config = FitConfig(k=args.k, lam=args.lam, max_outer_iters=args.max_iters, seed=args.seed)
    try:
        scores = seed_sweep(network, profiles, truth, counts, args.k, args.repeats, config, args.features)
    except ValueError as exc:
        raise DataFormatError(args.spec or args.dir, None, str(exc)) from None
    rows = []
    for s, vals in scores.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
        rows.append({"dataset": dataset, "scheme": args.features, "metric": f"1-ber@seeds={s}",
                     "value": float(v.mean()), "stderr": se})
    _emit(plot_rows_to_csv(emit_plot_data(rows)), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_fit_flags(p, k_default=AUTO):
    p.add_argument("--features", choices=SCHEMES, default="phi1")
    p.add_argument("--k", type=_parse_k, default=k_default)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--directed", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egocircles", description="Discover social circles in ego-networks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="learn circles for one or more ego-networks")
    p.add_argument("--dir", required=True)
    p.add_argument("--ego", required=True, nargs="+")
    _add_fit_flags(p)
    p.add_argument("--engine", choices=ENGINES, default="coordinate")
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--decay", type=float, default=0.95)
    p.add_argument("--out", help="output file (one ego) or directory (several)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score predicted circles against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metric", choices=("ber", "f1"), default="ber")
    p.add_argument("--strict", action="store_true", help="unmatched circles count as random guesses")
    p.add_argument("--out")
    p.add_argument("--plot-data", help="also write long-format plot rows to this CSV")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--scheme", default="phi1")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("maintain", help="assign a newly added friend to existing circles")
    p.add_argument("--model", required=True)
    p.add_argument("--new-node", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--ego", required=True)
    p.add_argument("--features", choices=SCHEMES, default="phi1")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_maintain)

    p = sub.add_parser("seed", help="fit circles constrained to contain seed nodes")
    p.add_argument("--seeds", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--ego", required=True)
    _add_fit_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("synth", help="write a planted ego-network")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ego", default="0")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time annealed sweeps for several network sizes")
    p.add_argument("--engine", choices=("mcmc",), default="mcmc")
    p.add_argument("--sizes", default="500,1000,2500,5000")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("both", "compiled", "python"), default="both")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("seed-sweep", help="recovery as a function of seeds per circle")
    p.add_argument("--spec")
    p.add_argument("--dir")
    p.add_argument("--ego")
    _add_fit_flags(p, k_default=2)
    p.add_argument("--seeds-per-circle", default="0,1,2,3,5")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_seed_sweep)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        if getattr(args, "k", None) == AUTO and getattr(args, "engine", None) == "mcmc":
            raise UsageError("--engine mcmc needs an explicit --k (BIC selection is not run for the sampler)")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError, NonBinaryFeatures) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
