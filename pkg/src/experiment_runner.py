import csv
import json
import logging
import statistics
import time
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np
from rich.console import Console
from rich.table import Table

from .config import DECIMAL_PLACES
from .errors import ConfigError, DegenerateInputError, VerificationError
from .graph_core import (generate, load_edge_file, normalize, warn_if_degenerate, write_matrix_csv)
from .lmgc import WeightFn, init_params, injectivity_battery, injectivity_probe, independence_probe, multiset_battery
from .logger import ROOT_LOGGER, get_logger, setup_logging
from .metrics import RodNorm, TraceMetric, trace_metrics
from .models import Graph, MetricTrace, NormKind
from .mp_ops import sca_ratio_svd, sca_ratio_sym
from .mrs_split import (assign_relations, degree_ordering, feature_ordering, independence_report, is_dar,
                        ppr_ordering, random_ordering, root_nodes, split_aggregation)
from .optim import FitVariant, SyntheticVariant, TrainingTrace, train_fit_target, train_synthetic
from .pprgnn import PprgnnConfig, estimate_depth, forward, gradcheck
from .run_config import RunConfig, load_run_config
from .seeding import named_rng
from .spectral import FilterSpec, dump_filters, graph_spectrum, random_filter
from .step_factory import StepFactory


class ExperimentRunner:
    """Main experiment class: loads a run config, runs one command, writes artifacts"""

    def __init__(self, command: str, config_path: str | None = None, seed: int | None = None,
                 out_dir: str | None = None, quiet: bool = False):
        # Setup logging first
        setup_logging(console_level="WARNING" if quiet else None, run_name=command)
        self.logger = get_logger("experiment_runner")

        self.command = command
        self.config_path = config_path
        self.seed = seed
        self.out_dir = out_dir
        self.console = Console(quiet=quiet)
        self.artifacts: List[Path] = []
        self.summary_rows: List[List[str]] = []

        self.log_file_name = None
        for handler in logging.getLogger(ROOT_LOGGER).handlers:
            if isinstance(handler, logging.FileHandler):
                self.log_file_name = handler.baseFilename
                break

        self.commands: Dict[str, Callable[[RunConfig], Table]] = {
            "filters": self.cmd_filters,
            "decay": self.cmd_decay,
            "sca": self.cmd_sca,
            "split": self.cmd_split,
            "lmgc-probe": self.cmd_lmgc_probe,
            "pprgnn": self.cmd_pprgnn,
            "train-synthetic": self.cmd_train_synthetic,
            "fit-target": self.cmd_fit_target,
        }

    # Helpers

    def _load_graph(self, cfg: RunConfig, seed: int) -> Graph:
        spec = dict(cfg.get("graph") or {})
        if "file" in spec:
            return load_edge_file(cfg.resolve(spec["file"]), directed=bool(spec.get("directed", False)))
        kind = spec.pop("generator", None)
        if kind is None:
            raise ConfigError("graph needs either 'file' or 'generator'")
        if kind == "erdos_renyi":
            spec.setdefault("seed", seed)
        return generate(kind, **spec)

    def _artifact(self, cfg: RunConfig, name: str) -> Path:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        path = cfg.out_dir / name
        self.artifacts.append(path)
        return path

    def _write_json(self, cfg: RunConfig, name: str, payload: Any) -> Path:
        path = self._artifact(cfg, name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path

    def _calculate_stats(self, values: List[float]) -> dict:
        """Summary statistics of finite values"""
        finite = [v for v in values if np.isfinite(v)]
        if not finite:
            return {'count': 0, 'min': None, 'max': None, 'mean': None, 'median': None, 'std_dev': None}
        return {
            'count': len(finite),
            'min': min(finite),
            'max': max(finite),
            'mean': statistics.mean(finite),
            'median': statistics.median(finite),
            'std_dev': statistics.stdev(finite) if len(finite) > 1 else 0.0,
        }

    def _format_stat_value(self, value: float | None) -> str:
        if value is None:
            return "-"
        if value != 0 and (abs(value) < 10 ** -DECIMAL_PLACES or abs(value) >= 1e6):
            return f"{value:.{DECIMAL_PLACES}e}"
        return f"{value:.{DECIMAL_PLACES}f}"

    def _table(self, title: str, columns: List[str]) -> Table:
        table = Table(title=title)
        for idx, name in enumerate(columns):
            if idx == 0:
                table.add_column(name, style="cyan", no_wrap=True)
            else:
                table.add_column(name, justify="right", style="green")
        self.summary_rows = [columns]
        return table

    def _add_row(self, table: Table, *cells: Any) -> None:
        row = [str(c) for c in cells]
        table.add_row(*row)
        self.summary_rows.append(row)

    def _generate_text_summary(self, title: str) -> str:
        """Plain-text version of the summary table for the log file"""
        lines = ["=" * 80, title.upper(), "=" * 80]
        if self.summary_rows:
            widths = [max(len(r[i]) for r in self.summary_rows) for i in range(len(self.summary_rows[0]))]
            for row in self.summary_rows:
                lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        lines.append("=" * 80)
        return "\n".join(lines)

    def _log_to_file_only(self, message: str) -> None:
        """Log a message only to the file handler, not to console"""
        for handler in logging.getLogger(ROOT_LOGGER).handlers:
            if isinstance(handler, logging.FileHandler):
                record = logging.LogRecord(name=f"{ROOT_LOGGER}.experiment_runner", level=logging.INFO,
                                           pathname="", lineno=0, msg=message, args=(), exc_info=None)
                record.created = time.time()
                handler.emit(record)
                break

    # Commands

    def cmd_filters(self, cfg: RunConfig) -> Table:
        seed = cfg.seeds[0]
        g = self._load_graph(cfg, seed)
        warn_if_degenerate(g, "filter dump")
        spec = graph_spectrum(g, self_loops=bool(cfg["self_loops"]))
        specs = [FilterSpec.from_dict(f) for f in cfg["filters"]]
        rng = named_rng(seed, "filters")
        specs += [random_filter(g.n, rng) for _ in range(int(cfg["random_filters"]))]
        if not specs:
            raise ConfigError("no filters requested")
        path = self._artifact(cfg, "filters.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            rows = dump_filters(spec, specs, sink)
        self.logger.info(f"Wrote {rows} filter coefficient rows to {path}")

        table = self._table("Filter coefficients", ["filter_id", "kind", "max |F|", "at eigen_index"])
        with path.open(encoding="utf-8") as source:
            records = list(csv.DictReader(source))
        for filter_id, f in enumerate(specs):
            mags = [float(r["abs_coefficient"]) for r in records if int(r["filter_id"]) == filter_id]
            best = int(np.argmax(mags))
            self._add_row(table, filter_id, f.kind.value, self._format_stat_value(mags[best]), best + 1)
        return table

    def cmd_decay(self, cfg: RunConfig) -> Table:
        metrics = [TraceMetric(m) for m in cfg["metrics"]]
        rod_norm = RodNorm(cfg["rod_norm"])
        traces: Dict[str, Dict[int, MetricTrace]] = {}
        for seed in cfg.seeds:
            g = self._load_graph(cfg, seed)
            warn_if_degenerate(g, "decay traces")
            x0 = named_rng(seed, "decay/x0").standard_normal((g.n, int(cfg["features"])))
            for step in StepFactory.create_steps(g, cfg["steps"], int(cfg["features"]), seed,
                                                 skp_terms=int(cfg["skp_terms"])):
                try:
                    trace = trace_metrics(step, x0, int(cfg["iterations"]), metrics, g=g, rod_norm=rod_norm)
                except DegenerateInputError as e:
                    self.logger.warning(f"{step.name} seed {seed}: trace stopped on degenerate state ({e})")
                    continue
                traces.setdefault(step.name, {})[seed] = trace
                self.logger.debug(f"{step.name} seed {seed}: " +
                                  ", ".join(f"{m}={trace.last(m):.3e}" for m in trace.metrics()))

        path = self._artifact(cfg, "decay.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            writer = csv.writer(sink, lineterminator="\n")
            writer.writerow(["step", "seed", "iteration", "metric", "value"])
            for name, by_seed in traces.items():
                runs = [(str(seed), t) for seed, t in by_seed.items()]
                runs.append(("mean", MetricTrace.mean_over_seeds(by_seed.values())))
                for label, trace in runs:
                    for iteration, metric, value in trace.records:
                        writer.writerow([name, label, iteration, metric,
                                         repr(value) if np.isfinite(value) else "inf_flag"])
        self.logger.info(f"Wrote decay traces to {path}")

        table = self._table("Decay traces (seed mean)", ["step", "metric", "first", "last", "min", "overflow"])
        for name, by_seed in traces.items():
            mean = MetricTrace.mean_over_seeds(by_seed.values())
            for metric in mean.metrics():
                stats = self._calculate_stats(list(mean.values(metric)))
                self._add_row(table, name, metric, self._format_stat_value(float(mean.values(metric)[0])),
                              self._format_stat_value(mean.last(metric)), self._format_stat_value(stats['min']),
                              "yes" if mean.overflow else "no")
        return table

    def cmd_sca(self, cfg: RunConfig) -> Table:
        results = []
        for seed in cfg.seeds:
            g = self._load_graph(cfg, seed)
            warn_if_degenerate(g, "SCA check")
            self_loops = bool(cfg["self_loops"])
            a_sym = normalize(g, NormKind.SYM, self_loops=self_loops).matrix
            d = int(cfg["features"])
            w = named_rng(seed, "sca/w").standard_normal((d, d))
            for i, j in cfg["pairs"]:
                r = sca_ratio_sym(a_sym, w, i, j)
                results.append({"seed": seed, "kind": "sym", "i": i, "j": j, "defined": r.defined,
                                "ratio": r.ratio if r.defined else None,
                                "expected": r.expected if r.defined else None})
                if cfg["svd"]:
                    a_rw = normalize(g, NormKind.RW, self_loops=self_loops).matrix
                    s = sca_ratio_svd(a_rw, w, i, j)
                    results.append({"seed": seed, "kind": "svd", "i": i, "j": j, "defined": s.defined,
                                    "ratio": s.ratio, "expected": s.expected})
        self._write_json(cfg, "sca.json", {"results": results})

        table = self._table("Shared component amplification", ["seed", "kind", "(i, j)", "ratio", "expected"])
        for r in results:
            self._add_row(table, r["seed"], r["kind"], f"({r['i']}, {r['j']})",
                          self._format_stat_value(r["ratio"]), self._format_stat_value(r["expected"]))
        return table

    def cmd_split(self, cfg: RunConfig) -> Table:
        seed = cfg.seeds[0]
        g = self._load_graph(cfg, seed)
        kind = cfg["ordering"]
        if kind == "degree":
            order = degree_ordering(g)
        elif kind == "random":
            order = random_ordering(g.n, seed)
        elif kind == "ppr":
            order = ppr_ordering(g, float(cfg["alpha"]))
        elif kind == "features":
            order = feature_ordering(named_rng(seed, "split/features").standard_normal((g.n, 1)))
        else:
            raise ConfigError(f"unknown ordering {kind!r}; choose degree, random, ppr or features")
        self_loops = bool(cfg["self_loops"])
        ra = assign_relations(g, order, swap=bool(cfg["swap"]), self_loops=self_loops)
        agg = normalize(g, NormKind.SYM, self_loops=self_loops).matrix
        mats = split_aggregation(agg, ra)
        if not np.array_equal(sum(mats), agg):
            raise VerificationError("relation matrices do not sum to the aggregation matrix")
        report = independence_report(mats)

        path = self._artifact(cfg, "relations.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            ra.to_csv(sink)
        payload = report.to_dict()
        payload.update({"ordering": kind, "swap": bool(cfg["swap"]),
                        "roots": {str(k + 1): root_nodes(m) for k, m in enumerate(mats)},
                        "dar": {str(k + 1): is_dar(m) for k, m in enumerate(mats)}})
        self._write_json(cfg, "independence.json", payload)

        table = self._table("Multi-relational split", ["relation", "edges", "DAR", "roots"])
        for k, m in enumerate(mats, start=1):
            self._add_row(table, k, len(ra.edges_of(k)), "yes" if is_dar(m) else "no", len(root_nodes(m)))
        self._add_row(table, "independent", report.independent_count, "", "")
        return table

    def cmd_lmgc_probe(self, cfg: RunConfig) -> Table:
        payload: Dict[str, Dict[str, Any]] = {}
        table = self._table("LMGC probes", ["seed", "weight_fn", "injectivity", "battery", "independence"])
        d, c, trials = int(cfg["features"]), int(cfg["channels"]), int(cfg["trials"])
        for seed in cfg.seeds:
            payload[str(seed)] = {}
            for name in cfg["weight_fns"]:
                wf = WeightFn(name)
                rng = named_rng(seed, f"lmgc/{wf.value}")
                p = init_params(int(cfg["K"]), d, c, wf, rng)
                base_x = rng.standard_normal(d)
                vectors = list(rng.standard_normal((3, d)))
                inj = injectivity_probe(p, base_x, int(cfg["max_multiplicity"]), trials, seed)
                battery = injectivity_battery(p, base_x, multiset_battery(vectors, int(cfg["battery_size"])),
                                              trials, seed)
                pairs = [((base_x, [vectors[0]]), (vectors[1], [vectors[0], vectors[2]])),
                         ((base_x, [vectors[0]]), (base_x, [vectors[0], vectors[1]]))]
                indep = independence_probe(p, pairs, trials, seed)
                payload[str(seed)][wf.value] = {"injectivity": inj.to_dict(), "battery": battery.to_dict(),
                                                "independence": indep.to_dict()}
                self._add_row(table, seed, wf.value, f"{inj.passes}/{trials}", f"{battery.passes}/{trials}",
                              f"{sum(indep.passed)}/{len(pairs)} pairs")
        self._write_json(cfg, "lmgc_probe.json", payload)
        return table

    def cmd_pprgnn(self, cfg: RunConfig) -> Table:
        seed = cfg.seeds[0]
        pcfg = PprgnnConfig.from_dict(dict(cfg["pprgnn"]))
        d = int(cfg["features"])
        if cfg["instance"] == "identity":
            n = int(cfg["nodes"])
            agg, w, h0 = np.eye(n), np.eye(d), np.ones((n, d))
        elif cfg["instance"] == "graph":
            g = self._load_graph(cfg, seed)
            agg = normalize(g, NormKind.SYM, self_loops=True).matrix
            rng = named_rng(seed, "pprgnn/instance")
            w = rng.standard_normal((d, d))
            w *= 0.9 / np.linalg.norm(w, 2)
            h0 = rng.standard_normal((g.n, d))
        else:
            raise ConfigError(f"unknown PPRGNN instance {cfg['instance']!r}; choose identity or graph")

        estimate = estimate_depth(agg, w, h0, pcfg)
        depth = estimate.depth if cfg["depth"] == "auto" else int(cfg["depth"])
        h, _ = forward(agg, w, h0, pcfg, depth)
        write_matrix_csv(h, self._artifact(cfg, "pprgnn_H.csv"))
        report = gradcheck(agg, w, h0, pcfg, depth, probe=np.ones_like(h0))
        path = self._artifact(cfg, "gradcheck.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            report.to_csv(sink)

        table = self._table("PPRGNN", ["quantity", "value"])
        self._add_row(table, "depth used", depth)
        self._add_row(table, "depth estimate", f"{estimate.depth}{' (capped)' if estimate.capped else ''}")
        self._add_row(table, "||H||_F", self._format_stat_value(float(np.linalg.norm(h))))
        self._add_row(table, "rel err grad H0", self._format_stat_value(report.rel_err_h0))
        self._add_row(table, "rel err grad W", self._format_stat_value(report.rel_err_w))
        if not report.passed:
            raise VerificationError(f"PPRGNN gradient check failed (H0 {report.rel_err_h0:.2e}, "
                                    f"W {report.rel_err_w:.2e})")
        return table

    def cmd_train_synthetic(self, cfg: RunConfig) -> Table:
        merged = TrainingTrace()
        table = self._table("Synthetic 4-node task", ["variant", "mean acc", "min acc", "max acc", "diverged"])
        for name in cfg["variants"]:
            variant = SyntheticVariant(name)
            result = train_synthetic(variant, int(cfg["iterations"]), cfg.seeds, int(cfg["steps"]),
                                     lr=float(cfg["lr"]), learn_aggregation=bool(cfg["learn_aggregation"]),
                                     terms=int(cfg["terms"]))
            for step, seed, metric, value in result.trace.records:
                merged.append(step, seed, f"{variant.value}/{metric}", value)
            stats = self._calculate_stats(list(result.accuracy.values()))
            self._add_row(table, variant.value, self._format_stat_value(stats['mean']),
                          self._format_stat_value(stats['min']), self._format_stat_value(stats['max']),
                          len(result.diverged))
        path = self._artifact(cfg, "train.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            merged.to_csv(sink)
        return table

    def cmd_fit_target(self, cfg: RunConfig) -> Table:
        merged = TrainingTrace()
        table = self._table("Fit-a-target", ["variant", "mean MSE", "max MSE", "diverged runs"])
        for name in cfg["variants"]:
            variant = FitVariant(name)
            result = train_fit_target(int(cfg["nodes"]), float(cfg["p"]), int(cfg["features"]), cfg.seeds,
                                      steps=int(cfg["steps"]), variant=variant, lrs=cfg["lrs"],
                                      terms=int(cfg["terms"]))
            for step, seed, metric, value in result.trace.records:
                merged.append(step, seed, f"{variant.value}/{metric}", value)
            stats = self._calculate_stats(list(result.best_mse.values()))
            self._add_row(table, variant.value, self._format_stat_value(stats['mean']),
                          self._format_stat_value(stats['max']), len(result.diverged))
        path = self._artifact(cfg, "fit_target.csv")
        with path.open("w", encoding="utf-8", newline="") as sink:
            merged.to_csv(sink)
        return table

    def run(self) -> RunConfig:
        """Load the config, run the command, print its table and write run_config.json"""
        cfg = load_run_config(self.command, self.config_path, self.seed, self.out_dir)
        start_time = time.time()
        self.logger.info(f"Running {cfg.command} with seeds {cfg.seeds}, output in {cfg.out_dir}")
        self._write_json(cfg, "run_config.json", cfg.to_dict())
        table = self.commands[cfg.command](cfg)
        runtime = time.time() - start_time

        self.console.print(table)
        self._log_to_file_only(f"{cfg.command} completed in {runtime:.2f} seconds")
        self._log_to_file_only(self._generate_text_summary(table.title or cfg.command))
        for path in self.artifacts:
            self.console.print(f"[bold blue]wrote {path}[/bold blue]")
        if self.log_file_name:
            self.console.print(f"[bold blue]Detailed logs saved to: {self.log_file_name}[/bold blue]")
        self.logger.info(f"{cfg.command} completed in {runtime:.2f} seconds")
        return cfg
