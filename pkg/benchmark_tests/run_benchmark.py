#!/usr/bin/env python3
"""
Desk-scale design benchmark
Runs every method on each outcome model over a BA network, then the
sample-size scaling grid, and checks the expected directional pattern.
"""

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

# Add parent directory to path to import our modules
sys.path.append(str(Path(__file__).parent.parent))

from dotenv import load_dotenv

from benchmark_tests.evaluation_metrics import BenchmarkResults, CheckResult, EvaluationMetrics
from src.config import ExperimentConfig, load_config
from src.harness import ExperimentRunner, ExperimentSummary, emit_report, run_scaling
from src.outcomes import MODEL_KINDS

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent.parent / "configs"


class BenchmarkRunner:
    """Table-style comparison across outcome models plus the scaling study"""

    def __init__(self, table_config: ExperimentConfig, scaling_config: Optional[ExperimentConfig] = None,
                 output_dir: Optional[Path] = None):
        self.table_config = table_config
        self.scaling_config = scaling_config
        self.output_dir = output_dir or Path(__file__).parent
        self.evaluator = EvaluationMetrics()

    def run_table(self) -> List[ExperimentSummary]:
        """Every configured method under each outcome model on the same network"""
        summaries: List[ExperimentSummary] = []
        for kind in MODEL_KINDS:
            config = replace(self.table_config, model=replace(self.table_config.model, kind=kind, params={}))
            logger.info(f"Running {config.network.label} / {kind} with R={config.replications}")
            summaries.extend(ExperimentRunner(config).setup().run_all())
        return summaries

    def run_scaling(self) -> List[ExperimentSummary]:
        if self.scaling_config is None:
            return []
        logger.info(f"Running scaling grid {self.scaling_config.scaling_grid}")
        return run_scaling(self.scaling_config)

    def run_complete_benchmark(self) -> BenchmarkResults:
        start = time.time()
        table = self.run_table()
        scaling = self.run_scaling()

        ugander_rows = [s for s in table if s.model == "ugander_mult"]
        checks = self.evaluator.table_checks(ugander_rows) + self.evaluator.scaling_checks(scaling)
        efficiency = {kind: self.evaluator.relative_efficiency([s for s in table if s.model == kind])
                      for kind in MODEL_KINDS}

        results = BenchmarkResults(
            test_metadata={
                "test_date": time.strftime("%Y-%m-%d %H:%M:%S"),
                "network": self.table_config.network.label,
                "n": self.table_config.network.n,
                "replications": self.table_config.replications,
                "seed": self.table_config.seed,
                "scaling_grid": self.scaling_config.scaling_grid if self.scaling_config else [],
                "elapsed_seconds": round(time.time() - start, 1),
            },
            table_rows=[s.row() for s in table],
            scaling_rows=[s.row() for s in scaling],
            checks=checks,
            efficiency=efficiency,
        )

        (self.output_dir / "table.md").write_text(emit_report(table, "markdown"), encoding="utf-8")
        (self.output_dir / "table.csv").write_text(emit_report(table, "csv"), encoding="utf-8")
        if scaling:
            (self.output_dir / "scaling.csv").write_text(emit_report(scaling, "csv"), encoding="utf-8")
        self.evaluator.export_results(results, directory=self.output_dir)
        self._print_benchmark_summary(checks)
        return results

    def _print_benchmark_summary(self, checks: List[CheckResult]) -> None:
        logger.info("=" * 60)
        logger.info("BENCHMARK RESULTS SUMMARY")
        logger.info("=" * 60)
        for check in checks:
            logger.info(f"  {'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
        logger.info("=" * 60)


def quick_variant(config: ExperimentConfig, n: int = 200, replications: int = 100) -> ExperimentConfig:
    """Smaller network, fewer replications and pre-experiment draws"""
    quick = config.with_network_size(n, config.network.seed)
    quick.replications = min(config.replications, replications)
    quick.selection = replace(config.selection, n_pre=min(config.selection.n_pre, 200))
    if quick.scaling_grid:
        quick.scaling_grid = [max(50, size // 5) for size in quick.scaling_grid]
    return quick.validate()


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    load_dotenv()
    parser = argparse.ArgumentParser(description="Desk-scale comparison of isolation designs")
    parser.add_argument("--config", default=str(CONFIG_DIR / "ba_ugander.json"))
    parser.add_argument("--scaling-config", default=str(CONFIG_DIR / "scaling_ba.json"))
    parser.add_argument("--no-scaling", action="store_true")
    parser.add_argument("--quick", action="store_true", help="small n and R for a smoke run")
    parser.add_argument("--out-dir", help="directory for result files")
    args = parser.parse_args(argv)

    try:
        table_config = load_config(args.config)
        scaling_config = None if args.no_scaling else load_config(args.scaling_config)
        if args.quick:
            table_config = quick_variant(table_config)
            scaling_config = quick_variant(scaling_config) if scaling_config else None
        output_dir = Path(args.out_dir) if args.out_dir else None
        if output_dir:
            output_dir.mkdir(parents=True, exist_ok=True)
        results = BenchmarkRunner(table_config, scaling_config, output_dir).run_complete_benchmark()
    except Exception as e:
        logger.error(f"Benchmark error: {e}")
        return 1

    failed = [c.name for c in results.checks if not c.passed]
    if failed:
        logger.warning(f"Directional checks not met: {', '.join(failed)}")
        return 1
    logger.info("Benchmark completed successfully")
    return 0


if __name__ == "__main__":
    sys.exit(main())
