"""
Evaluation metrics for the desk-scale design comparison
Directional checks on MSE / Bias² / Var rows and result export.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.harness import ExperimentSummary

logger = logging.getLogger(__name__)

REFERENCE_METHOD = "RI+rdim"


@dataclass
class CheckResult:
    """One directional claim evaluated on a run"""
    name: str
    passed: bool
    detail: str


@dataclass
class BenchmarkResults:
    """Complete benchmark results"""
    test_metadata: Dict[str, Any]
    table_rows: List[Dict[str, Any]]
    scaling_rows: List[Dict[str, Any]]
    checks: List[CheckResult] = field(default_factory=list)
    efficiency: Dict[str, Dict[str, float]] = field(default_factory=dict)


class EvaluationMetrics:
    """Comparisons between designs on summary rows"""

    def __init__(self, slack: float = 1.0):
        # Multiplicative tolerance applied to each "should not increase" comparison
        self.slack = slack

    @staticmethod
    def by_method(summaries: Sequence[ExperimentSummary]) -> Dict[str, ExperimentSummary]:
        return {s.method: s for s in summaries}

    def relative_efficiency(self, summaries: Sequence[ExperimentSummary],
                            reference: str = REFERENCE_METHOD) -> Dict[str, float]:
        """MSE of the reference method divided by each method's MSE"""
        rows = self.by_method(summaries)
        if reference not in rows:
            return {}
        base = rows[reference].mse
        return {method: (base / s.mse if s.mse > 0 else math.inf) for method, s in rows.items()}

    def table_checks(self, summaries: Sequence[ExperimentSummary]) -> List[CheckResult]:
        """Directional pattern expected on one network / model setting"""
        rows = self.by_method(summaries)
        checks: List[CheckResult] = []

        def compare(name: str, left: str, right: str, attribute: str, factor: float = 1.0,
                    strict: bool = True) -> None:
            if left not in rows or right not in rows:
                return
            a, b = getattr(rows[left], attribute), getattr(rows[right], attribute)
            passed = a < factor * b if strict else a <= factor * b
            checks.append(CheckResult(name, bool(passed),
                                      f"{left} {attribute}={a:.4g} vs {factor:g}×{right} {attribute}={b:.4g}"))

        compare("awri_reduces_bias", "AWRI+rdim", "RI+rdim", "bias_sq")
        compare("matching_helps_awri", "AWRI+rmat", "AWRI+rdim", "mse", self.slack, strict=False)
        compare("isolation_beats_naive", "RI+rdim", "BER+dim", "mse", 0.5)
        return checks

    def scaling_checks(self, summaries: Sequence[ExperimentSummary]) -> List[CheckResult]:
        """AWRI+rdim MSE should fall with n; BER+dim bias² should not vanish"""
        checks: List[CheckResult] = []
        awri = sorted((s.n, s.mse) for s in summaries if s.method == "AWRI+rdim")
        if len(awri) >= 2:
            steps = [later <= self.slack * earlier for (_, earlier), (_, later) in zip(awri, awri[1:])]
            checks.append(CheckResult("awri_mse_decreasing", all(steps) and awri[-1][1] < awri[0][1],
                                      ", ".join(f"n={n}: {mse:.4g}" for n, mse in awri)))
        naive = sorted((s.n, s.bias_sq) for s in summaries if s.method == "BER+dim")
        if len(naive) >= 2:
            checks.append(CheckResult("naive_bias_persists", naive[-1][1] >= 0.5 * naive[0][1],
                                      ", ".join(f"n={n}: {b:.4g}" for n, b in naive)))
        return checks

    def export_results(self, results: BenchmarkResults, filename: str = "benchmark_results.json",
                       directory: Optional[Path] = None) -> Optional[Path]:
        """Write results and a short summary as JSON"""
        try:
            data = {
                "metadata": results.test_metadata,
                "table_rows": results.table_rows,
                "scaling_rows": results.scaling_rows,
                "checks": [asdict(c) for c in results.checks],
                "efficiency": results.efficiency,
                "summary": self._generate_summary(results),
            }
            filepath = (directory or Path(__file__).parent) / filename
            with open(filepath, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, ensure_ascii=False, default=float)
            logger.info(f"Benchmark results exported: {filepath}")
            return filepath
        except OSError as e:
            logger.error(f"Error exporting results: {e}")
            return None

    @staticmethod
    def _generate_summary(results: BenchmarkResults) -> Dict[str, Any]:
        passed = [c.name for c in results.checks if c.passed]
        failed = [c.name for c in results.checks if not c.passed]
        return {
            "generated": time.strftime("%Y-%m-%d %H:%M:%S"),
            "checks_passed": passed,
            "checks_failed": failed,
            "all_passed": not failed,
        }
