import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from asgl.config import settings
from asgl.models import EvalRecord, IngestStats, TrainReport

logger = logging.getLogger(__name__)

# Report templates directory
TEMPLATES_DIR = Path(__file__).parent.parent / "templates" / "reports"

# Initialize Jinja2 environment
env = Environment(
    loader=FileSystemLoader(TEMPLATES_DIR),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


env.filters["fmt"] = _fmt


class ReportRenderer:
    """Renders human-readable tables for the CLI."""

    def __init__(self):
        self.app_name = settings.APP_NAME

    def _render_template(self, template_name: str, context: Optional[Dict[str, Any]] = None) -> str:
        """Render a report template with the given context."""
        if context is None:
            context = {}
        context.setdefault("app_name", self.app_name)
        template = env.get_template(template_name)
        return template.render(**context)

    def ingest_summary(self, stats: IngestStats, outputs: Dict[str, Path]) -> str:
        return self._render_template("ingest_summary.txt", {"stats": stats, "outputs": outputs})

    def train_summary(self, report: TrainReport, run_dir: Path) -> str:
        return self._render_template("train_summary.txt", {"report": report, "run_dir": run_dir})

    def accountant(
        self,
        params: Dict[str, Any],
        rows: Iterable[Dict[str, float]],
        epsilon: Optional[float] = None,
        best_alpha: Optional[float] = None,
        max_iterations: Optional[int] = None,
    ) -> str:
        context = {
            "params": params,
            "rows": list(rows),
            "epsilon": epsilon,
            "best_alpha": best_alpha,
            "max_iterations": max_iterations,
        }
        return self._render_template("accountant.txt", context)

    def eval_table(self, records: Iterable[EvalRecord]) -> str:
        return self._render_template("eval_table.txt", {"records": list(records)})


# Create a singleton instance
report_renderer = ReportRenderer()
