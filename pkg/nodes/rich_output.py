"""Rich-based console output for the cell-free FL lab."""

import logging
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from rich.text import Text

from .config import DEBUG, LOG_LEVEL, should_log_verbose

# Progress and tables go to stderr so result files piped from stdout stay clean
console = Console(stderr=True)

logging.basicConfig(
    level=logging.DEBUG if DEBUG else getattr(logging, LOG_LEVEL, logging.WARNING),
    format="%(message)s",
    datefmt="[%X]",
    handlers=[
        RichHandler(
            rich_tracebacks=True,
            console=console,
            show_time=False,
            show_path=False,
        )
    ]
)

# Solver iterations are noisy; keep them behind VERBOSE_SOLVER_LOGS
if not should_log_verbose():
    logging.getLogger('sim.barrier').setLevel(logging.INFO)
    logging.getLogger('sim.power_control').setLevel(logging.INFO)


def make_bar(value: float, width: int = 10) -> Text:
    """Bar for a fraction in [0, 1], e.g. the share of UEs served in a round."""
    value = min(max(value, 0.0), 1.0)
    filled = int(round(value * width))
    if value < 0.4:
        color = "red"
    elif value < 0.7:
        color = "yellow"
    else:
        color = "green"
    bar = Text()
    bar.append("█" * filled, style=color)
    bar.append("░" * (width - filled))
    bar.append(f" {value:5.0%}", style=color)
    return bar


def format_number(value: Any) -> str:
    """Compact engineering format for seconds, watts and rates."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return str(value)
    if value != value:  # NaN
        return "-"
    if value == 0 or 1e-2 <= abs(value) < 1e4:
        return f"{value:.4g}"
    return f"{value:.3e}"


class RichOutputFormatter:
    """Console formatter shared by the pipeline stages and the CLI."""

    def __init__(self):
        self.quiet = False
        self.execution_data: Dict[str, Any] = {
            'started_at': datetime.now(),
            'command': None,
            'config_hash': None,
            'seed': None,
            'status': None,
            'notifications': [],
        }

    def set_quiet(self, quiet: bool = True):
        """Silence progress lines (sweep workers)."""
        self.quiet = quiet

    def start_execution(self, command: str, config_hash: str, seed: int):
        """Print the run header."""
        self.execution_data.update(command=command, config_hash=config_hash, seed=seed)
        if self.quiet:
            return
        header = Text()
        header.append(f"cfl-lab {command}", style="bold blue")
        header.append(f"  config {config_hash}  seed {seed}", style="dim")
        console.print(header)
        console.print("─" * 80)

    def log_node_progress(self, node: str, message: str, duration: Optional[float] = None):
        """Log progress from a pipeline stage."""
        if self.quiet:
            return
        duration_str = f" ({duration:.2f}s)" if duration is not None else ""
        text = Text()
        text.append(f"[{node:9}]", style="bold blue")
        text.append(" ")
        lowered = message.lower()
        if any(x in lowered for x in ["failed", "error"]):
            text.append(f"{message}{duration_str}", style="red")
        elif any(x in lowered for x in ["completed", "ok", "converged"]):
            text.append(f"{message}{duration_str}", style="green")
        else:
            text.append(message)
            if duration is not None:
                text.append(duration_str, style="dim")
        console.print(text)

    def notify(self, message: str):
        self.execution_data['notifications'].append(message)

    def print_ue_table(self, title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]):
        """Per-UE (or per-AP) table."""
        if self.quiet:
            return
        table = Table(title=title, title_justify="left", header_style="bold blue")
        for name in columns:
            table.add_column(name, justify="right")
        for row in rows:
            table.add_row(*[format_number(v) for v in row])
        console.print(table)

    def print_served_shares(self, shares: List[float], label: str = "served"):
        """One bar per round with the fraction of UEs served."""
        if self.quiet or not shares:
            return
        for t, share in enumerate(shares):
            console.print(f"round {t:<4} {label:7}: ", end="")
            console.print(make_bar(share))

    def print_final_summary(self, status: str, metrics: Dict[str, Any], outputs: Sequence[str] = ()):
        """Run status, headline metrics and the files written."""
        if self.quiet:
            return
        duration = (datetime.now() - self.execution_data['started_at']).total_seconds()
        console.print()
        console.print("[bold blue]RUN[/bold blue]")
        status_text = Text("Status   : ")
        if status in ("ok", "completed"):
            status_text.append("✓ Complete", style="green bold")
        else:
            status_text.append(status, style="yellow")
        console.print(status_text)
        console.print(f"Runtime  : {duration:.2f}s")
        console.print(f"Config   : {self.execution_data['config_hash']}", style="dim")
        console.print()

        if metrics:
            console.print("[bold blue]RESULTS[/bold blue]")
            width = max(len(k) for k in metrics)
            for name, value in metrics.items():
                console.print(f"{name:<{width}} : {format_number(value)}")
            console.print()

        if outputs:
            console.print("[bold blue]OUTPUTS[/bold blue]")
            for path in outputs:
                console.print(str(path), style="dim")

        for notification in self.execution_data['notifications']:
            style = "red" if "failed" in notification.lower() else "yellow"
            console.print(notification, style=style)
        console.print("─" * 80)


# Global formatter instance
formatter = RichOutputFormatter()
