"""Report container and the table / CSV / JSON writers used by the CLI."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

FLOAT_FORMAT = ".10g"
CLAMP = 1e-12


def fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    if abs(x) < CLAMP:
        x = 0.0
    return format(x, FLOAT_FORMAT)


def _plain(v: Any) -> Any:
    """Deterministic JSON-ready value: floats rounded through the report format."""
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, complex):
        return [_plain(v.real), _plain(v.imag)]
    if isinstance(v, float):
        return None if math.isnan(v) else float(fmt_float(v))
    if hasattr(v, "item"):  # numpy scalar
        return _plain(v.item())
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return str(v)


def _cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


@dataclass
class Report:
    command: str
    columns: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    status: int = 0
    messages: list[str] = field(default_factory=list)

    def header_line(self) -> str:
        keys = ["tool", "version", "command", "seed", "tol_rank", "tol_zero", "model", "model_hash"]
        return "# " + " ".join(f"{k}={self.meta.get(k, '')}" for k in keys)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header_line() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "meta": _plain(self.meta),
            "columns": list(self.columns),
            "rows": [_plain(list(r)) for r in self.rows],
            "summary": _plain(self.summary),
            "status": self.status,
            "messages": list(self.messages),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        cells = [list(self.columns)] + [[_cell(v) for v in row] for row in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = [self.header_line()]
        for i, r in enumerate(cells if self.columns else []):
            lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        for k, v in self.summary.items():
            lines.append(f"{k}: {_cell(v) if not isinstance(v, (list, tuple, dict)) else json.dumps(_plain(v))}")
        lines.extend(self.messages)
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        return {"csv": self.to_csv, "json": self.to_json, "table": self.to_table}[fmt]()
