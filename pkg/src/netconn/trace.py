"""Per-iteration trace records and their deterministic CSV form.

Floats are printed with 17 significant digits and a '.' decimal point so
that a run repeated with the same configuration and seed produces a
byte-identical file and values round-trip exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["TraceRecord", "format_value"]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if v != v:
            return "nan"
        if v == int(v) and abs(v) < 1e16:
            return f"{v:.1f}"
        return f"{v:.17g}"
    return str(v)


@dataclass
class TraceRecord:
    """Ordered rows of named real columns plus run metadata.

    The first column is the iteration index and must be strictly
    increasing across rows.
    """

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row: tuple) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, trace has {len(self.columns)} columns")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError(
                f"iteration index must be strictly increasing, got {row[0]} after {self.rows[-1][0]}"
            )
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def last(self, name: str):
        idx = self.columns.index(name)
        return self.rows[-1][idx]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(format_value(v) for v in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "TraceRecord":
        meta = {}
        rows = []
        columns = None
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("# "):
                    key, _, value = line[2:].partition("=")
                    meta[key] = value
                    continue
                if columns is None:
                    columns = tuple(line.split(","))
                    continue
                vals = []
                for tok in line.split(","):
                    try:
                        vals.append(int(tok))
                    except ValueError:
                        vals.append(float(tok))
                rows.append(tuple(vals))
        if columns is None:
            raise ValueError(f"no header found in {path}")
        trace = cls(columns=columns, meta=meta)
        for row in rows:
            trace.append(row)
        return trace
