"""Result records with byte-stable serialization.

Every CLI command emits one RunResult.  Serialization sorts keys,
pins separators, and carries no timestamps or environment echo, so a
rerun with the same config and seed produces identical bytes.
"""

from dataclasses import dataclass
import csv
import io
import json

from .errors import ConfigError

RESULT_SCHEMA = "spectramech.result/1"


@dataclass(frozen=True)
class RunResult:
    command: str
    config_digest: str
    seed: int
    payload: dict

    def to_json_bytes(self) -> bytes:
        doc = {
            "schema": RESULT_SCHEMA,
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "payload": self.payload,
        }
        text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False)
        return (text + "\n").encode("utf-8")

    @classmethod
    def from_json_bytes(cls, raw: bytes):
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"not a result document: {exc}") from None
        if doc.get("schema") != RESULT_SCHEMA:
            raise ConfigError(f"unexpected result schema {doc.get('schema')!r}")
        return cls(
            command=doc["command"],
            config_digest=doc["config_digest"],
            seed=doc["seed"],
            payload=doc["payload"],
        )


def rows_to_csv(rows, columns=None) -> str:
    """Render records as CSV; str(float) keeps full round-trip precision."""
    if not rows:
        return ""
    if columns is None:
        columns = list(rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    return str(value)
