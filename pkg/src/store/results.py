"""
Result store for experiment campaigns using DuckDB.

Every CLI campaign run with `--db` is recorded as one row in `runs`
(command, parameters, seed) plus one row per table line in `run_rows`.
Rows are keyed by (run_id, row_key), so re-recording a row replaces it.
The whole store can be dumped to an Excel workbook for sharing.
"""

import json
import uuid
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import duckdb
import pandas as pd

from src.config import settings
from src.exceptions import PackingError
from src.logger import get_logger

logger = get_logger(__name__)


def _to_json(payload: Dict[str, Any]) -> str:
    # numpy scalars carry .item(); anything else falls back to its string form
    return json.dumps(payload, default=lambda o: o.item() if hasattr(o, "item") else str(o), sort_keys=True)


class ResultStore:
    """
    DuckDB-backed store for campaign runs and their table rows.

    Usage:
        with ResultStore("results.duckdb") as store:
            run_id = store.record_run("gap", {"family": "gap2k"}, seed=0)
            store.record_rows(run_id, rows, key="k")
    """

    def __init__(self, db_path: Optional[str] = None):
        """
        Args:
            db_path: Path to the DuckDB file (settings.results_db_path by default)
        """
        self.db_path = db_path or settings.results_db_path
        self._conn: Optional[duckdb.DuckDBPyConnection] = None

    def connect(self) -> duckdb.DuckDBPyConnection:
        """Open the database (once) and make sure the tables exist."""
        if self._conn is None:
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
            self._conn = duckdb.connect(self.db_path)
            self.create_tables()
            logger.info(f"Initialized result store at {self.db_path}")
        return self._conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def __enter__(self) -> "ResultStore":
        self.connect()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def create_tables(self) -> None:
        """
        Create the store tables if they don't exist.

        - runs: one row per campaign invocation
        - run_rows: one row per result-table line, JSON payload
        """
        conn = self._conn
        conn.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                run_id VARCHAR PRIMARY KEY,
                command VARCHAR,
                params_json VARCHAR,
                seed BIGINT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)
        conn.execute("""
            CREATE TABLE IF NOT EXISTS run_rows (
                run_id VARCHAR,
                row_key VARCHAR,
                payload_json VARCHAR,
                passed BOOLEAN,
                PRIMARY KEY (run_id, row_key)
            )
        """)

    def record_run(self, command: str, params: Dict[str, Any], seed: Optional[int] = None) -> str:
        """
        Register a campaign run.

        Returns:
            str: The new run id
        """
        run_id = uuid.uuid4().hex
        self.connect().execute(
            "INSERT INTO runs (run_id, command, params_json, seed) VALUES (?, ?, ?, ?)",
            [run_id, command, _to_json(params), seed],
        )
        logger.info(f"Recorded run {run_id} ({command})")
        return run_id

    def record_rows(
        self, run_id: str, rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]], key: str
    ) -> int:
        """
        Upsert result rows for a run.

        Args:
            run_id: Run the rows belong to
            rows: DataFrame or row dicts; a boolean "passed" field is stored in its own column
            key: Field whose value identifies the row within the run

        Returns:
            int: Number of rows written
        """
        if isinstance(rows, pd.DataFrame):
            rows = rows.to_dict(orient="records")
        conn = self.connect()
        if not conn.execute("SELECT 1 FROM runs WHERE run_id = ?", [run_id]).fetchone():
            raise PackingError(f"unknown run id {run_id}")

        written = 0
        for row in rows:
            if key not in row:
                raise PackingError(f"row is missing key field '{key}': {row}")
            passed = row.get("passed")
            conn.execute(
                "INSERT OR REPLACE INTO run_rows (run_id, row_key, payload_json, passed) VALUES (?, ?, ?, ?)",
                [run_id, str(row[key]), _to_json(row), None if passed is None else bool(passed)],
            )
            written += 1
        logger.debug(f"Stored {written} rows for run {run_id}")
        return written

    def fetch_runs(self) -> pd.DataFrame:
        """All runs, oldest first."""
        return self.connect().execute("SELECT * FROM runs ORDER BY created_at, run_id").df()

    def fetch_rows(self, run_id: str) -> pd.DataFrame:
        """
        Rows of one run with their payload fields expanded into columns.

        Returns:
            pd.DataFrame: row_key, passed and one column per payload field
        """
        raw = self.connect().execute(
            "SELECT row_key, payload_json, passed FROM run_rows WHERE run_id = ? ORDER BY row_key", [run_id]
        ).fetchall()
        records = []
        for row_key, payload, passed in raw:
            record = json.loads(payload)
            record["row_key"] = row_key
            record["passed"] = passed
            records.append(record)
        return pd.DataFrame(records)

    def export_excel(self, path: Union[str, Path]) -> Path:
        """
        Write the runs and run_rows tables to an Excel workbook.

        Returns:
            Path: The written file
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        conn = self.connect()
        sheets = {
            "runs": self.fetch_runs(),
            "run_rows": conn.execute("SELECT * FROM run_rows ORDER BY run_id, row_key").df(),
        }
        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            for name, df in sheets.items():
                df.to_excel(writer, sheet_name=name, index=False)
                worksheet = writer.sheets[name]
                # Auto-adjust column widths
                for column in worksheet.columns:
                    width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
                    worksheet.column_dimensions[column[0].column_letter].width = min(width + 2, 50)
        logger.info(f"Exported {len(sheets['runs'])} runs to {path}")
        return path
