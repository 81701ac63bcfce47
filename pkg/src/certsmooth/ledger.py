"""Run ledger: one JSONL entry per CLI command."""

from __future__ import annotations

import json
import platform
from datetime import datetime
from pathlib import Path
from typing import TypedDict

import numpy as np
import scipy

from . import __version__


class LedgerEntry(TypedDict):
    """Ledger entry structure."""
    timestamp: str
    command: str
    config_hash: str
    seeds: dict[str, int]
    versions: dict[str, str]
    outputs: list[str]
    status: str
    exit_code: int


def package_versions() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "certsmooth": __version__,
    }


def reproducibility_stanza(command: str, config_hash: str, seeds: dict[str, int]) -> str:
    """Console lines echoing what a rerun needs to match this one."""
    versions = " ".join(f"{k}={v}" for k, v in package_versions().items())
    seed_text = " ".join(f"{k}={v}" for k, v in seeds.items())
    return (
        f"[Run] {command}\n"
        f"  config hash: {config_hash}\n"
        f"  seeds:       {seed_text}\n"
        f"  versions:    {versions}"
    )


class RunLedger:
    """
    Logs command runs to a JSONL file with a sliding window.

    Each line is a JSON object with:
    - timestamp: ISO format datetime
    - command: Subcommand name
    - config_hash: Hash of the semantic configuration
    - seeds: Every seed the command consumed
    - versions: Interpreter and library versions
    - outputs: Files the command declared
    - status / exit_code: Outcome
    """

    def __init__(
        self,
        file_path: str | Path,
        max_entries: int = 1000,
        enabled: bool = True,
    ):
        """
        Initialize the run ledger.

        Args:
            file_path: Path to JSONL file
            max_entries: Maximum entries before rotation
            enabled: Whether logging is enabled
        """
        self.file_path = Path(file_path)
        self.max_entries = max_entries
        self.enabled = enabled

    def log(
        self,
        command: str,
        config_hash: str,
        seeds: dict[str, int],
        outputs: list[str],
        status: str = "ok",
        exit_code: int = 0,
    ) -> None:
        """Append an entry for a finished command."""
        if not self.enabled:
            return

        entry: LedgerEntry = {
            "timestamp": datetime.now().isoformat(),
            "command": command,
            "config_hash": config_hash,
            "seeds": seeds,
            "versions": package_versions(),
            "outputs": outputs,
            "status": status,
            "exit_code": exit_code,
        }

        self.file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.file_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, ensure_ascii=False) + "\n")

        self._rotate_if_needed()

    def _rotate_if_needed(self) -> None:
        """Keep only the last max_entries lines."""
        if not self.file_path.exists():
            return

        with open(self.file_path, "r", encoding="utf-8") as f:
            lines = f.readlines()

        if len(lines) <= self.max_entries:
            return

        with open(self.file_path, "w", encoding="utf-8") as f:
            f.writelines(lines[-self.max_entries:])

    def get_recent(self, count: int = 10) -> list[LedgerEntry]:
        """Most recent entries, newest first."""
        if not self.file_path.exists():
            return []

        entries = []
        with open(self.file_path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    try:
                        entries.append(json.loads(line))
                    except json.JSONDecodeError:
                        continue

        return entries[-count:][::-1]
