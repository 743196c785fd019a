import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from models.experiment import ExperimentConfig
from services.workflows_service import WorkflowExecution
from utils.config import get_settings
from utils.errors import LabError, jsonable
from utils.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

FLOAT_FORMAT = "%.12g"


class ReportsService:
    """Service writing experiment artifacts: CSV tables, JSON reports and the resolved config"""

    def __init__(self):
        self.schema_version = settings.SCHEMA_VERSION

    def output_directory(self, command: str, out: Optional[str] = None) -> Path:
        directory = Path(out) if out else Path(settings.OUTPUT_DIR) / command
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise LabError(f"cannot create output directory {directory}: {e.strerror}", module="cli", path=str(directory))
        return directory

    def _dump(self, document: Dict[str, Any], path: Path) -> Path:
        path.write_text(json.dumps(jsonable(document), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path

    def write_table(self, frame: pd.DataFrame, directory: Path, name: str, output_format: str = "both") -> List[Path]:
        """CSV with a header row; JSON holds the same columns as lists"""
        paths = []
        if output_format in ("csv", "both"):
            path = directory / f"{name}.csv"
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            paths.append(path)
        if output_format in ("json", "both"):
            columns = {column: frame[column].tolist() for column in frame.columns}
            paths.append(self._dump({"columns": list(frame.columns), "data": columns}, directory / f"{name}_table.json"))
        return paths

    def write_report(self, report: Dict[str, Any], directory: Path, name: str) -> Path:
        return self._dump({"schema_version": self.schema_version, **report}, directory / f"{name}.json")

    def write_resolved_config(self, command: str, config: ExperimentConfig, directory: Path) -> Path:
        document = {
            "command": command,
            "schema_version": self.schema_version,
            "parameters": config.model_dump(exclude={"seed", "out", "jobs", "format"}),
            "seed": config.seed,
            "format": config.format,
            "jobs": config.jobs,
        }
        return self._dump(document, directory / "resolved_config.json")

    def write_execution(self, execution: WorkflowExecution, config: ExperimentConfig, directory: Optional[Path] = None) -> List[Path]:
        """All artifacts of one run, tables and reports in name order"""
        directory = directory or self.output_directory(execution.command, config.out)
        paths = [self.write_resolved_config(execution.command, config, directory)]
        for name in sorted(execution.tables):
            paths.extend(self.write_table(execution.tables[name], directory, name, config.format))
        for name in sorted(execution.reports):
            paths.append(self.write_report(execution.reports[name], directory, name))
        logger.info("Artifacts written", command=execution.command, directory=str(directory), files=len(paths))
        return paths


# Global reports service instance
reports_service = ReportsService()
