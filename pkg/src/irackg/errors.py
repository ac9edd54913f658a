"""Shared exception hierarchy.

Every error the pipeline can raise on bad data or bad configuration derives
from PipelineError so the CLI can map them to a single nonzero exit code.
"""


class PipelineError(Exception):
    """Base class for all pipeline-level failures."""

    code = "pipeline_error"

    def to_json_obj(self) -> dict:
        return {"error": self.code, "message": str(self)}
