"""Error codes shared by every stage of the flow.

Each error carries a machine-readable ``code`` and a human ``detail``; the CLI
prints both and maps them to exit status 1.
"""
from typing import Optional


class EmirError(Exception):
    code: str = "ERROR"

    def __init__(self, code: str, detail: str, context: Optional[dict] = None):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail
        self.context = context or {}


class DesignError(EmirError):
    pass


class GeneratorError(EmirError):
    pass


class SolverError(EmirError):
    pass


class FeatureError(EmirError):
    pass


class ModelError(EmirError):
    pass


class EvaluationError(EmirError):
    pass
