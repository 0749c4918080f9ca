from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    log_level: str = "INFO"

    solver_method: Literal["direct", "cg"] = "direct"
    solver_rtol: float = 1e-9
    cg_maxiter: int = 20000

    test_fraction: float = 0.2
    worst_cells: int = 20
    # artifacts larger than this are refused on read
    max_artifact_bytes: int = Field(default=512 * 1024 * 1024, gt=0)

    # https://no-color.org: any non-empty value disables styling
    no_color: Optional[str] = Field(default=None, validation_alias="NO_COLOR")

    model_config = SettingsConfigDict(
        env_prefix="EMIR_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @property
    def color_disabled(self) -> bool:
        return bool(self.no_color)


settings = Settings()
