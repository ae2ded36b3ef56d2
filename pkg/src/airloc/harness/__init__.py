"""Campaign configuration, execution and export."""

from .campaign import RunResult, export, export_summary, import_records, run_campaign, worker_count
from .config import (CampaignConfig, ConfigError, config_from_dict, config_to_dict, default_config,
                     load_config)

__all__ = [
    "CampaignConfig", "ConfigError", "RunResult", "config_from_dict", "config_to_dict",
    "default_config", "export", "export_summary", "import_records", "load_config", "run_campaign",
    "worker_count",
]
