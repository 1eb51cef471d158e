"""Event-aware regional demand forecasting.

The pipeline turns a per-country event database (campaigns, holidays, seller
incentives, market reports) into structured daily summaries, embeds them
alongside a variables-as-tokens history encoder, and blends a trend tower
with an event tower to forecast horizons T+1..T+4 per region.
"""

from .data import Dataset, RegionSeries, load_dataset_csv, write_dataset_csv
from .errors import DataError, TowercastError
from .events import (
    CampaignEntry,
    CampaignReport,
    DayContext,
    EventDatabase,
    HolidayEntry,
    IncentiveRule,
    events_for,
    load_database,
    save_database,
)
from .evaluation import evaluate, mae, mse, sweep_lambda
from .model import ModelConfig, forecast
from .parsing import SummaryFields, extract_summary
from .prompting import PromptTemplate, default_template, render_prompt
from .reasoner import EndpointConfig, RemoteReasoner, reason_oracle
from .synth import ScenarioConfig, generate
from .training import TrainConfig, TrainedModel, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "CampaignEntry",
    "CampaignReport",
    "DataError",
    "Dataset",
    "DayContext",
    "EndpointConfig",
    "EventDatabase",
    "HolidayEntry",
    "IncentiveRule",
    "ModelConfig",
    "PromptTemplate",
    "RegionSeries",
    "RemoteReasoner",
    "ScenarioConfig",
    "SummaryFields",
    "TowercastError",
    "TrainConfig",
    "TrainedModel",
    "default_template",
    "evaluate",
    "events_for",
    "extract_summary",
    "forecast",
    "generate",
    "load_checkpoint",
    "load_database",
    "load_dataset_csv",
    "mae",
    "mse",
    "reason_oracle",
    "render_prompt",
    "save_checkpoint",
    "save_database",
    "sweep_lambda",
    "train",
    "write_dataset_csv",
    "__version__",
]
