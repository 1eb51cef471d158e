"""Shared configuration presets used by the CLI, scripts, and tests."""

from __future__ import annotations

from dataclasses import replace

from .model import ModelConfig
from .synth import ScenarioConfig
from .training import TrainConfig


def standard_scenario(seed: int = 7) -> ScenarioConfig:
    """Benchmark market: 4 countries x 10 regions x 2 years of days."""
    return ScenarioConfig(
        n_countries=4,
        regions_per_country=10,
        n_days=730,
        start="2024-01-01",
        seed=seed,
    )


def zero_effect_scenario(seed: int = 7) -> ScenarioConfig:
    """Same market layout, but every event multiplier is pinned to 1.0.

    Event records are still generated and land in the database, so the event
    pathway sees the same summaries — they just carry no demand signal.
    """
    return replace(
        standard_scenario(seed),
        promo_uplift_range=(1.0, 1.0),
        public_drop_range=(0.0, 0.0),
        religious_presurge_range=(0.0, 0.0),
        religious_drop_range=(0.0, 0.0),
        cultural_uplift_range=(0.0, 0.0),
    )


def small_scenario(seed: int = 11) -> ScenarioConfig:
    """Quick scenario for smoke tests: 2 countries x 3 regions x 240 days."""
    return ScenarioConfig(
        n_countries=2,
        regions_per_country=3,
        n_days=240,
        start="2024-01-01",
        seed=seed,
    )


def desk_model_config() -> ModelConfig:
    """Model sized to train the standard scenario on a CPU in minutes."""
    return ModelConfig(
        n_features=4,
        look_back=14,
        target_index=1,
        n_heads=4,
        head_dim=16,
        latent_dim=64,
        align_dim=64,
        tower_layers=3,
        horizons=4,
        max_positions=64,
    )


def desk_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(
        epochs=25,
        batch_size=256,
        lr=1e-3,
        seed=seed,
        trend_weight=0.4,
        test_frac=0.2,
    )


def tiny_model_config() -> ModelConfig:
    """Minimal config for unit tests and gradient checks."""
    return ModelConfig(
        n_features=2,
        look_back=4,
        target_index=1,
        n_heads=2,
        head_dim=3,
        latent_dim=5,
        align_dim=16,
        tower_layers=1,
        dropout=0.0,
        horizons=2,
        max_positions=32,
    )
