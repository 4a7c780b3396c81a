"""Single JSON-serializable configuration document for the CLI pipelines.

Every default equals the constant actually used by the library code, so a
dumped config is an accurate record of the run parameters.
"""

from __future__ import annotations

import json
from copy import deepcopy
from pathlib import Path

from . import analysis, sigproc
from .errors import ConfigurationError
from .screening import ScreeningThresholds
from .session.machine import SessionConfig
from .session.simulate import SimulationProfile
from .sigproc import DEFAULT_OPTICAL_CONSTANTS, OpticalConstants

DEFAULTS: dict = {
    "seed": 0,
    "screening": {
        "spike_threshold": 10.0,
        "silence_rms_db": -50.0,
        "silence_max_s": 3.0,
        "frame_ms": 10.0,
    },
    "filters": {
        "eeg_band_hz": list(sigproc.EEG_BAND),
        "ppg_band_hz": list(sigproc.PPG_BAND),
        "systemic_band_hz": list(sigproc.SYSTEMIC_BAND),
    },
    "band_edges_hz": {name: list(edges) for name, edges in analysis.BANDS.items()},
    "full_band_hz": list(analysis.FULL_BAND),
    "eeg_baseline": "epoch_mean",
    "ppg_source": "850",
    # wavelength keys are strings so the document survives JSON round trips
    "optical_constants": {
        "extinction": {
            ch: {str(wl): v for wl, v in table.items()}
            for ch, table in DEFAULT_OPTICAL_CONSTANTS.extinction.items()
        },
        "dpf": {str(wl): v for wl, v in DEFAULT_OPTICAL_CONSTANTS.dpf.items()},
        "separation_cm": DEFAULT_OPTICAL_CONSTANTS.separation_cm,
    },
    "classifier": {
        "l2": 0.01,
        "learning_rate": 0.1,
        "iterations": 500,
        "kfold": 10,
    },
    "session": {
        "preparation_ms": 5_000,
        "playback_ms": 60_000,
        "rest_ms": 15_000,
        "rating_timeout_ms": 30_000,
        "arithmetic_problems": 3,
    },
    "simulate": {
        "rating_dwell_ms": [4_000, 10_000],
        "arithmetic_dwell_ms": [15_000, 25_000],
        "inter_session_break_ms": 120_000,
        "exact_five_probability": 0.05,
        "eeg_noise_uv": 10.0,
        "eeg_alpha_uv": [4.0, 22.0],
        "eeg_beta_uv": [4.0, 22.0],
        "hbo_task_um": [0.3, 1.2],
        "hbr_task_um": [0.3, 1.2],
        "cardiac_hz": [1.0, 1.4],
        "cardiac_od_amp": [0.08, 0.16],
        "subject_gain_range": [0.85, 1.15],
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {where} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


class PipelineConfig:
    """Defaults merged with an optional config file and flag overrides."""

    def __init__(self, values: dict | None = None):
        self.values = _merge(DEFAULTS, values or {})

    @classmethod
    def load(cls, path: Path | str | None = None, overrides: dict | None = None) -> "PipelineConfig":
        values = {}
        if path is not None:
            values = json.loads(Path(path).read_text())
        config = cls(values)
        if overrides:
            config.values = _merge(config.values, overrides)
        return config

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)

    def dump(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json() + "\n")

    # -- typed views ---------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def screening_thresholds(self) -> ScreeningThresholds:
        s = self.values["screening"]
        return ScreeningThresholds(
            spike_threshold=s["spike_threshold"],
            silence_rms_db=s["silence_rms_db"],
            silence_max_s=s["silence_max_s"],
            frame_ms=s["frame_ms"],
        )

    def optical_constants(self) -> OpticalConstants:
        oc = self.values["optical_constants"]
        extinction = {ch: {int(wl): v for wl, v in table.items()} for ch, table in oc["extinction"].items()}
        dpf = {int(wl): v for wl, v in oc["dpf"].items()}
        return OpticalConstants(extinction=extinction, dpf=dpf, separation_cm=oc["separation_cm"])

    def session_config(self) -> SessionConfig:
        s = self.values["session"]
        return SessionConfig(
            preparation_ms=s["preparation_ms"],
            playback_ms=s["playback_ms"],
            rest_ms=s["rest_ms"],
            rating_timeout_ms=s["rating_timeout_ms"],
            arithmetic_problems=s["arithmetic_problems"],
        )

    def simulation_profile(self) -> SimulationProfile:
        s = self.values["simulate"]
        return SimulationProfile(
            rating_dwell_ms=tuple(s["rating_dwell_ms"]),
            arithmetic_dwell_ms=tuple(s["arithmetic_dwell_ms"]),
            inter_session_break_ms=s["inter_session_break_ms"],
            exact_five_probability=s["exact_five_probability"],
            eeg_noise_uv=s["eeg_noise_uv"],
            eeg_alpha_uv=tuple(s["eeg_alpha_uv"]),
            eeg_beta_uv=tuple(s["eeg_beta_uv"]),
            hbo_task_um=tuple(s["hbo_task_um"]),
            hbr_task_um=tuple(s["hbr_task_um"]),
            cardiac_hz=tuple(s["cardiac_hz"]),
            cardiac_od_amp=tuple(s["cardiac_od_amp"]),
            subject_gain_range=tuple(s["subject_gain_range"]),
        )
