"""Benchmark systems, trajectory files and reference spectra."""

from evolop.datasets.systems import (
    Duffing,
    LangevinQuadWell,
    LinearSystem,
    LogisticMap,
    Lorenz63,
    NoisyLogisticMap,
    RegimeSwitching,
    SystemSpec,
    Trajectory,
    noise_cdf,
    noise_quantile,
    quadwell_potential,
    read_binary,
    read_csv,
    read_trajectory,
    simulate,
    write_binary,
    write_csv,
)
from evolop.datasets.truth import GroundTruthSpectrum, langevin_truth, noisy_logistic_truth, ulam_truth

__all__ = [
    "Duffing",
    "GroundTruthSpectrum",
    "LangevinQuadWell",
    "LinearSystem",
    "LogisticMap",
    "Lorenz63",
    "NoisyLogisticMap",
    "RegimeSwitching",
    "SystemSpec",
    "Trajectory",
    "langevin_truth",
    "noise_cdf",
    "noise_quantile",
    "noisy_logistic_truth",
    "quadwell_potential",
    "read_binary",
    "read_csv",
    "read_trajectory",
    "simulate",
    "ulam_truth",
    "write_binary",
    "write_csv",
]
