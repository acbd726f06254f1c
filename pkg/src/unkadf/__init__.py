"""Demand forecasting by adapting a model shared from another transport mode."""

__version__ = "0.1.0"

from .artifact import PretrainedArtifact, load_artifact, save_artifact  # noqa: E402
from .data import DemandMatrix, SynthConfig, load_csv, synth_generate  # noqa: E402
from .errors import UnkadfError  # noqa: E402
from .metrics import MaskPolicy, MetricReport, evaluate  # noqa: E402
from .models import VariantKind, build_variant  # noqa: E402
from .training import RunConfig, RunResult, run_adapt, run_pretrain, run_variant, sweep  # noqa: E402

__all__ = [
    "DemandMatrix", "MaskPolicy", "MetricReport", "PretrainedArtifact", "RunConfig",
    "RunResult", "SynthConfig", "UnkadfError", "VariantKind", "build_variant", "evaluate",
    "load_artifact", "load_csv", "run_adapt", "run_pretrain", "run_variant",
    "save_artifact", "sweep", "synth_generate",
]
