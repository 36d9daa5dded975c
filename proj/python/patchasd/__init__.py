# Copyright 2026 The patchasd Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Patch-token anomalous sound detection.

Thin Python layer over the C++ core. Arrays are float64 NumPy arrays.
"""

from ._patchasd import (
    Error,
    Model,
    arcface_loss,
    auc,
    describe_config,
    knn_score,
    log_mel,
    patchify,
    pauc,
    read_wav,
    run_stage,
    soft_score,
)

__all__ = [
    "Error",
    "Model",
    "arcface_loss",
    "auc",
    "describe_config",
    "knn_score",
    "log_mel",
    "patchify",
    "pauc",
    "read_wav",
    "run_stage",
    "soft_score",
    "run_pipeline",
]

__version__ = "0.1.0"


def run_pipeline(settings=None, verbose=False):
    """Runs synth, train, embed, score and eval; returns the eval report."""
    settings = {k: str(v) for k, v in (settings or {}).items()}
    for stage in ("synth", "train", "embed", "score"):
        run_stage(stage, settings, verbose)
    return run_stage("eval", settings, verbose)
