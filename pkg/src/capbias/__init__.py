"""capbias: capture-bias audits, exposure sweeps, and robustness scoring.

The package covers three stages of an exposure-robustness study:

- auditing an existing photo corpus for capture-settings bias (Exif
  extraction, EV binning, exposure-mode breakdowns),
- planning and simulating controlled exposure sweeps over a settings
  grid, including tether scripts for a real camera,
- scoring model predictions on swept imagery (top-1, oLRP, AP, VQA
  accuracy with faithfulness, and parameter sensitivity).
"""

from capbias.exposure import (
    CameraSettings,
    SweepGrid,
    build_grid,
    compute_ev,
    equivalence_key,
    ev_offset,
    quantize_ev,
)

__version__ = "0.1.0"

__all__ = [
    "CameraSettings",
    "SweepGrid",
    "build_grid",
    "compute_ev",
    "equivalence_key",
    "ev_offset",
    "quantize_ev",
    "__version__",
]
