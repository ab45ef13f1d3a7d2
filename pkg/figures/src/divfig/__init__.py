"""Figure rendering for divkit artifact files.

Strictly a consumer: the only coupling to the main toolkit is the documented
CSV/JSON schemas (decay_<variant>.csv, effdim.csv, pca_layer<k>.json,
saliency.json).
"""

from .render import FIGURE_KINDS, SchemaError, render

__all__ = ["FIGURE_KINDS", "SchemaError", "render"]
