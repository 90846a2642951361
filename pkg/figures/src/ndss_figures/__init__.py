"""Figure rendering for ndss experiment CSVs (read-only consumer)."""

__version__ = "0.1.0"

from .render import (EmptyCsvError, FigureJob, SchemaMismatchError, prepare,
                     render)
