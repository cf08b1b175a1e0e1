from .figures import KINDS, FigureSpec, SchemaError, render

__version__ = "0.1.0"
__all__ = ["KINDS", "FigureSpec", "SchemaError", "render"]
