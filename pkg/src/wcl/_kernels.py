"""Select the compiled CCL kernel when it was built, else the Python one."""
from . import unionfind

try:
    from ._ccl_ext import label_components
    BACKEND = "cython"
except ImportError:  # extension not built
    label_components = unionfind.label_components
    BACKEND = "python"

python_label_components = unionfind.label_components

__all__ = ["BACKEND", "label_components", "python_label_components"]
