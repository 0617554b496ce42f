"""Initialize utils package."""
from .file_ops import *
