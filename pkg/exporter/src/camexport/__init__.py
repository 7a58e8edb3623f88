"""camexport: bridges pretrained vision models to the camstats bundle format."""

from .export import Exporter, ExportSpec, export_dataset, export_sample
from .models import ToyNet, load_model

__version__ = "0.1.0"
