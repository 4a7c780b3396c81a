"""Music-induced emotion study toolkit.

Subpackages cover the full pipeline: prompt enumeration and stimulus
generation (promptgen), evaluator screening (screening), musical feature
extraction (audio_features), biosignal preprocessing (sigproc), derived
features and statistics (analysis), classification benchmarks
(recognition), the timed collection session engine (session), and the
HTTP service wrapping it (service).
"""

__version__ = "0.1.0"
