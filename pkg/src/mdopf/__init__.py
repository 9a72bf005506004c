"""Multiphase distribution OPF toolkit.

Core pieces: an immutable radial network model (``network``), feeder JSON
ingestion and CSV emission (``feeder``), delta-connection algebra
(``deltawye``), voltage-dependent load models (``loads``), the linearized
branch-flow solver (``linear_model``), the exact sweep oracle (``ac_sweep``)
and the reproducible error studies (``experiments``). A FastAPI service
(``mdopf.service``) wraps the package; the ``mdopf`` CLI is a thin client.
"""

__version__ = "0.1.0"
