"""Last-meters bus stop finding: GTFS audits, sign ranging, audio guidance and a paired-trial simulator.

Modules: ``geo`` (spherical geometry, local frame), ``gtfs`` (stops.txt
parsing and mapping audits), ``perception`` (pinhole ranging, synthetic
detections, replay logs), ``guidance`` (tone state machine), ``simulator``
(GPS-follow vs vision-guided trials) and ``stats`` (Wilson and bootstrap
summaries). ``stopfinder.cli`` is the command line.
"""

__version__ = "0.1.0"
