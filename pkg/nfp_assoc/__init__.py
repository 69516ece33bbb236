"""Association of networked flying platforms (fronthaul hubs) with small cells."""

__version__ = "1.0.0"
