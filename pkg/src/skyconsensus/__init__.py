"""Opinion-dynamics consensus over trust graphs: mean-field analysis,
synchronous and asynchronous simulation, and an experiment CLI."""

__version__ = "0.1.0"
