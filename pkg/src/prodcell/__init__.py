"""Production cell controller on a multiway rendezvous engine, with a simulator."""

__version__ = "0.1.0"
