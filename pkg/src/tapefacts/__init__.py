"""Stylized-fact batteries for intraday trade tapes, in clock-time and event-time."""

__version__ = "0.1.0"
