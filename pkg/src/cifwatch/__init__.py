"""Monitoring critical infrastructure facilities from disaster-time social media."""

__version__ = "0.1.0"
