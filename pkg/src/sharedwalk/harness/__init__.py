"""Scripted policies, experiment runner, telemetry service, and CLI."""
