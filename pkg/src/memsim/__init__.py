"""Behavioural simulation of a three-OTA memcapacitor emulator."""
__version__ = "0.1.0"
