"""Shared helpers: the run logger used by the flow and cli packages"""
from .logger import Logger

__all__ = ["Logger"]
