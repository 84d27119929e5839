"""Discrete-event simulator of ECN-driven video rate adaptation with edge admission control."""
