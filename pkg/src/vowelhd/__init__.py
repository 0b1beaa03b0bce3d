"""Vowel distortion features for premanifest vs. manifest Huntington disease."""

__version__ = "0.1.0"
