#!/usr/bin/env python3
"""Adapter fixture: every invocation fails with a recognizable stderr line."""
import sys

print("boom: synthetic adapter failure", file=sys.stderr)
sys.exit(1)
