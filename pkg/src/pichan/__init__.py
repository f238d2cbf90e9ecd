"""pichan: a pi-calculus language toolchain with explicit fusions,
protocol-typed extern channels and an XML execution format."""

__version__ = "0.1.0"
