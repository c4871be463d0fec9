"""Near-critical planar Ising model: exact enumeration, random currents,
backbone exploration, FK clusters, discrete extremal length and scaling scans."""

__version__ = "1.0.0"
