"""Monte Carlo simulation and techno-economic evaluation of QKD-secured grid networks."""

__version__ = "0.1.0"
