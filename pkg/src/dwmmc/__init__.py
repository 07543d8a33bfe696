"""Domain-wall memristor Monte Carlo: device physics, push-pull SGLD and baselines."""

__version__ = "0.1.0"
