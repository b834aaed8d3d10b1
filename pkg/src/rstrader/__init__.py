"""rstrader: a deterministic, risk-sensitive trading backtest engine.

Daily pipeline: perceive -> remember -> decide -> size -> execute -> reward
-> reflect, with pluggable agents (deterministic rules or a chat-completion
endpoint) and CR/SR/MDD analytics.
"""

__version__ = "0.1.0"

from .kernels import backend_name

__all__ = ["backend_name", "__version__"]
