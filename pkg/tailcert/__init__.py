# Tail certificates for push-forward generative models
__version__ = "1.0.0"

from .certificates import TailCertificate, evaluate, quantile
from .network import FeedForwardNetwork, certified_lipschitz, forward

__all__ = [
    "__version__",
    "FeedForwardNetwork",
    "TailCertificate",
    "certified_lipschitz",
    "evaluate",
    "forward",
    "quantile",
]
