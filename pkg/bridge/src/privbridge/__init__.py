"""privshift-bridge: full-fidelity adapter between pretrained language models
and the DP rewriting toolkit.

``bridge embed`` extracts per-token contextual embeddings into the toolkit's
JSONL format; ``bridge serve`` exposes raw next-token and masked-position
logits over the remote provider protocol. All DP processing (clipping,
temperature, sampling) stays in the core toolkit.
"""

from .config import BridgeConfig
from .embed import EmbedSummary, embed_batch
from .server import create_app, serve

__version__ = "0.1.0"
