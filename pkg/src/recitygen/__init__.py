"""Self-hostable participatory street redesign platform: geolabeled feedback
entries, click-driven mask sessions, prompt-conditioned inpainting jobs, and
a crowd-sourced ratings/questionnaire corpus behind a REST API."""

__version__ = "0.1.0"

from .backends import BackendRef, Gateway, InpaintRequest, InpaintResult  # noqa: F401
from .images import ImageBuffer, decode_png, encode_png  # noqa: F401
from .masks import (  # noqa: F401
    AlphaMask,
    BinaryMask,
    connected_components,
    dilate,
    erode,
    feather,
    mask_intersect,
    mask_invert,
    mask_subtract,
    mask_union,
    rle_decode,
    rle_encode,
)
from .segmentation import (  # noqa: F401
    ClickPoint,
    MaskCandidate,
    Polarity,
    SegmentationParams,
    fallback_segment,
)
from .store import GeoPoint, Store, haversine_m, open_store  # noqa: F401
