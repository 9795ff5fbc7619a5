from dsmap.perception.backends import MockBackend, RemoteBackend, load_prompt, make_backend
from dsmap.perception.captions import (
    CaptionResult,
    RelationHint,
    canned_caption,
    caption_from_dict,
    caption_object,
    parse_caption_reply,
)
from dsmap.perception.chat import ChatClient, ChatMessage, ChatRequest, ChatResponse
from dsmap.perception.encoders import cosine, embed_image_crop, embed_text

__all__ = [
    "CaptionResult",
    "ChatClient",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "MockBackend",
    "RelationHint",
    "RemoteBackend",
    "canned_caption",
    "caption_from_dict",
    "caption_object",
    "cosine",
    "embed_image_crop",
    "embed_text",
    "load_prompt",
    "make_backend",
    "parse_caption_reply",
]
