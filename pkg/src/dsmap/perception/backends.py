"""Backend selection: deterministic mocks, or a remote chat-completion model."""
from __future__ import annotations

import json
import re
from importlib import resources
from string import Template

from dsmap.perception import encoders
from dsmap.perception.chat import ChatClient

BACKENDS = ("mock", "remote")


def load_prompt(name: str) -> Template:
    text = resources.files("dsmap.perception").joinpath("prompts", f"{name}.txt").read_text("utf-8")
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return Template(body.strip() + "\n")


def extract_json(text: str):
    """Parse the first JSON object in a model reply, tolerating code fences."""
    text = re.sub(r"```(?:json)?", "", text or "")
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in reply")
    return json.loads(text[start:end + 1])


class MockBackend:
    """Pure-function backend: seeded encoders and rule-based language steps."""

    remote = False
    name = "mock"

    def __init__(self, text_dim: int = encoders.TEXT_DIM):
        self.text_dim = text_dim

    def embed_text(self, text: str):
        return encoders.embed_text(text, self.text_dim)

    def embed_image_crop(self, color_image, mask):
        return encoders.embed_image_crop(color_image, mask)


class RemoteBackend(MockBackend):
    """Sends language/vision steps to a chat model; encoders stay local."""

    remote = True
    name = "remote"

    def __init__(self, client: ChatClient, text_dim: int = encoders.TEXT_DIM):
        super().__init__(text_dim)
        self.client = client

    def ask(self, prompt_name: str, images=(), **fields) -> str:
        prompt = load_prompt(prompt_name).substitute(**fields)
        return self.client.ask(prompt, images=images)


def make_backend(kind: str = "mock", **kwargs):
    if kind == "mock":
        return MockBackend(**kwargs)
    if kind == "remote":
        return RemoteBackend(ChatClient.from_env(), **kwargs)
    raise ValueError(f"unknown backend {kind!r}; choose from {', '.join(BACKENDS)}")
