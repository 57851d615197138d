from __future__ import annotations

import pytest

from lark_engine.core import Strategy, Tokenizer, make_scenario, make_strategy


@pytest.fixture
def tokenizer():
    return Tokenizer("whitespace")


def strategy(
    id: str = "s1",
    text: str = "one two three",
    origin: str = "seed",
    parent_id: str | None = None,
    generation_born: int = 0,
) -> Strategy:
    return make_strategy(
        id=id,
        text=text,
        tokenizer=Tokenizer("whitespace"),
        origin=origin,
        parent_id=parent_id,
        generation_born=generation_born,
    )


def tiny_scenario(
    *,
    id: str = "scn-test",
    weights: tuple[float, ...] = (1.0, 1.0),
    target_tokens: int = 50,
    penalty_lambda: float = 0.5,
    extensions: dict | None = None,
):
    stakeholders = [
        (f"sh{i + 1}", f"persona {i + 1}", w) for i, w in enumerate(weights)
    ]
    return make_scenario(
        id=id,
        context="A small committee must choose one plan.",
        objectives=["improve outreach coverage", "contain budget growth"],
        stakeholders=stakeholders,
        domain_tag="policy-proposal",
        target_tokens=target_tokens,
        penalty_lambda=penalty_lambda,
        extensions=extensions,
    )


@pytest.fixture
def scenario():
    return tiny_scenario()
