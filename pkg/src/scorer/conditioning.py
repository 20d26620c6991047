"""
Closed-vocabulary conditioning: light direction index and object category

The prompt template "A photo of {category} with {i} lighting" carries no information
beyond the two indices, so the scorer embeds the indices directly. A missing component
maps to a dedicated null token.
"""
from typing import Optional, Tuple

import torch
from pydantic import BaseModel, Field

from src.minirelit.renderer import NUM_DIRECTIONS
from src.minirelit.scene import CATEGORY_NAMES, NUM_CATEGORIES

# Token ids used for the unconditional branch
NULL_DIRECTION = NUM_DIRECTIONS
NULL_CATEGORY = NUM_CATEGORIES


class ConditionSpec(BaseModel):
    """Direction index in [0, 12) and category id, either of which may be None (null token)"""

    direction_index: Optional[int] = Field(default=None, ge=0, lt=NUM_DIRECTIONS)
    category_id: Optional[int] = Field(default=None, ge=0, lt=NUM_CATEGORIES)

    @classmethod
    def null(cls) -> "ConditionSpec":
        return cls()

    @property
    def is_null(self) -> bool:
        return self.direction_index is None and self.category_id is None

    def tokens(self, batch: int, device: torch.device = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Direction and category token ids, each of shape (batch,)"""
        direction = NULL_DIRECTION if self.direction_index is None else self.direction_index
        category = NULL_CATEGORY if self.category_id is None else self.category_id
        return (
            torch.full((batch,), direction, dtype=torch.long, device=device),
            torch.full((batch,), category, dtype=torch.long, device=device),
        )


def describe_condition(cond: ConditionSpec) -> str:
    """Render a condition with the prompt template used for logs and reports"""
    category = "an object" if cond.category_id is None else CATEGORY_NAMES[cond.category_id]
    if cond.direction_index is None:
        return f"A photo of {category}"
    return f"A photo of {category} with {cond.direction_index} lighting"
