"""Indexed, array-backed view of a domain's ratings"""

from typing import Optional

import numpy as np

from dualmetric.core.errors import UnknownIdError
from dualmetric.models.dataset import DomainDataset


class RatingTable:
    """
    Array view of a ``DomainDataset`` with id indexes.

    User and item ids are mapped to dense row numbers (sorted id order) so the
    learning code can gather embeddings with integer arrays. Per-user rating
    positions are indexed for the ranking metrics.
    """

    def __init__(
        self,
        dataset: DomainDataset,
        user_ids: Optional[list[str]] = None,
        item_ids: Optional[list[str]] = None,
    ):
        """
        Build indexes over a dataset.

        Args:
            dataset: Source dataset
            user_ids: Row order for users; defaults to the sorted ids of the dataset.
                Pass the id list of a larger dataset to index a split consistently.
            item_ids: Row order for items, as above
        """
        self.dataset = dataset
        self.user_ids: list[str] = list(user_ids) if user_ids is not None else dataset.user_ids()
        self.item_ids: list[str] = list(item_ids) if item_ids is not None else dataset.item_ids()

        # id -> row number
        self.user_index: dict[str, int] = {uid: row for row, uid in enumerate(self.user_ids)}
        self.item_index: dict[str, int] = {iid: row for row, iid in enumerate(self.item_ids)}

        n = len(dataset.ratings)
        self.users = np.empty(n, dtype=np.int64)
        self.items = np.empty(n, dtype=np.int64)
        self.ratings = np.empty(n, dtype=np.float64)
        self._by_user: dict[int, list[int]] = {}

        for pos, record in enumerate(dataset.ratings):
            self.users[pos] = self.user_row(record.user_id)
            self.items[pos] = self.item_row(record.item_id)
            self.ratings[pos] = record.rating
            self._by_user.setdefault(int(self.users[pos]), []).append(pos)

    def __len__(self) -> int:
        return len(self.ratings)

    @property
    def domain_name(self) -> str:
        return self.dataset.domain_name

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def user_row(self, user_id: str) -> int:
        """Row number of a user id"""
        try:
            return self.user_index[user_id]
        except KeyError:
            raise UnknownIdError(f"unknown user {user_id!r} in domain {self.domain_name!r}") from None

    def item_row(self, item_id: str) -> int:
        """Row number of an item id"""
        try:
            return self.item_index[item_id]
        except KeyError:
            raise UnknownIdError(f"unknown item {item_id!r} in domain {self.domain_name!r}") from None

    def positions_for_user(self, row: int) -> list[int]:
        """Rating positions of a user row (empty if the user has no ratings here)"""
        return self._by_user.get(row, [])

    def rated_user_rows(self) -> list[int]:
        """User rows with at least one rating, ascending"""
        return sorted(self._by_user)
