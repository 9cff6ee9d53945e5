# Cross-validation partitions
import logging
from typing import List, Sequence, Tuple

from sklearn.model_selection import KFold

logger = logging.getLogger(__name__)


def make_folds(subject_ids: Sequence[str], k: int = 5, seed: int = 0) -> List[Tuple[List[str], List[str]]]:
    """k (train, val) splits; every subject is validated exactly once."""
    ids = sorted(subject_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    if k < 2 or len(ids) < k:
        raise ValueError(f"need at least k={k} subjects (and k >= 2) for {k}-fold cross-validation, got {len(ids)}")
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    folds = []
    for train_index, val_index in splitter.split(ids):
        folds.append(([ids[i] for i in train_index], [ids[i] for i in val_index]))
    logger.debug(f"Validation sizes per fold: {[len(v) for _, v in folds]}")
    return folds
