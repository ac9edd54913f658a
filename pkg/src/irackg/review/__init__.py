"""SME quality-review backend: batches, grading, derived relation verdicts,
and quality tables."""

from .models import (  # noqa: F401
    EntityGrade,
    ItemKind,
    ItemRef,
    RecordGrade,
    RelationVerdictValue,
    ReviewBatch,
    ReviewItem,
    ReviewLabel,
)
from .service import (  # noqa: F401
    ClosedBatch,
    InsufficientCases,
    ReviewStore,
    UnknownItem,
    build_items_for_graph,
    create_review_batch,
)
