"""Evaluation modality modes."""

import enum


class ModalityMode(str, enum.Enum):
    """The five evaluated input configurations, in report row order."""

    INFRARED_ONLY = "infrared"
    VISIBLE_ONLY = "visible"
    GENERATED_VISIBLE_ONLY = "generated-visible"
    FUSION_REAL_VISIBLE = "fusion-real"
    FUSION_GENERATED_VISIBLE = "fusion-generated"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def uses_single_head(self) -> bool:
        return self in SINGLE_HEAD_MODES

    @property
    def needs_real_visible(self) -> bool:
        return self in (ModalityMode.VISIBLE_ONLY, ModalityMode.FUSION_REAL_VISIBLE)


_LABELS = {
    ModalityMode.INFRARED_ONLY: "Infrared",
    ModalityMode.VISIBLE_ONLY: "Visible",
    ModalityMode.GENERATED_VISIBLE_ONLY: "Generated visible",
    ModalityMode.FUSION_REAL_VISIBLE: "Infrared + visible",
    ModalityMode.FUSION_GENERATED_VISIBLE: "Infrared + generated visible",
}

SINGLE_HEAD_MODES = (
    ModalityMode.INFRARED_ONLY,
    ModalityMode.VISIBLE_ONLY,
    ModalityMode.GENERATED_VISIBLE_ONLY,
)

# Row order of the ablation table
TABLE_ORDER = (
    ModalityMode.INFRARED_ONLY,
    ModalityMode.VISIBLE_ONLY,
    ModalityMode.GENERATED_VISIBLE_ONLY,
    ModalityMode.FUSION_REAL_VISIBLE,
    ModalityMode.FUSION_GENERATED_VISIBLE,
)
