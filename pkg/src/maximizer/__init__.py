"""
Шаг максимизации: фильтр ребер, жадный выбор точек, псевдо-разметка, отжиг L.
"""

from .pseudo_gt import (
    PseudoLabelMask,
    Selection,
    anneal_L,
    build_pseudo_gt,
    edge_mask,
    greedy_select,
    harris_response,
    nms_select,
    rasterize_selection,
    validate_pseudo_label,
)

__all__ = [
    'PseudoLabelMask',
    'Selection',
    'anneal_L',
    'build_pseudo_gt',
    'edge_mask',
    'greedy_select',
    'harris_response',
    'nms_select',
    'rasterize_selection',
    'validate_pseudo_label',
]
