"""Cross-domain recommendation with orthogonal dual metric learning"""
