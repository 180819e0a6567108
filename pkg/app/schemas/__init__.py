"""Schema definitions package"""

__all__ = ['report_v1']
