//! Word-to-frontier order-decreasing transformations (stub).
