//! Pumping pipeline orchestration (stub).
