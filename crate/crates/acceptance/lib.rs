//! Holder package for the acceptance target; no library code.
