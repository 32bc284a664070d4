//! Acceptance checks for `dpsgd-lab`; see `tests/acceptance.rs`.
