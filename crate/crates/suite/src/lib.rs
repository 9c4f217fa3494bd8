//! End-to-end acceptance suite; see `tests/acceptance.rs`. Kept in its own
//! package so it runs after every other test binary of the workspace.
