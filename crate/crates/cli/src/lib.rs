//! Library surface of the CLI (placeholder while the core builds).
