//! Compile-checks the code snippets in the user guide (`book/`).
//!
//! Each chapter of the guide is included as a doc string below, so
//! `cargo test` runs every fenced Rust snippet in the book and the guide
//! can never drift out of sync with the library API.
