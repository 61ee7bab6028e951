//! Holds the `acceptance` test target, which runs numbered end-to-end
//! criteria against `mcs-core` and prints one pass/fail line per criterion:
//!
//! ```text
//! cargo test -p mcs-validation --test acceptance
//! ```
