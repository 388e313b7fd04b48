//! Acceptance checks for the laboratory. The checks themselves are the
//! `acceptance` test target; run them with
//! `cargo test -p largen-validation --test acceptance`.
