//! Acceptance checks for `anova-rff`, run with
//! `cargo test -p anova-rff-validation --test acceptance`.
