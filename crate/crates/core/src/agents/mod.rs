//! Deployable policies.
