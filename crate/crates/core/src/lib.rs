//! Storage gateway that enforces hierarchical role-based access control with
//! envelope encryption. Each object is sealed under its own AES-128-GCM data
//! key, which is wrapped with RSA-OAEP for every role allowed to read it.
//! Bulk ciphertext goes to a public blob store. Policy, keys, metadata and
//! confidential objects stay in a private store. Every decision is appended
//! to a hash-chained audit log before it takes effect.
//!
//! [`gateway::Gateway`] is the entry point; the other modules are its parts.

pub mod audit;
pub mod bench;
pub mod crypto;
pub mod demo;
pub mod gateway;
pub mod integrity;
pub mod policy;
pub mod service;
pub mod store;
