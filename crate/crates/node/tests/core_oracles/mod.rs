#![allow(dead_code)]

//! Reference models shared with the core crate's tests.

#[path = "../../../core/tests/common/mod.rs"]
pub mod common;
#[path = "../../../core/tests/common/acl_oracle.rs"]
pub mod acl;
#[path = "../../../core/tests/common/mvcc_oracle.rs"]
pub mod mvcc;
