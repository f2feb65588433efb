//! Library side of the `dapsm` command-line tool: CSV input and output,
//! provenance headers and the subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod data;
pub mod error;
pub mod provenance;
