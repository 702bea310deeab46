//! Deterministic simulator for a symbiotic blockchain network: resource-sharing
//! radio devices that secure a sharded ledger with backscatter-assisted BFT
//! consensus over a modeled wireless channel.
//!
//! The crate is organized around the data flow of one simulated epoch:
//!
//! * [`channel`] prices individual transmissions (power, success probability,
//!   energy, latency) under distance-based power control and Rayleigh outage.
//! * [`sharding`] plans how many shards to run from a convex energy model and
//!   assigns nodes to shards geographically.
//! * [`services`] turns user-equipment demand and device resource gaps into
//!   symbiotic service requests, matches providers, and settles transactions.
//! * [`ledger`] validates transactions, links blocks with a mock (FNV-based)
//!   hash, and anchors shard tips into a global chain.
//! * [`consensus`] runs one PBFT or backscatter-paired S-PBFT round over lossy
//!   multicasts and reports commit status, energy, and latency.
//! * [`sim`] composes all of the above into seeded multi-run scenarios with
//!   attacker injection and ablation variants.
//! * [`config`] parses the flat `key = value` scenario files, [`report`]
//!   writes the frozen CSV/JSON outputs, and [`plot`] renders the grouped bar
//!   chart SVG.
//!
//! Everything is deterministic: the same configuration and seed produce
//! byte-identical outputs, and paired ablation variants share random streams
//! so that their differences are structural rather than sampling noise.

#![forbid(unsafe_code)]
#![deny(missing_debug_implementations)]
#![warn(missing_docs)]

pub mod channel;
pub mod config;
pub mod consensus;
pub mod ledger;
pub mod plot;
pub mod report;
pub mod rng;
pub mod services;
pub mod sharding;
pub mod sim;
