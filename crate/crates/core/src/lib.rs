//! Core of the pod protocol: replicas timestamp and sign transactions, clients
//! aggregate the votes into per-transaction confirmation bounds and a
//! past-perfect round, and anyone can re-check a client's output from the
//! certificates it carries.
//!
//! Also contains the accountability checks, the bidset auction layer built on
//! top of a pod, and a deterministic round-based simulator.

pub mod accountability;
pub mod bidset;
pub mod client;
pub mod codec;
pub mod crypto;
pub mod frame;
pub mod mutation;
pub mod quorum;
pub mod replica;
pub mod serialize;
pub mod simnet;
pub mod types;
pub mod validator;

pub use client::{monotone_merge, Client, ClientConfig, Evidence, VoteOutcome};
pub use crypto::{KeyPair, PublicKey, Scheme, SecretKey, Signature};
pub use replica::{ClientId, Replica};
pub use types::{
    heartbeat_tx, median_of, Certificates, Committee, FaultProfile, PodData, ProfileError, ReplicaId, Round, SeqNum,
    SessionId, TransactionTrace, Tx, UpperRound, View, Vote,
};
pub use validator::{valid, valid_view, InvalidReason};
