//! Configuration files, persisted results and the basis cache.

mod cache;
mod config;
mod run;
mod trajectory;

pub use cache::{
    basis_cache, basis_fingerprint, basis_key, basis_uncached, cache_path, format_basis, load_basis, parse_basis,
    CacheOutcome, CacheStatus, CACHE_DIR_ENV, CACHE_FORMAT_VERSION, DIAGONALITY_RECHECK, ORTHONORMALITY_RECHECK,
};
pub use config::{
    CertifyMode, CertifySection, Command, Initial, Numerics, Overrides, PicardSection, RunConfig, SweepSection,
};
pub use run::{grid_for, resolve_cache_dir, run, RunManifest, MANIFEST_FILE, MANIFEST_VERSION};
pub use trajectory::{format_trajectory, parse_trajectory, read_trajectory, write_trajectory, TRAJECTORY_FORMAT_VERSION};
