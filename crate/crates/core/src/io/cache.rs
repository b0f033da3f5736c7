//! On-disk cache of computed bases, keyed by a fingerprint of everything the
//! eigenpairs depend on (lambda excluded).
//!
//! ```text
//! mems-basis 1
//! key <canonical key>
//! sha256 <digest of the lines below>
//! k <K>
//! nodes <grid length>
//! eigenvalues <lambda_1> ... <lambda_K>
//! omega <omega_k(x_0)> ... <omega_k(x_N)>        (K lines)
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trajectory::fmt_f64;
use crate::error::{Error, Result};
use crate::spectrum::{
    assemble_operator, compute_spectrum, BoundaryCondition, Domain, Grid, LaplacianStencil, OperatorSpec,
    SpectralBasis, BASIS_VERSION,
};

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const CACHE_DIR_ENV: &str = "MEMS_CACHE_DIR";
const MAGIC: &str = "mems-basis";
/// Re-check thresholds applied to every basis read back from disk.
pub const ORTHONORMALITY_RECHECK: f64 = 1e-8;
pub const DIAGONALITY_RECHECK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    /// No cache directory configured.
    Disabled,
    Hit,
    Miss,
    /// A cached file existed but failed its checks and was overwritten.
    Recomputed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheOutcome {
    pub fingerprint: String,
    pub status: CacheStatus,
    pub eigensolve_performed: bool,
    pub path: Option<PathBuf>,
    /// Why a cached file was rejected, when it was.
    pub rejected: Option<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_hex(s: &str) -> String {
    hex(&Sha256::digest(s.as_bytes()))
}

/// Canonical description of the discrete eigenproblem.
pub fn basis_key(spec: &OperatorSpec, grid: &Grid, k: usize) -> String {
    let domain = match spec.domain() {
        Domain::Interval { length } => format!("interval:{}", fmt_f64(length)),
        Domain::RadialBall => "radial_ball".to_string(),
    };
    let bc = match spec.bc() {
        BoundaryCondition::Dirichlet => "dirichlet",
        BoundaryCondition::Navier => "navier",
    };
    let stencil = match grid.stencil() {
        LaplacianStencil::Standard => "standard",
        LaplacianStencil::Corrected => "corrected",
    };
    format!(
        "basis_version={BASIS_VERSION};beta={};tau={};domain={domain};bc={bc};dim_n={};n={};stencil={stencil};k={k}",
        fmt_f64(spec.beta()),
        fmt_f64(spec.tau()),
        spec.dim_n(),
        grid.resolution(),
    )
}

/// Hex SHA-256 of the basis key.
pub fn basis_fingerprint(spec: &OperatorSpec, grid: &Grid, k: usize) -> String {
    sha256_hex(&basis_key(spec, grid, k))
}

pub fn cache_path(cache_dir: &Path, fingerprint: &str) -> PathBuf {
    cache_dir.join(format!("basis-{}.txt", &fingerprint[..32]))
}

fn check_grid(spec: &OperatorSpec, grid: &Grid) -> Result<()> {
    if grid.domain() != spec.domain() || grid.dim_n() != spec.dim_n() {
        return Err(Error::DimensionMismatch("grid was built for a different domain".into()));
    }
    Ok(())
}

pub fn format_basis(basis: &SpectralBasis) -> String {
    let key = basis_key(basis.spec(), basis.grid(), basis.k());
    let mut body = format!("k {}\nnodes {}\n", basis.k(), basis.grid().len());
    let line = |tag: &str, xs: &[f64]| {
        format!("{tag} {}\n", xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" "))
    };
    body += &line("eigenvalues", basis.eigenvalues());
    for f in basis.eigenfunctions() {
        body += &line("omega", f);
    }
    format!("{MAGIC} {CACHE_FORMAT_VERSION}\nkey {key}\nsha256 {}\n{body}", sha256_hex(&body))
}

/// Parse a cached basis and re-check it; any defect is `CacheCorrupt`.
pub fn parse_basis(text: &str, spec: &OperatorSpec, grid: &Grid, k: usize) -> Result<SpectralBasis> {
    check_grid(spec, grid)?;
    let corrupt = |m: String| Error::CacheCorrupt(m);
    let mut parts = text.splitn(4, '\n');
    let mut next = || parts.next().unwrap_or("");
    let head = next();
    match head.split_once(' ') {
        Some((MAGIC, v)) => {
            let found: u32 = v.trim().parse().map_err(|_| corrupt(format!("bad version '{v}'")))?;
            if found != CACHE_FORMAT_VERSION {
                return Err(Error::FormatVersionMismatch {
                    found,
                    supported: CACHE_FORMAT_VERSION,
                });
            }
        }
        _ => return Err(corrupt("not a basis cache file".into())),
    }
    let key = next();
    let want = format!("key {}", basis_key(spec, grid, k));
    if key != want {
        return Err(corrupt(format!("header mismatch: file has '{key}', need '{want}'")));
    }
    let digest = next().strip_prefix("sha256 ").unwrap_or("");
    let body = next();
    if sha256_hex(body) != digest {
        return Err(corrupt("checksum mismatch".into()));
    }
    let mut lines = body.lines();
    let mut numbers = |tag: &str, len: usize| -> Result<Vec<f64>> {
        let l = lines.next().ok_or_else(|| corrupt(format!("missing '{tag}' line")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(tag) {
            return Err(corrupt(format!("expected '{tag}' line")));
        }
        let xs = it
            .map(|s| s.parse::<f64>().map_err(|_| corrupt(format!("bad number '{s}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if xs.len() != len || xs.iter().any(|x| !x.is_finite()) {
            return Err(corrupt(format!("'{tag}' line has the wrong length or non-finite entries")));
        }
        Ok(xs)
    };
    let kk = numbers("k", 1)?;
    let nodes = numbers("nodes", 1)?;
    if kk[0] != k as f64 || nodes[0] != grid.len() as f64 {
        return Err(corrupt("size line disagrees with the request".into()));
    }
    let eigenvalues = numbers("eigenvalues", k)?;
    let funcs = (0..k).map(|_| numbers("omega", grid.len())).collect::<Result<Vec<_>>>()?;
    let op = assemble_operator(spec, grid)?;
    let basis = SpectralBasis::from_parts(*spec, grid.clone(), eigenvalues, funcs, Arc::new(op))?;
    let orth = basis.orthonormality_defect();
    let lam_k = basis.eigenvalues()[k - 1];
    let diag = basis.energy_diagonality_defect();
    if !(orth < ORTHONORMALITY_RECHECK) {
        return Err(corrupt(format!("orthonormality re-check failed: defect {orth:e}")));
    }
    if !(diag < DIAGONALITY_RECHECK * lam_k) {
        return Err(corrupt(format!("energy-diagonality re-check failed: defect {diag:e}")));
    }
    Ok(basis)
}

/// Load a cached basis from `path`.
pub fn load_basis(path: &Path, spec: &OperatorSpec, grid: &Grid, k: usize) -> Result<SpectralBasis> {
    parse_basis(&fs::read_to_string(path)?, spec, grid, k)
}

/// Cached basis when a valid file exists, otherwise a fresh eigensolve stored for next time.
pub fn basis_cache(
    spec: &OperatorSpec,
    grid: &Grid,
    k: usize,
    cache_dir: &Path,
) -> Result<(SpectralBasis, CacheOutcome)> {
    check_grid(spec, grid)?;
    if !cache_dir.is_dir() {
        return Err(Error::ConfigInvalid(format!(
            "cache_dir: '{}' is not an existing directory",
            cache_dir.display()
        )));
    }
    let fingerprint = basis_fingerprint(spec, grid, k);
    let path = cache_path(cache_dir, &fingerprint);
    let mut rejected = None;
    if path.exists() {
        match load_basis(&path, spec, grid, k) {
            Ok(basis) => {
                return Ok((
                    basis,
                    CacheOutcome {
                        fingerprint,
                        status: CacheStatus::Hit,
                        eigensolve_performed: false,
                        path: Some(path),
                        rejected: None,
                    },
                ))
            }
            Err(e @ (Error::CacheCorrupt(_) | Error::FormatVersionMismatch { .. })) => rejected = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    let basis = compute_spectrum(spec, grid, k)?;
    // Write then rename so a concurrent reader never sees half a file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, format_basis(&basis))?;
    fs::rename(&tmp, &path)?;
    Ok((
        basis,
        CacheOutcome {
            fingerprint,
            status: if rejected.is_some() { CacheStatus::Recomputed } else { CacheStatus::Miss },
            eigensolve_performed: true,
            path: Some(path),
            rejected,
        },
    ))
}

/// Uncached computation with the same outcome record.
pub fn basis_uncached(spec: &OperatorSpec, grid: &Grid, k: usize) -> Result<(SpectralBasis, CacheOutcome)> {
    check_grid(spec, grid)?;
    let basis = compute_spectrum(spec, grid, k)?;
    Ok((
        basis,
        CacheOutcome {
            fingerprint: basis_fingerprint(spec, grid, k),
            status: CacheStatus::Disabled,
            eigensolve_performed: true,
            path: None,
            rejected: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::build_grid;

    fn setup(tau: f64) -> (OperatorSpec, Grid) {
        let spec = OperatorSpec::interval(1.0, tau, 0.0, BoundaryCondition::Navier).unwrap();
        (spec, build_grid(spec.domain(), 1, 64).unwrap())
    }

    #[test]
    fn second_call_hits() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, grid) = setup(0.0);
        let (a, first) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        assert_eq!(first.status, CacheStatus::Miss);
        let (b, second) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        assert_eq!(second.status, CacheStatus::Hit);
        assert!(!second.eigensolve_performed);
        assert_eq!(a.eigenvalues(), b.eigenvalues());
        assert_eq!(a.eigenfunctions(), b.eigenfunctions());
    }

    #[test]
    fn lambda_does_not_change_the_key() {
        let (spec, grid) = setup(1.0);
        let hot = spec.with_lambda(3.0).unwrap();
        assert_eq!(basis_fingerprint(&spec, &grid, 8), basis_fingerprint(&hot, &grid, 8));
        let (other, _) = setup(1.5);
        assert_ne!(basis_fingerprint(&spec, &grid, 8), basis_fingerprint(&other, &grid, 8));
    }

    #[test]
    fn tau_mismatch_in_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, grid) = setup(0.0);
        let (_, out) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        let path = out.path.unwrap();
        let (other, _) = setup(1.0);
        assert!(matches!(load_basis(&path, &other, &grid, 8), Err(Error::CacheCorrupt(_))));
    }

    #[test]
    fn corrupted_value_triggers_recompute() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, grid) = setup(0.0);
        let (good, out) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        let path = out.path.unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let omega_line = text.lines().position(|l| l.starts_with("omega ")).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut parts: Vec<String> = lines[omega_line].split(' ').map(String::from).collect();
        parts[10] = fmt_f64(parts[10].parse::<f64>().unwrap() + 0.25);
        lines[omega_line] = parts.join(" ");
        // Recompute the checksum so that only the orthonormality re-check can catch it.
        let body: String = lines[3..].iter().map(|l| format!("{l}\n")).collect();
        lines[2] = format!("sha256 {}", sha256_hex(&body));
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        match load_basis(&path, &spec, &grid, 8) {
            Err(Error::CacheCorrupt(m)) => assert!(m.contains("orthonormality"), "{m}"),
            other => panic!("expected CacheCorrupt, got {other:?}"),
        }
        let (again, out) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        assert_eq!(out.status, CacheStatus::Recomputed);
        assert_eq!(again.eigenfunctions(), good.eigenfunctions());
        let (_, out) = basis_cache(&spec, &grid, 8, dir.path()).unwrap();
        assert_eq!(out.status, CacheStatus::Hit);
    }
}
