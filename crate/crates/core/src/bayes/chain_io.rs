//! Posterior draws on disk: a CSV of scalar parameters (one row per stored
//! state), an optional wide CSV of the latent confounder, and a
//! little-endian binary format holding everything.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

use super::{McmcState, PosteriorChain};

const MAGIC: &[u8; 8] = b"SPCHAIN\0";
pub const CHAIN_FORMAT_VERSION: u32 = 1;

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn write_chain_csv(chain: &PosteriorChain, path: &Path) -> Result<()> {
    let p = chain.draws.first().map_or(0, McmcState::p);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(McmcState::scalar_names(p))?;
    for s in &chain.draws {
        w.write_record(s.scalars().iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_latent_csv(chain: &PosteriorChain, path: &Path) -> Result<()> {
    let n = chain.draws.first().map_or(0, |s| s.u.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=n).map(|i| format!("u{i}")))?;
    for s in &chain.draws {
        w.write_record(s.u.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_error(path, k + 2, format!("`{f}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(parse_error(path, k + 2, "row length differs from header"));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads states written by [`write_chain_csv`], with `U` from
/// [`write_latent_csv`] when given (otherwise `U` is empty).
pub fn read_chain_csv(path: &Path, latent: Option<&Path>) -> Result<Vec<McmcState>> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 11 || (header.len() - 11) % 2 != 0 {
        return Err(parse_error(
            path,
            1,
            format!("unexpected column count {}", header.len()),
        ));
    }
    let p = (header.len() - 11) / 2;
    if header != McmcState::scalar_names(p) {
        return Err(parse_error(
            path,
            1,
            "header does not match the parameter names",
        ));
    }
    let us = match latent {
        Some(lp) => {
            let (_, u_rows) = read_rows(lp)?;
            if u_rows.len() != rows.len() {
                return Err(parse_error(
                    lp,
                    1,
                    "latent draws and scalar draws differ in count",
                ));
            }
            u_rows.into_iter().map(DVector::from_vec).collect()
        }
        None => vec![DVector::zeros(0); rows.len()],
    };
    rows.iter()
        .zip(us)
        .enumerate()
        .map(|(k, (row, u))| {
            McmcState::from_scalars(p, row, u).ok_or_else(|| parse_error(path, k + 2, "bad row"))
        })
        .collect()
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

pub fn write_chain_binary(chain: &PosteriorChain, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let p = chain.draws.first().map_or(0, McmcState::p);
    let n = chain.draws.first().map_or(0, |s| s.u.len());
    w.write_all(MAGIC)?;
    w.write_all(&CHAIN_FORMAT_VERSION.to_le_bytes())?;
    for v in [
        chain.seed,
        chain.n_iter as u64,
        chain.n_burnin as u64,
        chain.thin as u64,
        chain.rejected_invalid,
        p as u64,
        n as u64,
        chain.draws.len() as u64,
    ] {
        put_u64(&mut w, v)?;
    }
    for a in chain.acceptance_rates {
        put_f64(&mut w, a)?;
    }
    for s in &chain.draws {
        for v in s.scalars().into_iter().chain(s.u.iter().copied()) {
            put_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

struct ByteReader<'a, R> {
    r: R,
    path: &'a Path,
}

impl<R: Read> ByteReader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|_| parse_error(self.path, 0, "truncated chain file"))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_chain_binary(path: &Path) -> Result<PosteriorChain> {
    let mut r = ByteReader {
        r: BufReader::new(File::open(path)?),
        path,
    };
    if &r.bytes::<8>()? != MAGIC {
        return Err(parse_error(path, 0, "not a chain file"));
    }
    let version = u32::from_le_bytes(r.bytes()?);
    if version != CHAIN_FORMAT_VERSION {
        return Err(parse_error(
            path,
            0,
            format!("unsupported chain format version {version}"),
        ));
    }
    let seed = r.u64()?;
    let n_iter = r.u64()? as usize;
    let n_burnin = r.u64()? as usize;
    let thin = r.u64()? as usize;
    let rejected_invalid = r.u64()?;
    let p = r.u64()? as usize;
    let n = r.u64()? as usize;
    let n_draws = r.u64()? as usize;
    let mut acceptance_rates = [0.0; 5];
    for a in &mut acceptance_rates {
        *a = r.f64()?;
    }
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let scalars = (0..11 + 2 * p)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        let u = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        draws.push(
            McmcState::from_scalars(p, &scalars, DVector::from_vec(u))
                .expect("length fixed by header"),
        );
    }
    if r.r.read(&mut [0u8; 1])? != 0 {
        return Err(parse_error(path, 0, "trailing bytes after the last draw"));
    }
    Ok(PosteriorChain {
        draws,
        acceptance_rates,
        seed,
        n_iter,
        n_burnin,
        thin,
        rejected_invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> PosteriorChain {
        let draws = (0..5)
            .map(|k| {
                let k = k as f64;
                McmcState {
                    beta0: 0.1 * k,
                    beta_z: 1.0 / 3.0 + k,
                    beta_zbar: -k,
                    beta_ubar: 0.01,
                    beta_c: vec![k, 2.0 * k],
                    gamma0: std::f64::consts::PI,
                    gamma_c: vec![-1e-300, 1e300],
                    sigma_y2: 1.5,
                    tau_u: 0.9,
                    tau_z: 1.1,
                    phi_u: 0.3,
                    phi_z: 0.5,
                    rho: -0.1,
                    u: DVector::from_vec(vec![k, -k, 0.123456789012345]),
                }
            })
            .collect();
        PosteriorChain {
            draws,
            acceptance_rates: [0.3, 0.31, 0.32, 0.33, 0.34],
            seed: 42,
            n_iter: 400,
            n_burnin: 100,
            thin: 60,
            rejected_invalid: 7,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("draws.csv"), dir.path().join("u.csv"));
        let c = chain();
        write_chain_csv(&c, &a).unwrap();
        write_latent_csv(&c, &b).unwrap();
        assert_eq!(read_chain_csv(&a, Some(&b)).unwrap(), c.draws);
        let scalars_only = read_chain_csv(&a, None).unwrap();
        assert_eq!(scalars_only[2].beta_z, c.draws[2].beta_z);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        let c = chain();
        write_chain_binary(&c, &path).unwrap();
        assert_eq!(read_chain_binary(&path).unwrap(), c);
    }

    #[test]
    fn binary_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        std::fs::write(&path, b"hello").unwrap();
        assert!(read_chain_binary(&path).is_err());
        write_chain_binary(&chain(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_chain_binary(&path), Err(Error::Parse { .. })));
    }
}
