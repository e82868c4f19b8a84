//! Tab-delimited plot files derived from the bundle tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use crate::bundle::read_csv;
use crate::pipeline::RunError;

pub const PLOT_DIR: &str = "plot";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Quantity {
    OmegaProfile,
    OverlapSpectrum,
    Populations,
    Residuals,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::OmegaProfile => "omega_profile",
            Quantity::OverlapSpectrum => "overlap_spectrum",
            Quantity::Populations => "populations",
            Quantity::Residuals => "residuals",
        }
    }
}

fn missing(bundle: &Path, what: &str) -> RunError {
    RunError::MissingQuantity(format!("{what} not found in bundle {}", bundle.display()))
}

fn load(bundle: &Path, table: &str, quantity: Quantity) -> Result<(Vec<String>, Vec<Vec<String>>), RunError> {
    let path = bundle.join(format!("{table}.csv"));
    if !path.is_file() {
        return Err(missing(bundle, &format!("{} (table {table}.csv)", quantity.name())));
    }
    Ok(read_csv(&path)?)
}

fn write_dat(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", header.join("\t"))?;
    for r in rows {
        writeln!(f, "{}", r.join("\t"))?;
    }
    f.flush()
}

fn column(header: &[String], name: &str) -> io::Result<usize> {
    header
        .iter()
        .position(|h| h == name || h.starts_with(&format!("{name} [")))
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("column {name} missing")))
}

/// Writes the plot files for `quantity` under `<bundle>/plot` and returns
/// their paths.
pub fn emit_plot_data(bundle: &Path, quantity: Quantity) -> Result<Vec<PathBuf>, RunError> {
    let out = bundle.join(PLOT_DIR);
    let mut written = Vec::new();
    match quantity {
        Quantity::OmegaProfile => {
            let (h, rows) = load(bundle, "omega_profile", quantity)?;
            let (e, cols) = (column(&h, "emitter")?, [column(&h, "omega")?, column(&h, "Omega_e")?, column(&h, "Omega_m")?, column(&h, "Omega")?]);
            let mut per: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
            for r in &rows {
                let k: usize = r[e].parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad emitter index"))?;
                per.entry(k).or_default().push(cols.iter().map(|&c| r[c].clone()).collect());
            }
            fs::create_dir_all(&out)?;
            let header: Vec<String> = cols.iter().map(|&c| h[c].clone()).collect();
            for (k, data) in per {
                let p = out.join(format!("omega_profile_{k}.dat"));
                write_dat(&p, &header, &data)?;
                written.push(p);
            }
        }
        Quantity::OverlapSpectrum => {
            let (h, rows) = load(bundle, "eigenvalues", quantity)?;
            let (nc, oc, ic, lc) = (column(&h, "node")?, column(&h, "omega")?, column(&h, "index")?, column(&h, "lambda")?);
            let mut per: BTreeMap<usize, (String, Vec<(usize, String)>)> = BTreeMap::new();
            let mut width = 0;
            for r in &rows {
                let bad = || io::Error::new(io::ErrorKind::InvalidData, "bad index");
                let q: usize = r[nc].parse().map_err(|_| bad())?;
                let i: usize = r[ic].parse().map_err(|_| bad())?;
                width = width.max(i + 1);
                per.entry(q).or_insert_with(|| (r[oc].clone(), Vec::new())).1.push((i, r[lc].clone()));
            }
            let unit = h[lc].find(" [").map(|i| h[lc][i..].to_string()).unwrap_or_default();
            let mut header = vec![h[oc].clone()];
            header.extend((1..=width).map(|i| format!("lambda_{i}{unit}")));
            let data: Vec<Vec<String>> = per
                .into_values()
                .map(|(w, vals)| {
                    let mut row = vec![w];
                    let mut lam = vec!["NaN".to_string(); width];
                    for (i, v) in vals {
                        lam[i] = v;
                    }
                    row.extend(lam);
                    row
                })
                .collect();
            fs::create_dir_all(&out)?;
            let p = out.join("overlap_spectrum.dat");
            write_dat(&p, &header, &data)?;
            written.push(p);
        }
        Quantity::Populations => {
            let mut found = false;
            for model in ["full-em", "double-bright", "hybrid"] {
                let path = bundle.join(format!("populations_{model}.csv"));
                if !path.is_file() {
                    continue;
                }
                found = true;
                let (h, rows) = read_csv(&path)?;
                fs::create_dir_all(&out)?;
                let p = out.join(format!("populations_{model}.dat"));
                write_dat(&p, &h, &rows)?;
                written.push(p);
            }
            if !found {
                return Err(missing(bundle, "populations (no populations_*.csv tables)"));
            }
        }
        Quantity::Residuals => {
            let (h, rows) = load(bundle, "residuals", quantity)?;
            let cols = [column(&h, "identity")?, column(&h, "omega")?, column(&h, "relative")?, column(&h, "tolerance")?, column(&h, "pass")?];
            let header: Vec<String> = cols.iter().map(|&c| h[c].clone()).collect();
            let data: Vec<Vec<String>> = rows.iter().map(|r| cols.iter().map(|&c| r[c].clone()).collect()).collect();
            fs::create_dir_all(&out)?;
            let p = out.join("residuals.dat");
            write_dat(&p, &header, &data)?;
            written.push(p);
        }
    }
    Ok(written)
}
