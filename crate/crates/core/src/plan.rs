//! Neighbour selection, reference choice and Lagrange interpolation weights.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CaseEntry {
    pub parameter: f64,
    pub path: Option<PathBuf>,
}

/// The available cases, the target parameter and the interpolation order.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseCatalog {
    pub entries: Vec<CaseEntry>,
    pub target: f64,
    pub n_neighbors: usize,
    /// Allow a case sitting exactly on the target (validation runs).
    pub include_exact: bool,
    /// Allow targets outside the parameter hull.
    pub extrapolate: bool,
}

impl CaseCatalog {
    pub fn from_parameters(params: &[f64], target: f64, n_neighbors: usize) -> Self {
        CaseCatalog {
            entries: params
                .iter()
                .map(|&p| CaseEntry {
                    parameter: p,
                    path: None,
                })
                .collect(),
            target,
            n_neighbors,
            include_exact: false,
            extrapolate: false,
        }
    }

    pub fn n_cases(&self) -> usize {
        self.entries.len()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.parameter).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.parameters();
        if params.iter().any(|p| !p.is_finite()) || !self.target.is_finite() {
            return Err(Error::Catalog("parameters must be finite".into()));
        }
        for (i, a) in params.iter().enumerate() {
            if params[..i].contains(a) {
                return Err(Error::Catalog(format!("parameter {a} appears twice")));
            }
        }
        if self.n_neighbors == 0 || self.n_neighbors > self.n_cases() {
            return Err(Error::Catalog(format!(
                "{} neighbours requested from {} cases",
                self.n_neighbors,
                self.n_cases()
            )));
        }
        let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.target < lo || self.target > hi {
            if !self.extrapolate {
                return Err(Error::Catalog(format!(
                    "target {} lies outside [{lo}, {hi}]; enable extrapolation to proceed",
                    self.target
                )));
            }
            log::warn!(
                "extrapolating to {} outside [{lo}, {hi}]; high-order Lagrange weights grow quickly here",
                self.target
            );
        }
        Ok(())
    }

    /// Keeps only the cases on the lattice `target +/- (k + 1/2) * spacing`.
    pub fn restricted_to_lattice(&self, spacing: f64) -> CaseCatalog {
        let mut out = self.clone();
        out.entries = lattice_indices(&self.parameters(), self.target, spacing)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect();
        out
    }
}

/// Indices of `params` lying on the symmetric lattice `target +/- (k + 1/2) * spacing`.
pub fn lattice_indices(params: &[f64], target: f64, spacing: f64) -> Vec<usize> {
    params
        .iter()
        .enumerate()
        .filter(|(_, &p)| {
            let x = (p - target).abs() / spacing - 0.5;
            x > -1e-9 && (x - x.round()).abs() < 1e-9
        })
        .map(|(i, _)| i)
        .collect()
}

fn closeness(target: f64) -> impl Fn(&f64, &f64) -> std::cmp::Ordering {
    move |a: &f64, b: &f64| {
        (a - target)
            .abs()
            .total_cmp(&(b - target).abs())
            .then(a.total_cmp(b))
    }
}

/// The `N_p` cases nearest to the target (ties toward the smaller parameter),
/// returned as catalog indices sorted by ascending parameter.
pub fn select_neighbors(catalog: &CaseCatalog) -> Result<Vec<usize>> {
    catalog.validate()?;
    let mut eligible: Vec<usize> = (0..catalog.n_cases())
        .filter(|&i| catalog.include_exact || catalog.entries[i].parameter != catalog.target)
        .collect();
    if eligible.len() < catalog.n_neighbors {
        return Err(Error::Catalog(format!(
            "only {} eligible cases for {} neighbours",
            eligible.len(),
            catalog.n_neighbors
        )));
    }
    let cmp = closeness(catalog.target);
    eligible.sort_by(|&i, &j| cmp(&catalog.entries[i].parameter, &catalog.entries[j].parameter));
    eligible.truncate(catalog.n_neighbors);
    eligible.sort_by(|&i, &j| catalog.entries[i].parameter.total_cmp(&catalog.entries[j].parameter));
    Ok(eligible)
}

/// The neighbour closest to the target (ties toward the smaller parameter).
pub fn select_reference(neighbors: &[usize], catalog: &CaseCatalog) -> Result<usize> {
    let cmp = closeness(catalog.target);
    neighbors
        .iter()
        .copied()
        .min_by(|&i, &j| cmp(&catalog.entries[i].parameter, &catalog.entries[j].parameter))
        .ok_or_else(|| Error::Catalog("no neighbours to choose a reference from".into()))
}

/// Lagrange weights `sigma_j = prod_{m != j} (t - p_m) / (p_j - p_m)`.
pub fn lagrange_weights(params: &[f64], target: f64) -> Result<Vec<f64>> {
    if params.is_empty() {
        return Err(Error::Weight("no interpolation nodes".into()));
    }
    for (i, a) in params.iter().enumerate() {
        if params[..i].contains(a) {
            return Err(Error::Weight(format!("duplicate node {a}")));
        }
    }
    Ok(params
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let mut num = 1.0;
            let mut den = 1.0;
            for (m, &pm) in params.iter().enumerate() {
                if m != j {
                    num *= target - pm;
                    den *= pj - pm;
                }
            }
            num / den
        })
        .collect())
}

/// Parses a manifest: one `parameter<TAB>path` per line, `#` starts a comment.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<CaseEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (p, file) = line
            .split_once('\t')
            .ok_or_else(|| Error::Catalog(format!("manifest line {} lacks a tab", lineno + 1)))?;
        let parameter = p
            .trim()
            .parse()
            .map_err(|_| Error::Catalog(format!("manifest line {}: bad parameter `{p}`", lineno + 1)))?;
        let file = PathBuf::from(file.trim());
        entries.push(CaseEntry {
            parameter,
            path: Some(if file.is_absolute() { file } else { base.join(file) }),
        });
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[(f64, PathBuf)]) -> Result<()> {
    let mut text = String::from("# parameter\tpath\n");
    for (p, file) in entries {
        text.push_str(&format!("{}\t{}\n", crate::export::fmt_f64(*p), file.display()));
    }
    std::fs::write(path, text).map_err(|e| Error::storage(path, e))
}
