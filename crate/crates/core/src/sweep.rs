//! Three-factor PROM sweeps over the rank, the neighbour spacing and the
//! number of neighbours, with CSV and SVG output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::export::{csv_err, fmt_f64, write_table};
use crate::fom::{parse_bool, parse_key_values, parse_list, DEFAULT_TARGET};
use crate::galerkin::DiscreteModel;
use crate::plan::CaseCatalog;
use crate::prom::{run_prom, Method, PromRequest, Workbench};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NRank,
    DeltaParam,
    NNeighbors,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::NRank => "N_r",
            Axis::DeltaParam => "delta_param",
            Axis::NNeighbors => "N_p",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "n_rank" => Ok(Axis::NRank),
            "delta_param" => Ok(Axis::DeltaParam),
            "n_neighbors" => Ok(Axis::NNeighbors),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (n_rank, delta_param, n_neighbors)"
            ))),
        }
    }
}

/// Sweep description read from a flat `key=value` plan file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Rank when the axis is not `n_rank`.
    pub n_rank: usize,
    /// Neighbour spacing when the axis is not `delta_param`; `None` uses the
    /// nearest cases without a lattice restriction.
    pub delta_param: Option<f64>,
    pub n_neighbors: usize,
    pub target: f64,
    pub methods: Vec<Method>,
    /// Manifest of snapshot files (`parameter<TAB>path`).
    pub catalog: Option<PathBuf>,
    /// Burgers config providing the model the ROMs are projected from.
    pub config: Option<PathBuf>,
    pub chart: bool,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            axis: Axis::NRank,
            values: (7..=21).step_by(2).map(|r| r as f64).collect(),
            n_rank: 13,
            delta_param: Some(20.0),
            n_neighbors: 2,
            target: DEFAULT_TARGET,
            methods: vec![Method::Gmi, Method::Mrpwi, Method::Rom],
            catalog: None,
            config: None,
            chart: true,
        }
    }
}

impl SweepPlan {
    /// Parses a plan; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut plan = SweepPlan::default();
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "axis" => plan.axis = v.parse()?,
                "values" => plan.values = parse_list(&k, &v)?,
                "n_rank" => plan.n_rank = parse_count(&k, &v)?,
                "delta_param" => {
                    plan.delta_param = match v.as_str() {
                        "" | "none" => None,
                        _ => Some(parse_list(&k, &v)?.first().copied().unwrap_or(0.0)),
                    }
                }
                "n_neighbors" => plan.n_neighbors = parse_count(&k, &v)?,
                "target" => plan.target = parse_list(&k, &v)?.first().copied().unwrap_or(f64::NAN),
                "methods" => {
                    plan.methods = v
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
                "catalog" => plan.catalog = Some(base_dir.join(v)),
                "config" => plan.config = Some(base_dir.join(v)),
                "chart" => plan.chart = parse_bool(&k, &v)?,
                _ => return Err(Error::Config(format!("unknown sweep setting `{k}`"))),
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("a sweep needs at least one value and one method".into()));
        }
        if !self.target.is_finite() {
            return Err(Error::Config("sweep target must be a number".into()));
        }
        for cell in self.cells() {
            if cell.n_rank == 0 {
                return Err(Error::Config("N_r must be positive".into()));
            }
            if cell.method == Method::Mrpwi && cell.n_rank % 2 == 0 {
                return Err(Error::Parity { n_rank: cell.n_rank });
            }
            if cell.method != Method::Rom && cell.n_neighbors < 2 {
                return Err(Error::Config("N_p must be at least 2".into()));
            }
            if cell.delta_param.is_some_and(|d| !(d > 0.0)) {
                return Err(Error::Config("delta_param must be positive".into()));
            }
        }
        Ok(())
    }

    /// Cells in deterministic plan order: methods outer, axis values inner.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &v in &self.values {
                let mut cell = SweepCell {
                    method,
                    n_rank: self.n_rank,
                    delta_param: self.delta_param,
                    n_neighbors: self.n_neighbors,
                    axis_value: v,
                };
                match self.axis {
                    Axis::NRank => cell.n_rank = v as usize,
                    Axis::DeltaParam => cell.delta_param = Some(v),
                    Axis::NNeighbors => cell.n_neighbors = v as usize,
                }
                out.push(cell);
            }
        }
        out
    }
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad count `{value}` for `{key}`")))
}

/// One (method, factor setting) point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub method: Method,
    pub n_rank: usize,
    pub delta_param: Option<f64>,
    pub n_neighbors: usize,
    pub axis_value: f64,
}

/// One CSV row of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub field: String,
    pub rle: f64,
    /// Parameters of the cases the basis came from.
    pub neighbors: Vec<f64>,
}

/// Runs a single cell.
pub fn run_cell<M: DiscreteModel + ?Sized>(
    bench: &Workbench,
    model: &M,
    target: f64,
    cell: &SweepCell,
) -> Result<Vec<SweepRow>> {
    let params = bench.parameters();
    let mut catalog = CaseCatalog::from_parameters(&params, target, cell.n_neighbors);
    if let Some(d) = cell.delta_param.filter(|_| cell.method != Method::Rom) {
        catalog = catalog.restricted_to_lattice(d);
    }
    let outcome = run_prom(
        bench,
        model,
        &PromRequest {
            method: cell.method,
            n_rank: cell.n_rank,
            catalog,
        },
    )?;
    let neighbors: Vec<f64> = outcome.neighbors.iter().map(|&i| params[i]).collect();
    let mut rows = vec![SweepRow {
        cell: *cell,
        field: "all".into(),
        rle: outcome.run.report.rle,
        neighbors: neighbors.clone(),
    }];
    if outcome.run.report.per_field.len() > 1 {
        rows.extend(outcome.run.report.per_field.iter().map(|(name, v)| SweepRow {
            cell: *cell,
            field: name.clone(),
            rle: *v,
            neighbors: neighbors.clone(),
        }));
    }
    Ok(rows)
}

/// Runs every cell of `plan` on at most `jobs` threads; rows come back in plan order.
pub fn run_sweep<M: DiscreteModel + ?Sized>(
    plan: &SweepPlan,
    bench: &Workbench,
    model: &M,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let cells = plan.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<Vec<SweepRow>>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(bench, model, plan.target, c)).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Writes `method, N_r, delta_param, N_p, field, rle, neighbors` rows. The
/// factor columns describe the sweep cell, so baseline rows carry them too.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let records = rows.iter().map(|r| {
        vec![
            r.cell.method.to_string(),
            r.cell.n_rank.to_string(),
            r.cell.delta_param.map_or_else(String::new, fmt_f64),
            r.cell.n_neighbors.to_string(),
            r.field.clone(),
            fmt_f64(r.rle),
            r.neighbors.iter().map(|&p| fmt_f64(p)).collect::<Vec<_>>().join(" "),
        ]
    });
    write_table(path, &["method", "N_r", "delta_param", "N_p", "field", "rle", "neighbors"], records)
}

/// Reads a table written by [`write_sweep_csv`]; `axis` names the swept column.
pub fn read_sweep_csv(path: &Path, axis: Axis) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let bad = |line: usize, what: &str| Error::Data(format!("{} row {line}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let rec = record.map_err(|e| csv_err(path, e))?;
        if rec.len() < 6 {
            return Err(bad(line + 1, "column count"));
        }
        let number = |i: usize, what: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(line + 1, what));
        let delta_param = match rec[2].trim() {
            "" => None,
            _ => Some(number(2, "delta_param")?),
        };
        let mut cell = SweepCell {
            method: rec[0].parse()?,
            n_rank: rec[1].trim().parse().map_err(|_| bad(line + 1, "N_r"))?,
            delta_param,
            n_neighbors: rec[3].trim().parse().map_err(|_| bad(line + 1, "N_p"))?,
            axis_value: 0.0,
        };
        cell.axis_value = match axis {
            Axis::NRank => cell.n_rank as f64,
            Axis::DeltaParam => delta_param.ok_or_else(|| bad(line + 1, "delta_param"))?,
            Axis::NNeighbors => cell.n_neighbors as f64,
        };
        let neighbors = match rec.get(6) {
            Some(text) => text
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(line + 1, "neighbors")))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        rows.push(SweepRow {
            cell,
            field: rec[4].to_string(),
            rle: number(5, "rle")?,
            neighbors,
        });
    }
    Ok(rows)
}

/// Series of a line chart: name and `(x, y)` points.
pub type Series = (String, Vec<(f64, f64)>);

/// Groups the `field == "all"` rows of a sweep into one series per method.
pub fn chart_series(rows: &[SweepRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| r.field == "all") {
        let name = r.cell.method.to_string();
        let point = (r.cell.axis_value, r.rle);
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pts)) => pts.push(point),
            None => out.push((name, vec![point])),
        }
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Self-contained SVG line chart with a logarithmic y axis.
pub fn render_svg_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (80.0, 150.0, 40.0, 60.0);
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let xs: Vec<f64> = points.clone().map(|p| p.0).collect();
    let ys: Vec<f64> = points.map(|p| p.1).filter(|y| *y > 0.0 && y.is_finite()).collect();
    let (xmin, xmax) = bounds(&xs, 0.0, 1.0);
    let (ylo, yhi) = bounds(&ys, 1e-6, 1.0);
    let (dmin, dmax) = (ylo.log10().floor(), yhi.log10().ceil().max(ylo.log10().floor() + 1.0));
    let px = |x: f64| left + (x - xmin) / (xmax - xmin).max(f64::EPSILON) * (w - left - right);
    let py = |y: f64| top + (dmax - y.log10()) / (dmax - dmin) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (w - right + left) / 2.0, xml(title));
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(s, r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black"/>"#);
    for d in (dmin as i32)..=(dmax as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, x0 - 6.0, y + 4.0);
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let x = px(t);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, fmt_f64(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, h - 15.0, xml(x_label));
    let _ = writeln!(s, r#"<text transform="translate(20,{}) rotate(-90)" text-anchor="middle">{}</text>"#, (y0 + y1) / 2.0, xml(y_label));
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.1 > 0.0 && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
            for p in &path {
                let (cx, cy) = p.split_once(',').expect("formatted as x,y");
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = top + 20.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 + 15.0, x1 + 40.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 + 46.0, ly + 4.0, xml(name));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    if v.is_empty() {
        return (lo, hi);
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        (min - 1.0_f64.max(min.abs() * 0.1), max + 1.0_f64.max(max.abs() * 0.1))
    } else {
        (min, max)
    }
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_parsing_and_cells() {
        let plan = SweepPlan::parse(
            "axis=delta_param\nvalues=10,20,30,40\nn_rank=13\nn_neighbors=2\nmethods=gmi,mrpwi\ncatalog=cases.tsv\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(plan.axis, Axis::DeltaParam);
        assert_eq!(plan.catalog, Some(PathBuf::from("/data/cases.tsv")));
        let cells = plan.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0].method, Method::Gmi);
        assert_eq!(cells[5].delta_param, Some(20.0));
        assert_eq!(cells[5].method, Method::Mrpwi);
    }

    #[test]
    fn plan_validation() {
        let base = Path::new(".");
        assert!(matches!(
            SweepPlan::parse("axis=n_rank\nvalues=7,8\nmethods=mrpwi", base),
            Err(Error::Parity { n_rank: 8 })
        ));
        assert!(SweepPlan::parse("axis=n_neighbors\nvalues=1,2\nmethods=gmi", base).is_err());
        assert!(SweepPlan::parse("axis=sideways", base).is_err());
        assert!(SweepPlan::parse("values=", base).is_err());
        assert!(SweepPlan::parse("axis=n_rank\nvalues=8\nmethods=gmi,rom", base).is_ok());
    }

    #[test]
    fn sweep_csv_roundtrip() {
        let plan = SweepPlan {
            axis: Axis::DeltaParam,
            values: vec![10.0, 20.0],
            ..SweepPlan::default()
        };
        let rows: Vec<SweepRow> = plan
            .cells()
            .into_iter()
            .enumerate()
            .map(|(k, cell)| SweepRow {
                cell,
                field: "all".into(),
                rle: 1e-4 * (k + 1) as f64,
                neighbors: vec![120.0, 140.0],
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &rows).unwrap();
        assert_eq!(read_sweep_csv(&path, Axis::DeltaParam).unwrap(), rows);
    }

    #[test]
    fn svg_chart_is_well_formed() {
        let series = vec![
            ("GMI".to_string(), vec![(7.0, 1e-3), (9.0, 1e-4)]),
            ("MRPWI".to_string(), vec![(7.0, 2e-3), (9.0, 1.5e-4)]),
        ];
        let svg = render_svg_chart("RLE vs N_r", "N_r", "RLE", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("1e-4"));
    }
}
