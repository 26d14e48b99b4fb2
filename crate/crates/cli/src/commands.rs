use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use podrom::export::{fmt_f64, write_table};
use podrom::fom::{burgers_model, generate_cases, manufactured_bases, BurgersConfig, GenerateConfig, ManufacturedFamily};
use podrom::galerkin::{assemble_operators, DiscreteModel};
use podrom::metrics::write_timing_csv;
use podrom::mrpwi::{mrpwi_interpolate_detailed, pair_integrity, write_alignment_csv};
use podrom::plan::{read_manifest, write_manifest};
use podrom::pod::{compute_pod_with, read_basis, write_basis, PodOptions, SvdRoute};
use podrom::prom::{interpolate, run_rom, Workbench};
use podrom::sweep::{chart_series, read_sweep_csv, render_svg_chart, run_sweep, write_sweep_csv, Axis, SweepPlan};
use podrom::{
    benchmark_interpolation, lagrange_weights, read_snapshots, select_neighbors, select_reference, CaseCatalog, Error,
    Method, MrpwiOptions, PodBasis, Quadrature, Result, SnapshotSet,
};
use rayon::prelude::*;

use crate::{Cli, Command, Report};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { config } => generate(cli, config.as_deref()),
        Command::Pod {
            snapshots,
            rank,
            gram,
            subtract_mean,
        } => pod(
            cli,
            snapshots,
            *rank,
            PodOptions {
                route: if *gram { SvdRoute::Snapshots } else { SvdRoute::Thin },
                subtract_mean: *subtract_mean,
            },
        ),
        Command::Interpolate {
            method,
            catalog,
            target,
            neighbors,
            rank,
            delta,
            include_exact,
            extrapolate,
            orthonormalize,
        } => {
            let mut cat = CaseCatalog {
                entries: read_manifest(catalog)?,
                target: *target,
                n_neighbors: *neighbors,
                include_exact: *include_exact,
                extrapolate: *extrapolate,
            };
            if let Some(d) = delta {
                cat = cat.restricted_to_lattice(*d);
            }
            interpolate_cmd(cli, *method, &cat, *rank, *orthonormalize)
        }
        Command::Rom {
            basis,
            truth,
            config,
            viscosity,
            horizon,
        } => rom(cli, basis, truth, config.as_deref(), *viscosity, *horizon),
        Command::Sweep { plan } => sweep(cli, plan),
        Command::Report { what } => match what {
            Report::Chart { csv, axis } => chart(cli, csv, *axis),
            Report::Timing {
                n_dof,
                rank,
                neighbors,
                repetitions,
            } => timing(cli, *n_dof, *rank, *neighbors, *repetitions),
        },
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_path();
    if !dir.is_dir() {
        fs::create_dir_all(dir).map_err(|e| Error::Storage {
            path: dir.to_path_buf(),
            source: e,
        })?;
        info!("created output directory {}", dir.display());
    }
    Ok(dir)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Storage {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Storage {
        path: path.to_path_buf(),
        source: e,
    })
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("case");
    name.split('.').next().unwrap_or(name).to_string()
}

/// Grid of a Burgers config file, or the default grid.
fn burgers_config(path: Option<&Path>) -> Result<BurgersConfig> {
    match path {
        Some(p) => Ok(GenerateConfig::parse(&read_text(p)?)?.base),
        None => Ok(BurgersConfig::default()),
    }
}

fn load_snapshots(path: &Path) -> Result<(SnapshotSet, Quadrature)> {
    let (set, weights) = read_snapshots(path)?;
    let w = match weights {
        Some(w) => w,
        None => {
            warn!("{} carries no quadrature weights; using unit weights", path.display());
            Quadrature::uniform(set.n_dof(), 1.0)?
        }
    };
    Ok((set, w))
}

fn load_cases(paths: &[PathBuf]) -> Result<(Vec<SnapshotSet>, Quadrature)> {
    let loaded = paths
        .par_iter()
        .map(|p| load_snapshots(p))
        .collect::<Result<Vec<_>>>()?;
    let w = loaded
        .first()
        .map(|(_, w)| w.clone())
        .ok_or_else(|| Error::Catalog("no cases to load".into()))?;
    for ((_, wj), p) in loaded.iter().zip(paths) {
        if wj.id() != w.id() {
            return Err(Error::Pairing(format!("{} uses different quadrature weights", p.display())));
        }
    }
    Ok((loaded.into_iter().map(|(s, _)| s).collect(), w))
}

fn generate(cli: &Cli, config: Option<&Path>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => GenerateConfig::parse(&read_text(p)?)?,
        None => GenerateConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.base.init_seed = seed;
    }
    let dir = out_dir(cli)?;
    let written = generate_cases(&cfg, dir, cli.force)?;
    let relative: Vec<(f64, PathBuf)> = written
        .iter()
        .map(|(re, p)| (*re, p.file_name().map(PathBuf::from).unwrap_or_else(|| p.clone())))
        .collect();
    let manifest = dir.join("cases.tsv");
    write_manifest(&manifest, &relative)?;
    for (re, p) in &written {
        println!("Re = {:<8} {}", fmt_f64(*re), p.display());
    }
    println!("wrote {} cases; manifest {}", written.len(), manifest.display());
    Ok(())
}

fn pod(cli: &Cli, snapshots: &Path, rank: usize, opts: PodOptions) -> Result<()> {
    let (set, w) = load_snapshots(snapshots)?;
    let basis = compute_pod_with(&set, &w, rank, opts)?;
    let path = out_dir(cli)?.join(format!("{}_r{rank}.basis.psnap", stem(snapshots)));
    write_basis(&path, &basis, &w)?;
    let total: f64 = basis.singular_values.iter().map(|s| s * s).sum();
    println!("parameter        {}", fmt_f64(basis.parameter));
    println!("modes            {} of {} dof", basis.n_rank(), basis.n_dof());
    println!("max|Phi^T W Phi - I| = {:.3e}", basis.orthonormality_error(&w));
    println!("leading singular values:");
    for (k, s) in basis.singular_values.iter().enumerate().take(5) {
        println!("  {:>3}  {:.6e}  ({:.2}% of retained energy)", k + 1, s, 100.0 * s * s / total);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn interpolate_cmd(cli: &Cli, method: Method, catalog: &CaseCatalog, rank: usize, orthonormalize: bool) -> Result<()> {
    if method == Method::Rom {
        return Err(Error::Config("interpolate takes --method gmi or mrpwi".into()));
    }
    let local = select_neighbors(catalog)?;
    let local_ref = select_reference(&local, catalog)?;
    let paths: Vec<PathBuf> = local
        .iter()
        .map(|&i| {
            catalog.entries[i]
                .path
                .clone()
                .ok_or_else(|| Error::Catalog(format!("case {} has no file", fmt_f64(catalog.entries[i].parameter))))
        })
        .collect::<Result<_>>()?;
    let (cases, w) = load_cases(&paths)?;
    let bases = cases
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            podrom::compute_pod(s, &w, rank).map_err(|e| Error::Case {
                index: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<PodBasis>>>()?;
    let params: Vec<f64> = bases.iter().map(|b| b.parameter).collect();
    let ref_pos = local.iter().position(|&i| i == local_ref).expect("reference is a neighbour");
    let weights = lagrange_weights(&params, catalog.target)?;

    let dir = out_dir(cli)?;
    let name = format!("{}_{}_r{rank}", method.to_string().to_lowercase(), fmt_f64(catalog.target));
    let basis = match method {
        Method::Mrpwi => {
            let out = mrpwi_interpolate_detailed(&bases, ref_pos, catalog.target, &w, MrpwiOptions { orthonormalize })?;
            let alignment = dir.join(format!("{name}.alignment.csv"));
            write_alignment_csv(&alignment, &out.packs)?;
            println!("alignment log    {}", alignment.display());
            for (j, b) in bases.iter().enumerate() {
                for d in pair_integrity(b).iter().filter(|d| !d.ok) {
                    warn!(
                        "case Re = {}: mode pair {} has singular value ratio {:.3}",
                        fmt_f64(params[j]),
                        d.column,
                        d.ratio
                    );
                }
            }
            out.basis
        }
        _ => interpolate(method, &bases, ref_pos, catalog.target, &w)?,
    };
    let path = dir.join(format!("{name}.basis.psnap"));
    write_basis(&path, &basis, &w)?;
    println!("method           {method}");
    println!("target           {}", fmt_f64(catalog.target));
    println!("reference        {}", fmt_f64(params[ref_pos]));
    for (p, s) in params.iter().zip(&weights) {
        println!("  neighbour {:<8} weight {:+.6}", fmt_f64(*p), s);
    }
    println!("max|Phi^T W Phi - I| = {:.3e}", basis.orthonormality_error(&w));
    println!("wrote {}", path.display());
    Ok(())
}

fn rom(
    cli: &Cli,
    basis_path: &Path,
    truth_path: &Path,
    config: Option<&Path>,
    viscosity: Option<f64>,
    horizon: Option<usize>,
) -> Result<()> {
    let (basis, w) = read_basis(basis_path)?;
    let (mut truth, _) = load_snapshots(truth_path)?;
    if let Some(k) = horizon {
        if k == 0 || k > truth.n_snap() {
            return Err(Error::Config(format!("horizon must be in 1..={}", truth.n_snap())));
        }
        let data = truth.data().columns(0, k).into_owned();
        truth = SnapshotSet::new(data, truth.parameter(), truth.t0(), truth.dt_snap(), truth.field_layout().clone())?;
    }
    let cfg = burgers_config(config)?;
    let model = burgers_model(&cfg)?;
    if model.quadrature().id() != w.id() {
        warn!("basis weights differ from the model grid's quadrature");
    }
    let nu = viscosity.unwrap_or(1.0 / basis.parameter);
    let tag = if basis.singular_values_authoritative { "ROM" } else { "PROM" };
    let run = run_rom(&basis, &model, nu, &truth)?;

    let dir = out_dir(cli)?;
    let name = stem(basis_path);
    let traj_path = dir.join(format!("{name}.trajectory.csv"));
    run.trajectory.write_csv(&traj_path)?;
    let pred_path = dir.join(format!("{name}.prediction.psnap"));
    podrom::write_snapshots(&run.prediction, Some(&w), &pred_path)?;
    let ops_dir = dir.join(format!("{name}.operators"));
    assemble_operators(&basis, &model, nu)?.write_csv_bundle(&ops_dir)?;
    let n_used = run.report.n_snapshots_used.to_string();
    let fields = std::iter::once(("all", run.report.rle))
        .chain(run.report.per_field.iter().map(|(f, v)| (f.as_str(), *v)));
    let rows = fields.map(|(f, v)| vec![tag.to_string(), f.to_string(), fmt_f64(v), n_used.clone()]);
    let rle_path = dir.join(format!("{name}.rle.csv"));
    write_table(&rle_path, &["method", "field", "rle", "n_snapshots"], rows)?;

    println!("{tag} on {} modes, nu = {}", basis.n_rank(), fmt_f64(nu));
    println!("RLE = {:.4e} over {} snapshots", run.report.rle, run.report.n_snapshots_used);
    println!("wrote {}, {}, {}, {}", traj_path.display(), pred_path.display(), ops_dir.display(), rle_path.display());
    Ok(())
}

fn sweep(cli: &Cli, plan_path: &Path) -> Result<()> {
    let base = plan_path.parent().unwrap_or(Path::new("."));
    let plan = SweepPlan::parse(&read_text(plan_path)?, base)?;
    let manifest = plan
        .catalog
        .as_ref()
        .ok_or_else(|| Error::Config("the sweep plan needs `catalog = <manifest>`".into()))?;
    let entries = read_manifest(manifest)?;
    let paths: Vec<PathBuf> = entries
        .iter()
        .map(|e| e.path.clone().ok_or_else(|| Error::Catalog("manifest entry without a path".into())))
        .collect::<Result<_>>()?;
    let (cases, w) = load_cases(&paths)?;
    let max_rank = plan.cells().iter().map(|c| c.n_rank).max().unwrap_or(1);
    info!("computing POD bases of {} cases at N_r = {max_rank}", cases.len());
    let bench = Workbench::new(cases, w, max_rank)?;
    let model = burgers_model(&burgers_config(plan.config.as_deref())?)?;
    let jobs = cli.jobs.unwrap_or_else(rayon::current_num_threads);
    let rows = run_sweep(&plan, &bench, &model, jobs)?;

    let dir = out_dir(cli)?;
    let name = format!("sweep_{}", stem(plan_path));
    let csv_path = dir.join(format!("{name}.csv"));
    write_sweep_csv(&csv_path, &rows)?;
    print_rows(&rows, plan.axis);
    println!("wrote {}", csv_path.display());
    if plan.chart {
        let svg_path = dir.join(format!("{name}.svg"));
        let title = format!("RLE vs {} at target {}", plan.axis.label(), fmt_f64(plan.target));
        write_text(&svg_path, &render_svg_chart(&title, plan.axis.label(), "RLE", &chart_series(&rows)))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn print_rows(rows: &[podrom::sweep::SweepRow], axis: Axis) {
    println!("{:<6} {:>11} {:>12}  neighbours", "method", axis.label(), "RLE");
    for r in rows.iter().filter(|r| r.field == "all") {
        let neighbours: Vec<String> = r.neighbors.iter().map(|p| fmt_f64(*p)).collect();
        println!(
            "{:<6} {:>11} {:>12.4e}  {}",
            r.cell.method.to_string(),
            fmt_f64(r.cell.axis_value),
            r.rle,
            neighbours.join(" ")
        );
    }
}

fn chart(cli: &Cli, csv: &Path, axis: Axis) -> Result<()> {
    let rows = read_sweep_csv(csv, axis)?;
    print_rows(&rows, axis);
    let svg_path = out_dir(cli)?.join(format!("{}.svg", stem(csv)));
    let title = format!("RLE vs {}", axis.label());
    write_text(&svg_path, &render_svg_chart(&title, axis.label(), "RLE", &chart_series(&rows)))?;
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn timing(cli: &Cli, n_dof: usize, rank: usize, neighbors: usize, repetitions: usize) -> Result<()> {
    if neighbors < 2 {
        return Err(Error::Config("N_p must be at least 2".into()));
    }
    let family = ManufacturedFamily {
        n_dof,
        n_rank: rank,
        angle_rate: 0.05,
        base_seed: cli.seed.unwrap_or(11),
    };
    let params: Vec<f64> = (0..neighbors).map(|k| k as f64).collect();
    let reference = (neighbors - 1) / 2;
    let target = params[reference] + 0.5;
    let bases = manufactured_bases(&family, &params)?;
    let w = family.quadrature();
    let reports = [Method::Gmi, Method::Mrpwi]
        .into_iter()
        .map(|m| benchmark_interpolation(m, &bases, reference, target, &w, repetitions))
        .collect::<Result<Vec<_>>>()?;
    let path = out_dir(cli)?.join("timing.csv");
    write_timing_csv(&path, &reports)?;
    for r in &reports {
        println!(
            "{:<6} N_n = {} N_r = {} N_p = {}: median {:.4} s over {} runs",
            r.method.to_string(),
            r.n_dof,
            r.n_rank,
            r.n_neighbors,
            r.wall_seconds,
            r.repetitions
        );
    }
    println!("MRPWI / GMI = {:.3}", reports[1].wall_seconds / reports[0].wall_seconds);
    println!("wrote {}", path.display());
    Ok(())
}
