use podrom::fom::{burgers_model, generate_cases, GenerateConfig};
use podrom::prom::{run_prom, PromRequest, Workbench};
use podrom::{read_snapshots, CaseCatalog, Method};

fn small_config() -> GenerateConfig {
    GenerateConfig::parse("n_points = 128\nn_snapshots = 20\nreynolds = 110, 120, 130, 140, 150\n").unwrap()
}

#[test]
fn generated_cases_feed_interpolated_roms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let written = generate_cases(&cfg, dir.path(), false).unwrap();
    assert_eq!(written.len(), 5);
    assert!(generate_cases(&cfg, dir.path(), false).is_err(), "existing files need force");

    let mut cases = Vec::new();
    let mut weights = None;
    for (re, path) in &written {
        let (s, w) = read_snapshots(path).unwrap();
        assert_eq!(s.parameter(), *re);
        assert_eq!(s.n_snap(), 20);
        cases.push(s);
        weights = w;
    }
    let bench = Workbench::new(cases, weights.unwrap(), 9).unwrap();
    let model = burgers_model(&cfg.base).unwrap();
    let params = [110.0, 120.0, 140.0, 150.0];

    let mut errors = Vec::new();
    for method in [Method::Rom, Method::Gmi, Method::Mrpwi] {
        let request = PromRequest {
            method,
            n_rank: 9,
            catalog: CaseCatalog::from_parameters(&params, 130.0, 2),
        };
        let out = run_prom(&bench, &model, &request).unwrap();
        if method != Method::Rom {
            assert_eq!(out.neighbors.len(), 2);
            assert_eq!(out.basis.parameter, 130.0);
            assert!(!out.basis.singular_values_authoritative);
        }
        assert_eq!(out.run.report.n_snapshots_used, 20);
        errors.push(out.run.report.rle);
    }
    assert!(errors[0] < 1e-2, "own basis RLE {}", errors[0]);
    for e in &errors[1..] {
        assert!(*e < 10.0 * errors[0].max(1e-4), "interpolated RLE {e} vs own {}", errors[0]);
    }
}
