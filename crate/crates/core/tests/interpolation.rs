use podrom::fom::{manufactured_bases, ManufacturedFamily};
use podrom::prom::interpolate;
use podrom::{exp_map, log_map, principal_angles, Method, PodBasis, Quadrature};

fn family() -> ManufacturedFamily {
    ManufacturedFamily {
        n_dof: 300,
        n_rank: 5,
        angle_rate: 0.2,
        base_seed: 3,
    }
}

fn max_angle(a: &PodBasis, b: &PodBasis, w: &Quadrature) -> f64 {
    principal_angles(a, b, w).unwrap().into_iter().fold(0.0, f64::max)
}

fn error_at(method: Method, params: &[f64], reference: usize, target: f64) -> f64 {
    let fam = family();
    let w = fam.quadrature();
    let bases = manufactured_bases(&fam, params).unwrap();
    let exact = manufactured_bases(&fam, &[target]).unwrap().remove(0);
    let got = interpolate(method, &bases, reference, target, &w).unwrap();
    max_angle(&got, &exact, &w)
}

#[test]
fn closed_form_angles_match_computed_ones() {
    let fam = family();
    let w = fam.quadrature();
    let b = manufactured_bases(&fam, &[0.0, 1.7]).unwrap();
    let got = principal_angles(&b[0], &b[1], &w).unwrap();
    let exact = fam.exact_principal_angles(0.0, 1.7);
    for (g, e) in got.iter().zip(&exact) {
        assert!((g - e).abs() < 1e-10, "{got:?} vs {exact:?}");
    }
}

#[test]
fn more_nodes_reduce_the_gmi_error() {
    let two = error_at(Method::Gmi, &[1.0, 2.0], 0, 1.5);
    let four = error_at(Method::Gmi, &[0.0, 1.0, 2.0, 3.0], 1, 1.5);
    assert!(two > 0.0);
    assert!(four < two, "4 nodes {four} vs 2 nodes {two}");
}

#[test]
fn mrpwi_tracks_gmi_on_the_manufactured_family() {
    for params in [vec![1.0, 2.0], vec![0.0, 1.0, 2.0, 3.0]] {
        let reference = params.len() / 2 - 1;
        let gmi = error_at(Method::Gmi, &params, reference, 1.4);
        let mrpwi = error_at(Method::Mrpwi, &params, reference, 1.4);
        assert!(mrpwi < 2.0 * gmi && gmi < 2.0 * mrpwi, "GMI {gmi}, MRPWI {mrpwi}");
    }
}

#[test]
fn log_then_exp_returns_the_target_subspace() {
    let fam = family();
    let w = fam.quadrature();
    let b = manufactured_bases(&fam, &[0.0, 2.5]).unwrap();
    let tangent = log_map(&b[0], &b[1], &w).unwrap();
    let back = exp_map(&b[0], &tangent, &w).unwrap();
    assert!(back.orthonormality_error(&w) < 1e-12);
    assert!(max_angle(&back, &b[1], &w) < 1e-10);
}

#[test]
fn interpolation_at_a_node_reproduces_it() {
    let fam = family();
    let w = fam.quadrature();
    let params = [0.0, 1.0, 2.0];
    let bases = manufactured_bases(&fam, &params).unwrap();
    for method in [Method::Gmi, Method::Mrpwi] {
        for (j, &p) in params.iter().enumerate() {
            let got = interpolate(method, &bases, 1, p, &w).unwrap();
            assert!(max_angle(&got, &bases[j], &w) < 1e-10, "{method} at {p}");
        }
    }
}
