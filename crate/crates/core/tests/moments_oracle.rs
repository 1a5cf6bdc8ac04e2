use lshawkes::linalg::{solve_lu, Matrix};
use lshawkes::model::presets;
use lshawkes::moments::{compute_chi, compute_lambda, unit_grid, MomentOptions};
use lshawkes::ModelSpec;

fn closed_form(model: &ModelSpec) -> Vec<f64> {
    let d = model.dim();
    let gamma = model.gamma_plus_exact();
    let a = Matrix::identity(d).sub(&gamma);
    let nu: Vec<f64> = (0..d).map(|m| model.baseline_at(m, 0.5)).collect();
    solve_lu(&a, &nu).unwrap()
}

#[test]
fn stationary_presets_match_closed_form() {
    for cfg in [presets::stationary1(), presets::preset2(), presets::piecewise()] {
        let model = ModelSpec::new(cfg).unwrap();
        let table = compute_lambda(&model, &[0.5], &MomentOptions::with_tol(1e-6)).unwrap();
        for (a, b) in table.lambda[0].iter().zip(closed_form(&model)) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn chi_mass_is_resolvent_minus_identity() {
    // sum_k Gamma^k = (I - Gamma)^{-1} - I.
    let model = ModelSpec::new(presets::preset2()).unwrap();
    let chi = compute_chi(&model, &[0.5], &MomentOptions::with_tol(1e-9)).unwrap();
    let total = chi[0].total(2);
    let gamma = model.gamma_plus_exact();
    let a = Matrix::identity(2).sub(&gamma);
    for m in 0..2 {
        let mut e = vec![0.0; 2];
        e[m] = 1.0;
        let col = solve_lu(&a, &e).unwrap();
        for l in 0..2 {
            let expect = col[l] - if l == m { 1.0 } else { 0.0 };
            // Mass beyond the lag cut-off is not in the table.
            assert!((total[(l, m)] - expect).abs() < 1e-6, "{l}{m}: {} {expect}", total[(l, m)]);
        }
    }
}

#[test]
fn time_varying_renewal_residual_is_small() {
    let model = ModelSpec::new(presets::exp_tv()).unwrap();
    let opts = MomentOptions::with_tol(1e-6);
    let table = compute_lambda(&model, &unit_grid(11), &opts).unwrap();
    assert!(table.renewal_residual < 10.0 * opts.tol, "{}", table.renewal_residual);
    // The mean intensity tracks the baseline ramp.
    let lam: Vec<f64> = table.lambda.iter().map(|r| r[0]).collect();
    assert!(lam.windows(2).all(|w| w[1] > w[0]));
}
