use reachzono::conformal::{
    calibrate, calibrate_with_inflated_feedback, coverage_eval, filter_trajectories, score_matrix, CalibrationMode,
};
use reachzono::fitcert::pca_fit;
use reachzono::setalg::Zonotope;
use reachzono::surrogate::{
    autoregress, init_context, Architecture, ContextInit, TokenizerConfig, Transformer, WeightBundle,
};
use reachzono::sysim::{gen_dataset, CVariant, DatasetSpec, LtiSystem, NoiseSpec, Trajectory};

const N_O: usize = 5;
const HORIZON: usize = 8;

fn draw(count: usize, seed: u64) -> Vec<Trajectory> {
    let sys = LtiSystem::default_five(CVariant::A);
    let noise = NoiseSpec::default_for(&sys);
    gen_dataset(&DatasetSpec {
        system: &sys,
        noise: &noise,
        x0_set: &Zonotope::from_box(vec![1.0; 5], &[0.1; 5]).unwrap(),
        input_set: &Zonotope::from_box(vec![10.0], &[0.25]).unwrap(),
        count,
        length: HORIZON + 1,
        master_seed: seed,
        keep_states: false,
    })
    .unwrap()
}

fn fitted_context(trajs: &[Trajectory]) -> Vec<Zonotope> {
    (0..N_O)
        .map(|k| pca_fit(&trajs.iter().map(|t| t.outputs[k].clone()).collect::<Vec<_>>()).unwrap())
        .collect()
}

fn cfg() -> TokenizerConfig {
    TokenizerConfig {
        n_y: 2,
        k_g: 8,
        t_max: 50.0,
        n_o: N_O,
    }
}

#[test]
fn bundle_export_import_export_is_byte_identical() {
    let wb = WeightBundle::random(Architecture::reference(2, 8, N_O), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    wb.save(dir.path()).unwrap();
    let back = WeightBundle::load(dir.path()).unwrap();
    assert_eq!(back.to_bytes(), wb.to_bytes());
    assert_eq!(back.manifest_json().unwrap(), wb.manifest_json().unwrap());
    let second = tempfile::tempdir().unwrap();
    back.save(second.path()).unwrap();
    for f in ["manifest.json", "weights.bin"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(second.path().join(f)).unwrap()
        );
    }
    let a = &wb.architecture();
    assert_eq!((a.d_model, a.n_heads, a.n_layers, a.d_ff), (128, 8, 4, 512));
}

#[test]
fn calibrated_random_surrogate_covers_fresh_trajectories() {
    let model = Transformer::from_bundle(&WeightBundle::random(Architecture::new(32, 4, 2, 64, 2, 8, N_O), 9).unwrap())
        .unwrap();
    let context = fitted_context(&draw(500, 1));
    let preds = autoregress(&model, &context, HORIZON, &cfg()).unwrap();
    assert_eq!(preds.len(), HORIZON - N_O + 1);
    assert!(preds.iter().all(|p| p.set.is_finite() && p.set.mean_hull_width() > 0.0));

    let (cal, _) = filter_trajectories(&draw(300, 2), &context).unwrap();
    let cal = &cal[..200];
    let (_, table) = calibrate(&[&preds], cal, 0.05).unwrap();
    let (test, rejected) = filter_trajectories(&draw(1200, 3), &context).unwrap();
    assert!(
        test.len() >= 1000,
        "only {} of 1200 retained ({} rejected)",
        test.len(),
        rejected.len()
    );
    let scores = score_matrix(&[&preds], &test[..1000]).unwrap();
    let sigma = (0.05f64 * 0.95 / 1000.0).sqrt();
    let per_step = coverage_eval(&scores, &table, CalibrationMode::PerStep).unwrap();
    assert!(per_step.min_per_step() >= 0.95 - 3.0 * sigma, "{per_step:?}");
    let joint = coverage_eval(&scores, &table, CalibrationMode::Joint).unwrap();
    assert!(joint.joint >= 0.95 - 3.0 * sigma, "{joint:?}");
    assert!(joint.joint <= joint.min_per_step());
}

#[test]
fn inflated_feedback_matches_raw_at_the_first_step() {
    let model = Transformer::from_bundle(&WeightBundle::random(Architecture::new(16, 2, 1, 32, 2, 8, N_O), 4).unwrap())
        .unwrap();
    let fitted = fitted_context(&draw(200, 5));
    let (cal, _) = filter_trajectories(&draw(100, 6), &fitted).unwrap();
    let raw = autoregress(&model, &fitted, HORIZON, &cfg()).unwrap();
    let (inflated, m, table) =
        calibrate_with_inflated_feedback(&model, &fitted, HORIZON, &cfg(), &cal, 0.1, CalibrationMode::PerStep)
            .unwrap();
    assert_eq!(raw[0], inflated[0]);
    assert_eq!(m.n_trials(), cal.len());
    assert_eq!(table.per_step.len(), raw.len());
    let recomputed = score_matrix(&[&inflated], &cal).unwrap();
    assert_eq!(recomputed, m);
}

#[test]
fn centers_context_has_no_width() {
    let fitted = fitted_context(&draw(50, 7));
    let centers = init_context(&fitted, ContextInit::Centers).unwrap();
    assert!(centers.iter().all(|z| z.mean_hull_width() == 0.0));
}
