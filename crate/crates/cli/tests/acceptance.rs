//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p reachzono-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachzono::conformal::{quantile, quantile_rank};
use reachzono::ddreach::{
    build_lifted, build_model_set, build_noise_matzono, initial_lifted_set, run_reachability, NoiseEmbedding,
};
use reachzono::fitcert::{directional_contract, pca_fit, Certificate, Strip};
use reachzono::linsolve::{inf_residual, solve_min_inflation_flat, DenseMatrix, DEFAULT_RANK_TOL};
use reachzono::setalg::{probe_directions, Zonotope, MEMBERSHIP_TOL};
use reachzono::surrogate::{Architecture, Transformer, WeightBundle};
use reachzono::sysim::{
    gen_dataset, oracle_from_system, residual_check, CVariant, DatasetSpec, LtiSystem, NoiseSpec, Trajectory,
};
use reachzono_cli::stages::EvaluationReport;
use reachzono_cli::{load, run_all, Overrides};

type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn five_state_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/five_state.json")
}

fn box_set(center: Vec<f64>, r: f64) -> Zonotope {
    let radius = vec![r; center.len()];
    Zonotope::from_box(center, &radius).unwrap()
}

fn dataset(
    sys: &LtiSystem,
    noise: &NoiseSpec,
    x0: &Zonotope,
    u: &Zonotope,
    count: usize,
    length: usize,
    seed: u64,
) -> Vec<Trajectory> {
    gen_dataset(&DatasetSpec {
        system: sys,
        noise,
        x0_set: x0,
        input_set: u,
        count,
        length,
        master_seed: seed,
        keep_states: false,
    })
    .unwrap()
}

fn dd_containment() -> Check {
    const N_O: usize = 5;
    const T: usize = 50;
    const HORIZON: usize = 8;
    let x0 = box_set(vec![1.0; 5], 0.1);
    let u = box_set(vec![10.0], 0.25);
    let mut details = Vec::new();
    for variant in CVariant::all() {
        let start = Instant::now();
        let sys = LtiSystem::default_five(variant);
        let noise = NoiseSpec::default_for(&sys);
        let ident = dataset(&sys, &noise, &x0, &u, 1, T + N_O + 1, 11);
        let lr = build_lifted(&ident, N_O).map_err(|e| e.to_string())?;
        let meps = build_noise_matzono(&noise.eps_bound, lr.t(), lr.p(), NoiseEmbedding::OutputBlock)
            .map_err(|e| e.to_string())?;
        let ms = build_model_set(&lr, &meps, DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
        let mc = dataset(&sys, &noise, &x0, &u, 10_000, HORIZON + 1, 12);
        let oracle = oracle_from_system(&sys).map_err(|e| e.to_string())?;
        let res = residual_check(&mc, &oracle, &noise.eps_bound).map_err(|e| e.to_string())?;
        if res.inside != res.total {
            return Err(format!(
                "{variant:?}: {} of {} residuals leave the bound",
                res.total - res.inside,
                res.total
            ));
        }
        let context: Vec<Zonotope> = (0..N_O)
            .map(|k| pca_fit(&mc.iter().map(|t| t.outputs[k].clone()).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let z0 = initial_lifted_set(&context, &vec![u.clone(); N_O]).map_err(|e| e.to_string())?;
        let reach =
            run_reachability(&ms, &z0, &[u.clone()], &noise.eps_bound, HORIZON, 200).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for t in &mc {
            for s in &reach.output_sets {
                worst = worst.max(s.set.inflation_score(&t.outputs[s.step]).map_err(|e| e.to_string())?);
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if worst > MEMBERSHIP_TOL {
            return Err(format!("{variant:?}: worst score {worst:e}"));
        }
        if secs >= 120.0 {
            return Err(format!("{variant:?}: took {secs:.1}s"));
        }
        details.push(format!("{variant:?} worst {worst:.1e} in {secs:.1}s"));
    }
    Ok(format!("10000 trajectories, steps 5..=8; {}", details.join(", ")))
}

fn random_observable(rng: &mut ChaCha8Rng, nx: usize, ny: usize, nu: usize) -> LtiSystem {
    let mut draw = |r, c| DenseMatrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    loop {
        let a = draw(nx, nx).scale(0.9 / (nx as f64).sqrt());
        let b = draw(nx, nu);
        let c = draw(ny, nx);
        if let Ok(s) = LtiSystem::new(a, b, c, 1.0) {
            return s;
        }
    }
}

fn theta_score(
    sys: &LtiSystem,
    noise: &NoiseSpec,
    x0: &Zonotope,
    u: &Zonotope,
    t: usize,
    seed: u64,
) -> Result<f64, String> {
    let oracle = oracle_from_system(sys).map_err(|e| e.to_string())?;
    let ident = dataset(sys, noise, x0, u, 1, t + oracle.n_o + 1, seed);
    let lr = build_lifted(&ident, oracle.n_o).map_err(|e| e.to_string())?;
    let meps = build_noise_matzono(&noise.eps_bound, lr.t(), lr.p(), NoiseEmbedding::OutputBlock)
        .map_err(|e| e.to_string())?;
    let ms = build_model_set(&lr, &meps, DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
    ms.msigma.inflation_score(&oracle.theta).map_err(|e| e.to_string())
}

fn true_parameters_in_model_set() -> Check {
    let mut worst = 0.0f64;
    for variant in CVariant::all() {
        let sys = LtiSystem::default_five(variant);
        let noise = NoiseSpec::default_for(&sys);
        let s = theta_score(
            &sys,
            &noise,
            &box_set(vec![1.0; 5], 0.1),
            &box_set(vec![10.0], 0.25),
            50,
            21,
        )?;
        if s > 1e-7 {
            return Err(format!("default system {variant:?}: score {s:e}"));
        }
        worst = worst.max(s);
    }
    let mut r = rng(22);
    for i in 0..20 {
        let (nx, ny, nu) = (r.gen_range(1..=5), r.gen_range(1..=2), r.gen_range(1..=2));
        let sys = random_observable(&mut r, nx, ny, nu);
        let oracle = oracle_from_system(&sys).map_err(|e| e.to_string())?;
        let w_box = box_set(vec![0.0; nx], 1e-3);
        let v_box = box_set(vec![0.0; ny], 1e-3);
        let hull = oracle
            .residual_set(&sys, &w_box, &v_box)
            .map_err(|e| e.to_string())?
            .interval_hull();
        let center: Vec<f64> = hull
            .lower()
            .iter()
            .zip(hull.upper())
            .map(|(l, u)| 0.5 * (l + u))
            .collect();
        let radius: Vec<f64> = hull.widths().iter().map(|w| 0.5 * w).collect();
        let noise = NoiseSpec {
            w_box,
            v_box,
            eps_bound: Zonotope::from_box(center, &radius).unwrap(),
        };
        let rows = nx * (ny + nu) + nu;
        let s = theta_score(
            &sys,
            &noise,
            &box_set(vec![0.0; nx], 1.0),
            &box_set(vec![0.0; nu], 1.0),
            2 * rows + 10,
            100 + i,
        )?;
        if s > 1e-7 {
            return Err(format!("random system {i} (n_x={nx}, n_y={ny}, n_u={nu}): score {s:e}"));
        }
        worst = worst.max(s);
    }
    Ok(format!(
        "default C_a/C_b/C_c and 20 random systems, worst score {worst:.1e}"
    ))
}

fn random_zonotope(r: &mut ChaCha8Rng, dim: usize, gens: usize) -> Zonotope {
    let c: Vec<f64> = (0..dim).map(|_| r.gen_range(-3.0..3.0)).collect();
    let g: Vec<Vec<f64>> = (0..gens)
        .map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    Zonotope::new(c, &g).unwrap()
}

fn tightened_inside_dd() -> Check {
    let mut r = rng(31);
    let mut worst = f64::NEG_INFINITY;
    let mut shrunk = 0;
    for i in 0..100 {
        let dim = r.gen_range(1..=3);
        let gens = r.gen_range(1..=8);
        let ydd = random_zonotope(&mut r, dim, gens);
        let rad = ydd.radius();
        let strip = Strip {
            center: ydd
                .center()
                .iter()
                .zip(&rad)
                .map(|(c, q)| c + r.gen_range(-0.5..0.5) * q)
                .collect(),
            radius: rad.iter().map(|q| q * r.gen_range(0.2..1.5)).collect(),
        };
        let rep = directional_contract(&ydd, &Certificate::Strip(strip), 0, 201).map_err(|e| e.to_string())?;
        if rep.lambdas.iter().any(|l| *l < 1.0) {
            shrunk += 1;
        }
        for d in probe_directions(dim, 128, 1000 + i) {
            let v = rep.tightened.support(&d).unwrap() - ydd.support(&d).unwrap();
            worst = worst.max(v);
        }
    }
    if worst > 1e-9 {
        return Err(format!("support violation {worst:e}"));
    }
    Ok(format!(
        "100 pairs x 128 directions, max violation {worst:.1e}, {shrunk} pairs contracted"
    ))
}

fn fitted_sets_contain_points() -> Check {
    let mut r = rng(41);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let dim = r.gen_range(1..=4);
        let size = if i < 4 { i + 1 } else { r.gen_range(1..=500) };
        let mix: Vec<f64> = (0..dim * dim).map(|_| r.gen_range(-2.0..2.0)).collect();
        let rank = if i % 7 == 0 { 1 } else { dim };
        let offset: Vec<f64> = (0..dim).map(|_| r.gen_range(-10.0..10.0)).collect();
        let pts: Vec<Vec<f64>> = (0..size)
            .map(|_| {
                let z: Vec<f64> = (0..dim)
                    .map(|k| {
                        if k < rank {
                            (0..3).map(|_| r.gen_range(-1.0..1.0)).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (0..dim)
                    .map(|a| offset[a] + (0..dim).map(|b| mix[a * dim + b] * z[b]).sum::<f64>())
                    .collect()
            })
            .collect();
        let z = pca_fit(&pts).map_err(|e| format!("cloud {i}: {e}"))?;
        for p in &pts {
            worst = worst.max(z.inflation_score(p).map_err(|e| e.to_string())?);
        }
    }
    if worst > MEMBERSHIP_TOL {
        return Err(format!("worst score {worst:e}"));
    }
    Ok(format!("200 clouds, worst score {worst:.1e}"))
}

fn grid_minimum(res: &[f64], gens: &[f64], k: usize) -> f64 {
    let mut lo = vec![-1.0; k];
    let mut hi = vec![1.0; k];
    let mut best = f64::INFINITY;
    let mut best_beta = vec![0.0; k];
    const N: usize = 21;
    for _ in 0..10 {
        let mut idx = vec![0usize; k];
        loop {
            let beta: Vec<f64> = (0..k)
                .map(|j| lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (N - 1) as f64)
                .collect();
            let v = inf_residual(res, gens, &beta);
            if v < best {
                best = v;
                best_beta = beta;
            }
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < N {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
        for j in 0..k {
            let half = (hi[j] - lo[j]) / 4.0;
            lo[j] = (best_beta[j] - half).max(-1.0);
            hi[j] = (best_beta[j] + half).min(1.0);
        }
    }
    best
}

fn lp_matches_grid() -> Check {
    let mut r = rng(51);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = r.gen_range(1..=3);
        let k = r.gen_range(1..=3);
        let res: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let gens: Vec<f64> = (0..n * k).map(|_| r.gen_range(-1.0..1.0)).collect();
        let lp = solve_min_inflation_flat(&res, &gens).map_err(|e| format!("instance {i}: {e}"))?;
        let grid = grid_minimum(&res, &gens, k);
        if lp.t > grid + 1e-9 {
            return Err(format!("instance {i}: LP {} above grid {grid}", lp.t));
        }
        worst = worst.max(grid - lp.t);
    }
    if worst > 2e-3 {
        return Err(format!("max gap {worst:e}"));
    }
    Ok(format!("100 instances, max gap {worst:.1e}"))
}

fn quantile_exactness() -> Check {
    let scores: Vec<f64> = (1..=200).rev().map(|i| i as f64).collect();
    let q = quantile(&scores, 0.05).map_err(|e| e.to_string())?;
    let rank = quantile_rank(200, 0.05);
    if q != 191.0 || rank != 191 {
        return Err(format!("n=200 gave q={q}, rank {rank}"));
    }
    let q4 = quantile(&[0.1, 0.2, 0.3, 0.4], 0.05).map_err(|e| e.to_string())?;
    if q4 != f64::INFINITY {
        return Err(format!("n=4 gave {q4}"));
    }
    Ok("n=200 picks the 191st smallest, n=4 gives +inf".into())
}

fn synthetic_coverage() -> Check {
    const DRAWS: usize = 10_000;
    let floor = 0.95 - 3.0 * (0.05f64 * 0.95 / DRAWS as f64).sqrt();
    let mut r = rng(61);
    let mut lowest = 1.0f64;
    let mut cal = vec![0.0; 200];
    for rep in 0..20 {
        let mut covered = 0usize;
        for _ in 0..DRAWS {
            cal.iter_mut().for_each(|s| *s = r.gen::<f64>());
            let q = quantile(&cal, 0.05).map_err(|e| e.to_string())?;
            if r.gen::<f64>() <= q {
                covered += 1;
            }
        }
        let cov = covered as f64 / DRAWS as f64;
        if cov < floor {
            return Err(format!("repetition {rep}: coverage {cov} < {floor:.4}"));
        }
        lowest = lowest.min(cov);
    }
    Ok(format!(
        "20 x 10000 draws, lowest coverage {lowest:.4} (floor {floor:.4})"
    ))
}

fn end_to_end_coverage(report: &EvaluationReport) -> Check {
    let n = report.per_step_mode.n_test;
    let floor = 0.95 - 3.0 * (0.05f64 * 0.95 / n as f64).sqrt();
    let per_step = report.per_step_mode.min_per_step();
    let joint = report.joint_mode.joint;
    let text = format!("n_test {n}, min per-step {per_step:.3}, joint {joint:.3}, floor {floor:.3}");
    if n < 1000 || per_step < floor || joint < floor {
        Err(text)
    } else {
        Ok(text)
    }
}

fn table_column(table: &str, name: &str) -> BTreeMap<usize, f64> {
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = header.iter().position(|h| *h == name).expect("column");
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[col].parse().unwrap())
        })
        .collect()
}

fn structural_conservatism(table: &str, n_o: usize) -> Check {
    let dd = table_column(table, "dd_width");
    let model = table_column(table, "model_width");
    let w: Vec<f64> = (n_o + 1..=n_o + 3).map(|k| dd[&k]).collect();
    let text = format!(
        "dd widths {:.3e} {:.3e} {:.3e}, model-based {:.3e}",
        w[0],
        w[1],
        w[2],
        model[&(n_o + 1)]
    );
    if w.windows(2).all(|p| p[1] > p[0]) && w[0] >= 2.0 * model[&(n_o + 1)] {
        Ok(text)
    } else {
        Err(text)
    }
}

fn causal_attention() -> Check {
    let arch = Architecture::new(32, 4, 2, 64, 2, 8, 5);
    let base = WeightBundle::random(arch.clone(), 71).map_err(|e| e.to_string())?;
    let mut r = rng(72);
    let prompt: Vec<Vec<f64>> = (0..arch.n_o * (1 + arch.k_g))
        .map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let reference = Transformer::from_bundle(&base)
        .and_then(|m| m.forward(&prompt))
        .map_err(|e| e.to_string())?;
    let d = arch.d_model;
    for j in 0..=arch.k_g {
        let mut wb = base.clone();
        let q = wb.tensor_mut("query_tokens").map_err(|e| e.to_string())?;
        q[j * d..(j + 1) * d].iter_mut().for_each(|v| *v += 0.5);
        let out = Transformer::from_bundle(&wb)
            .and_then(|m| m.forward(&prompt))
            .map_err(|e| e.to_string())?;
        if let Some(i) = (0..j).find(|&i| out[i] != reference[i]) {
            return Err(format!("perturbing query {j} changed output {i}"));
        }
        if out[j] == reference[j] {
            return Err(format!("perturbing query {j} left output {j} unchanged"));
        }
    }
    Ok(format!(
        "{} query positions, earlier outputs bitwise unchanged",
        arch.k_g + 1
    ))
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn byte_identical(a: &Path, b: &Path) -> Check {
    let fa = files_under(a);
    if fa != files_under(b) {
        return Err("artifact lists differ".into());
    }
    let json = fa
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "jsonl"))
        .count();
    for f in &fa {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(format!("{} artifacts identical ({json} JSON)", fa.len()))
}

fn run_pipeline(out: &Path) -> Result<(), String> {
    let overrides = Overrides {
        out: Some(out.to_path_buf()),
        ..Default::default()
    };
    let exp = load(&five_state_config(), &overrides).map_err(|e| e.to_string())?;
    run_all(&exp).map(|_| ()).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut record = |name, f: &dyn Fn() -> Check| {
        let start = Instant::now();
        let r = f();
        let line = match &r {
            Ok(d) => format!("PASS  {name}: {d} [{:.1}s]", start.elapsed().as_secs_f64()),
            Err(d) => format!("FAIL  {name}: {d}"),
        };
        println!("{line}");
        results.push((name, r));
    };

    record("dd output sets contain monte carlo outputs", &dd_containment);
    record("true parameters lie in the model set", &true_parameters_in_model_set);
    record("tightened sets stay inside dd sets", &tightened_inside_dd);
    record("fitted sets contain their point clouds", &fitted_sets_contain_points);
    record("simplex LP matches grid search", &lp_matches_grid);
    record("conformal quantile order statistic", &quantile_exactness);
    record("synthetic conformal coverage", &synthetic_coverage);

    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs = run_pipeline(dirs.0.path()).and_then(|_| run_pipeline(dirs.1.path()));
    let artifact = |rel: &str| std::fs::read_to_string(dirs.0.path().join(rel)).map_err(|e| format!("{rel}: {e}"));
    record("end-to-end conformal coverage", &|| {
        runs.clone()?;
        let report: EvaluationReport =
            serde_json::from_str(&artifact("evaluate/coverage.json")?).map_err(|e| e.to_string())?;
        end_to_end_coverage(&report)
    });
    record("dd sets grow and dominate model-based sets", &|| {
        runs.clone()?;
        structural_conservatism(&artifact("report/table.csv")?, 5)
    });
    record("causal attention over query positions", &causal_attention);
    record("pipeline rerun is byte-identical", &|| {
        runs.clone()?;
        byte_identical(dirs.0.path(), dirs.1.path())
    });

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
