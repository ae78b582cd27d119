// scratch calibration probe, not part of the deliverable
use std::time::Instant;
use wrfm_core::config::ConfigFile;
use wrfm_core::solver::run_problem;

fn main() {
    for name in ["poisson3d", "heat3d"] {
        for k in [10usize] {
            for bw in [1.0f64, 10.0] {
                for rcond in [1e-12f64, 1e-8] {
                    let mut cfg = ConfigFile::with_problem(name);
                    cfg.seed = Some(1);
                    cfg.test_counts = Some(vec![k, k, k]);
                    cfg.features_per_subdomain = Some(if name == "poisson3d" { 100 } else { 200 });
                    cfg.boundary_weight = Some(bw);
                    cfg.rcond = Some(rcond);
                    let (problem, resolved) = cfg.resolve().unwrap();
                    let t = Instant::now();
                    match run_problem(&problem, &resolved) {
                        Ok((_, report, m)) => println!(
                            "{name} K={k} bw={bw} rcond={rcond:.0e}: l2={:.4} linf={:.4} rank={}/{} rows={} t={:.1}s",
                            m.l2, m.linf, report.effective_rank, report.cols, report.rows,
                            t.elapsed().as_secs_f64()
                        ),
                        Err(e) => println!("{name} K={k}: ERROR {e}"),
                    }
                }
            }
        }
    }
}
