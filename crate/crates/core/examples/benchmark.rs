//! Seeded clutter benchmark with the analytic predictor: every visible
//! object is a target once, guided by its mask.

use regiongrasp::detector::AnalyticPredictor;
use regiongrasp::eval::{run_benchmark, BenchmarkConfig};

fn main() -> regiongrasp::Result<()> {
    let n_scenes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let start = std::time::Instant::now();
    let report = run_benchmark(n_scenes, 7, &AnalyticPredictor::default(), &BenchmarkConfig::default())?;
    for s in &report.scenes {
        let ok = s.episodes.iter().filter(|e| e.success).count();
        println!("scene {:>2} seed {:>20} objects {} targets {} successes {}", s.index, s.scene_seed, s.n_objects, s.episodes.len(), ok);
    }
    println!("{}/{} episodes succeeded ({:.1}%) in {:.1} s", report.successes, report.episodes, 100.0 * report.success_rate, start.elapsed().as_secs_f64());
    Ok(())
}
