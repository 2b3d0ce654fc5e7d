//! Encodes a region grasp into head targets, decodes it back and evaluates
//! the training loss for an untrained and an ideal output.

use regiongrasp::codec::{loss_total, Codec, HeadOutputs, LossConfig};
use regiongrasp::geom::{RegionGrasp, Vec3};

fn main() -> regiongrasp::Result<()> {
    let codec = Codec::default();
    let g = RegionGrasp { dt: Vec3::new(0.004, -0.011, 0.007), theta: 1.1, beta: 0.3, gamma: -0.2, width: 0.052, score: 1.0 };
    let targets = codec.encode(&g)?;
    let ideal = codec.idealize(&targets);
    // Position, theta and width come back exactly; beta and gamma snap to
    // the nearest orientation anchor.
    let back = &codec.decode_region(&ideal, 1)?[0];
    println!("input   {g:?}");
    println!("decoded {back:?}");
    println!("offset error {:.2e} m, width error {:.2e} m", (back.dt - g.dt).norm(), (back.width - g.width).abs());

    let cfg = LossConfig::default();
    for (name, out) in [("zeros", HeadOutputs::zeros()), ("ideal", ideal)] {
        let loss = loss_total(&out, &targets, &cfg);
        let grad_norm = loss.grad.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("{name}: total {:.4}, terms {:?}, |grad| {grad_norm:.3}", loss.total, loss.terms);
    }
    Ok(())
}
