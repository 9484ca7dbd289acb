//! Train the calibrator on a reduced synthetic dataset and watch the
//! loss terms and validation angles per epoch. The full-scale defaults
//! take a few minutes; this keeps the demo under half a minute.

use plumbline::calibnet::{init_params, NetDims};
use plumbline::losses::LossWeights;
use plumbline::trainer::{make_synth, train_loop, SynthConfig, TrainConfig};

fn main() -> plumbline::Result<()> {
    let synth = SynthConfig {
        n_train: 4000,
        n_val: 1000,
        ..SynthConfig::default()
    };
    let (train, val) = make_synth(&synth)?;
    println!(
        "{} train / {} val samples, C = {}, mean prior error {:.2} deg",
        train.len(),
        val.len(),
        synth.c,
        val.iter().map(|s| s.prior_error_deg).sum::<f64>() / val.len() as f64
    );

    let params = init_params(NetDims::default(), 42)?;
    // Demo-scale: fewer samples than the full run, so a hotter rate.
    let cfg = TrainConfig { epochs: 15, lr_heads: 5e-4, ..TrainConfig::default() };
    let (_trained, history) = train_loop(params, &train, &val, &LossWeights::default(), &cfg)?;

    println!("\nepoch      lr     train    val     pred   corr    img  prior");
    for e in &history {
        println!(
            "{:>5} {:.1e}  {:.4} {:.4}  {:6.2} {:6.2} {:6.2} {:6.2}",
            e.epoch,
            e.lr,
            e.train.total,
            e.val.total,
            e.val_angles.pred_deg,
            e.val_angles.corr_deg,
            e.val_angles.img_deg,
            e.val_angles.prior_deg
        );
    }
    Ok(())
}
