//! Does the learned gate track prior quality? Train briefly, then bin
//! the gate value by the true prior error and by the accelerometer
//! non-gravity ratio, neither of which the gate sees directly.

use plumbline::calibnet::{forward, init_params, NetDims};
use plumbline::evalkit::{gate_diagnostics, render_gate_table, GateFrame};
use plumbline::losses::LossWeights;
use plumbline::trainer::{make_synth, train_loop, SynthConfig, TrainConfig};

fn main() -> plumbline::Result<()> {
    let synth = SynthConfig { n_train: 8000, n_val: 2000, ..SynthConfig::default() };
    let (train, val) = make_synth(&synth)?;
    let params = init_params(NetDims::default(), 42)?;
    // Demo-scale: fewer samples than the full run, so a hotter rate.
    let cfg = TrainConfig { epochs: 25, lr_heads: 5e-4, ..TrainConfig::default() };
    let (trained, _) = train_loop(params, &train, &val, &LossWeights::default(), &cfg)?;

    let frames: Vec<GateFrame> = val
        .iter()
        .map(|s| {
            let (out, _) = forward(&trained, &s.f, s.g_prior)?;
            Ok(GateFrame {
                tau: out.tau,
                prior_error_deg: s.prior_error_deg,
                nongravity_ratio: s.nongravity_ratio,
            })
        })
        .collect::<plumbline::Result<_>>()?;

    let (by_error, by_ratio) = gate_diagnostics(&frames)?;
    println!("gate value binned by prior error:\n");
    print!("{}", render_gate_table(&by_error, "prior error (deg)"));
    println!("\ngate value binned by non-gravity ratio:\n");
    print!("{}", render_gate_table(&by_ratio, "non-gravity ratio"));
    Ok(())
}
