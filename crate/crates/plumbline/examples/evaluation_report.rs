//! The evaluation protocol end to end: train briefly, then produce the
//! method-comparison table, the assume-upright baseline, and the tilt
//! breakdown.

use plumbline::calibnet::{forward, init_params, NetDims};
use plumbline::evalkit::{
    assume_upright, render_summary_table, render_tilt_table, summarize, tilt_breakdown,
    tilt_edges_60, UprightFrame,
};
use plumbline::geom3::angle_deg;
use plumbline::losses::LossWeights;
use plumbline::trainer::{make_synth, train_loop, SynthConfig, TrainConfig};

fn main() -> plumbline::Result<()> {
    let synth = SynthConfig { n_train: 6000, n_val: 1500, ..SynthConfig::default() };
    let (train, val) = make_synth(&synth)?;
    let params = init_params(NetDims::default(), 42)?;
    // Demo-scale: fewer samples than the full run, so a hotter rate.
    let cfg = TrainConfig { epochs: 20, lr_heads: 5e-4, ..TrainConfig::default() };
    let (trained, _) = train_loop(params, &train, &val, &LossWeights::default(), &cfg)?;

    let outputs: Vec<_> = val
        .iter()
        .map(|s| forward(&trained, &s.f, s.g_prior).map(|(o, _)| o))
        .collect::<Result<_, _>>()?;

    let upright = assume_upright(val.len(), UprightFrame::Arkit);
    let rows = vec![
        (
            "assume-upright",
            summarize(
                &val.iter()
                    .zip(&upright)
                    .map(|(s, u)| angle_deg(*u, s.g_star))
                    .collect::<Vec<_>>(),
            )?,
        ),
        (
            "prior",
            summarize(&val.iter().map(|s| s.prior_error_deg).collect::<Vec<_>>())?,
        ),
        (
            "image-only",
            summarize(
                &val.iter()
                    .zip(&outputs)
                    .map(|(s, o)| angle_deg(o.g_img, s.g_star))
                    .collect::<Vec<_>>(),
            )?,
        ),
        (
            "fused",
            summarize(
                &val.iter()
                    .zip(&outputs)
                    .map(|(s, o)| angle_deg(o.g_pred, s.g_star))
                    .collect::<Vec<_>>(),
            )?,
        ),
    ];
    println!("angular error on the validation split (degrees):\n");
    print!("{}", render_summary_table(&rows));

    let frames: Vec<_> = val
        .iter()
        .zip(&outputs)
        .map(|(s, o)| (o.g_pred, s.g_star))
        .collect();
    println!("\nfused error by camera tilt:\n");
    print!("{}", render_tilt_table(&tilt_breakdown(&frames, &tilt_edges_60())?));
    Ok(())
}
