//! EER, DET operating points and t-DCF on a small score set.
//!
//!     cargo run --example detection_metrics

use spoofguard::metrics::{det_curve, evaluate, tdcf_constants, TdcfParams};
use spoofguard::{compute_eer, min_tdcf_normalized, ScoreSet, TdcfCosts};

fn main() -> anyhow::Result<()> {
    let scores = ScoreSet::new(vec![0.8, 0.7, 0.3], vec![0.2, 0.6, 0.4]);

    println!("{:>10} {:>8} {:>8}", "threshold", "FAR", "FRR");
    let det = det_curve(&scores)?;
    for i in 0..det.len() {
        println!(
            "{:>10.3} {:>8.4} {:>8.4}",
            det.thresholds[i], det.far[i], det.frr[i]
        );
    }

    let eer = compute_eer(&scores)?;
    println!(
        "EER {:.4}% at threshold {:.3}",
        eer.eer * 100.0,
        eer.threshold
    );

    let unit = TdcfCosts::new(1.0, 1.0);
    println!(
        "min t-DCF with C1 = C2 = 1: {:.6}",
        min_tdcf_normalized(&scores, &unit)?
    );

    // a perfect ASV system in tandem with the countermeasure
    let costs = tdcf_constants(&TdcfParams::default())?;
    print!("{}", evaluate(&scores, &costs)?.to_text());

    // an ASV system that itself misses 5% of targets and accepts 60% of spoofs
    let weak_asv = TdcfParams {
        pmiss_asv: 0.05,
        pfa_asv: 0.01,
        pmiss_spoof_asv: 0.4,
        ..TdcfParams::default()
    };
    let c = tdcf_constants(&weak_asv)?;
    println!(
        "weaker ASV: C1 = {:.4}, C2 = {:.4}, min t-DCF = {:.6}",
        c.c1,
        c.c2,
        min_tdcf_normalized(&scores, &c)?
    );
    Ok(())
}
