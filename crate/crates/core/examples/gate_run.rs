//! Runs one preset at the default configuration and prints the fidelity trace.
//!
//! `cargo run --release -p cpcgate --example gate_run -- S3 10.0`

use cpcgate::waveshapes::build_preset;
use cpcgate::{run, Preset, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().as_deref().unwrap_or("S1").parse()?;
    let mut cfg = SimConfig::for_preset(preset);
    if let Some(g) = args.next() {
        cfg.gamma = g.parse()?;
    }
    let input = build_preset(preset, &cfg.eta, &cfg.nu)?;
    let t = std::time::Instant::now();
    let rec = run(&input, &cfg)?;
    let stride = (rec.steps / 20).max(1);
    for n in (0..=rec.steps).step_by(stride) {
        println!(
            "z={:+.3} F={:.6} n_si={:.6} n_a={:.3e} front={:+.4}",
            rec.z_trace[n], rec.fidelity_trace[n], rec.norm_si_trace[n], rec.norm_a_trace[n], rec.front_trace[n]
        );
    }
    println!(
        "{preset} gamma={} F(L/2)={:.6} overlap={:.6} drift={:.2e} ({:.1?})",
        cfg.gamma,
        rec.final_fidelity(),
        rec.final_overlap(),
        rec.max_conservation_drift(),
        t.elapsed()
    );
    Ok(())
}
