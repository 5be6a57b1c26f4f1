//! Re-tunes the singlet branching ratio so that |0,↓⟩ yields the requested
//! multiple of |1,↓⟩ counts over the readout window.
//!
//! cargo run --release -p nvtrace-core --example calibrate_contrast -- 1.30

use nvtrace_core::photodynamics::{calibrate_singlet_branching, contrast, simulate_basis_traces};
use nvtrace_core::RateModelConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.30);
    let base = RateModelConfig::default();
    let tuned = calibrate_singlet_branching(&base, target)?;
    let basis = simulate_basis_traces(&tuned)?;
    println!("singlet_branch_ms0 = {:.6}", tuned.singlet_branch_ms0);
    println!("contrast           = {:.6}", contrast(&basis));
    println!("totals per sweep   = {:?}", basis.totals());
    Ok(())
}
