//! Regenerates `tests/fixtures/synthetic_returns.csv`: 1567 days of 18
//! iid Student-t(3) return series with unit volatility, seed 1567.
//!
//! cargo run --example generate_fixture

use std::fmt::Write as _;
use std::path::Path;

use svlab::distributions::LawSpec;
use svlab::field::CoefficientField;
use svlab::io::atomic_write;
use svlab::model::{simulate_panel, ModelSpec, Regime};

pub const SEED: u64 = 1567;

fn main() -> svlab::Result<()> {
    let spec = ModelSpec {
        regime: Regime::Case1HeavyZ,
        z_law: LawSpec::student_t(3.0),
        eta_law: LawSpec::constant(0.0),
        field: CoefficientField::single(),
        p: 18,
        n: 1567,
        master_seed: SEED,
    };
    let panel = simulate_panel(&spec)?;
    let mut out = String::from("# synthetic returns: iid student_t(3), p=18, n=1567, seed=1567\ndate");
    for i in 1..=panel.p() {
        write!(out, ",FX{i:02}").unwrap();
    }
    out.push('\n');
    for t in 0..panel.n() {
        write!(out, "day{:04}", t + 1).unwrap();
        for i in 0..panel.p() {
            write!(out, ",{}", panel.get(i, t)).unwrap();
        }
        out.push('\n');
    }
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_returns.csv");
    atomic_write(&path, out.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}
