//! Regenerates the synthetic files under `corpora/`.
//!
//! Usage: `cargo run -p ppress --example gen_corpora -- <corpora dir>`

use std::path::PathBuf;

/// Seed and row count for the schema-comment family.
const SCHEMA_SEED: u64 = 20_240_101;
const SCHEMA_ROWS: usize = 16_384;
const PERIOD: &[u8] = b"abca";
const PERIODIC_LEN: usize = 64 * 1024;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpora".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("schema.txt"),
        ppress::synth::schema_comments(SCHEMA_SEED, SCHEMA_ROWS),
    )?;
    std::fs::write(
        dir.join("periodic.txt"),
        ppress::synth::periodic(PERIOD, PERIODIC_LEN),
    )?;
    Ok(())
}
