//! Shared input builders for the benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A reasoning-trace-shaped text of roughly `paragraphs` marker-led
/// paragraphs with interleaved code blocks.
pub fn synthetic_trace(paragraphs: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let openers = ["So", "Wait,", "Now", "Therefore", "Alternatively,", "Hmm,"];
    let mut out = String::new();
    for i in 0..paragraphs {
        let opener = openers[rng.gen_range(0..openers.len())];
        out.push_str(&format!(
            "{opener} step {i} checks the value {} against the running total and keeps the loop invariant intact. ",
            rng.gen_range(0..100)
        ));
        if rng.gen_bool(0.15) {
            out.push_str("\n```\nfor v in values:\n    total += v\n```\n");
        }
        if rng.gen_bool(0.3) {
            out.push('\n');
        }
    }
    out
}

/// Random labeled dataset with an informative first feature.
pub fn classification_dataset(rows: usize, cols: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        y.push((row[0] > 0.0) as u8);
        x.push(row);
    }
    (x, y)
}
