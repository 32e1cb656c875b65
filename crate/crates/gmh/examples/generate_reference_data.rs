//! Regenerates the checked-in reference dataset `data/toy_y100.csv`
//! (toy model, T = 100, true υ = 0, seed 20170401, stream 0).
//!
//! Run from the crate root: `cargo run --example generate_reference_data`

use gmh::rng::RngStream;
use gmh::targets::simulate_toy_data;

fn main() {
    let mut rng = RngStream::new(20170401, 0);
    let data = simulate_toy_data(100, 0.0, &mut rng);
    let mut out = String::from("y\n");
    for y in data {
        out.push_str(&format!("{y:?}\n"));
    }
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_y100.csv");
    std::fs::write(path, out).expect("write dataset");
    println!("wrote {path}");
}
