//! Writes a synthetic GazeCapture-style dataset tree for trying the
//! pipeline without the real dataset.
//!
//! Usage: `cargo run -p gazekit --example make_fixture -- OUT_DIR
//! [participants] [dots] [frames_per_dot] [seed]`

use gazekit::synth::{write_fixture_tree, SynthSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let root = std::path::PathBuf::from(args.next().unwrap_or_else(|| {
        eprintln!("usage: make_fixture OUT_DIR [participants] [dots] [frames_per_dot] [seed]");
        std::process::exit(1);
    }));
    let mut num = |default: usize| {
        args.next()
            .map(|v| v.parse().expect("numeric argument"))
            .unwrap_or(default)
    };
    let spec = SynthSpec {
        participants: num(8),
        dots_per_participant: num(12),
        frames_per_dot: num(5),
        seed: num(77) as u64,
        ..SynthSpec::default()
    };
    std::fs::create_dir_all(&root).expect("create output dir");
    write_fixture_tree(&root, &spec).expect("write fixture");
    println!(
        "wrote {} participants x {} dots x {} frames to {}",
        spec.participants,
        spec.dots_per_participant,
        spec.frames_per_dot,
        root.display()
    );
}
