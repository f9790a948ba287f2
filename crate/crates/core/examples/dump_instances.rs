//! Regenerates the bundled constraint-graph instance files.
//!
//! Usage: `cargo run -p pdqma-core --example dump_instances -- <output-dir>`

use std::path::Path;

use pdqma_core::pcp;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "instances".into());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir).expect("create output directory");
    for name in ["tri16", "k4bin", "path8"] {
        let instance = pcp::builtin(name).expect("bundled instance");
        let path = dir.join(format!("{name}.txt"));
        std::fs::write(&path, instance.to_text()).expect("write instance file");
        println!("wrote {}", path.display());
    }
}
