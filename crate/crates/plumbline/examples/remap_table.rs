//! Precompute the fused undistort+resize lookup table for a distorted
//! camera and inspect a few entries.

use plumbline::ingest::{build_remap_table, read_remap, write_remap, Intrinsics};

fn main() -> plumbline::Result<()> {
    let intr = Intrinsics {
        fx: 1453.0,
        fy: 1452.3,
        cx: 959.1,
        cy: 718.5,
        dist: [0.08, -0.11, 0.0006, -0.0004, 0.04],
        width: 1920,
        height: 1440,
    };
    let table = build_remap_table(&intr, (224, 224))?;

    println!("source coordinates for a 224x224 rectified crop:");
    for (u, v) in [(0u32, 0u32), (112, 112), (223, 0), (223, 223)] {
        let uv = table.at(u, v);
        println!("  out ({u:3}, {v:3}) <- src ({:8.2}, {:8.2})", uv[0], uv[1]);
    }

    let path = std::env::temp_dir().join("plumbline_remap_example.grmp");
    write_remap(&path, &table)?;
    let reloaded = read_remap(&path)?;
    println!(
        "round trip through {}: identical = {}",
        path.display(),
        reloaded == table
    );
    Ok(())
}
