//! Regenerates `data/bunching_table.toml` on stdout.

use ctw_core::averaging::{BunchingTable, TableParameters};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = BunchingTable::compute(TableParameters::default(), &BunchingTable::DEFAULT_Q)?;
    print!("{}", table.to_toml()?);
    Ok(())
}
