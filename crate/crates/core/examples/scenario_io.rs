//! Parse a scenario, run it, and round-trip the trajectory through the
//! CSV + JSON sidecar format.

use ebmm::io::{load_scenario, read_trajectory, write_trajectory};
use ebmm::{presets, simulate};

fn main() -> ebmm::Result<()> {
    let s = load_scenario(&presets::data_dir().join("sellers_table.json"))?;
    println!("{}", s.echo());
    let traj = simulate(&s.params, s.u0(), s.t_end(), &s.simulation_options())?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trajectory.csv");
    write_trajectory(&traj, &path)?;
    let back = read_trajectory(&path)?;
    println!("stored states: {}, round trip exact: {}", back.len(), back == traj);
    Ok(())
}
