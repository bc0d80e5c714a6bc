//! Saves a network in the text format and loads it back bit for bit.

use sbn::train::init_uniform;
use sbn::{netio, NetworkSpec};

fn main() -> sbn::Result<()> {
    let net = init_uniform(&NetworkSpec::dense(2, &[3, 2], 2), 11)?;
    let text = netio::to_text(&net);
    print!("{text}");

    let path = std::env::temp_dir().join("sbn_example_net.txt");
    netio::save(&net, &path)?;
    let back = netio::load(&path)?;
    println!("reloaded from {}: identical = {}", path.display(), back == net);
    Ok(())
}
